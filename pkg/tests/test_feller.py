import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopbranch import (
    ContractViolation,
    DomainError,
    NO_STOP,
    Configuration,
    Modulation,
    NonConvergenceError,
    SeriesControl,
    StoppingSet,
    TypeSpace,
    build_generator,
    enumerate_truncated,
    solve,
    solve_matrix,
    solve_stopped,
)
from stopbranch.feller import stopped_term0, term0, term_k
from stopbranch.oracle import distribution, transition

from conftest import BD_EXTINCTION, one

CTL = SeriesControl(k_max=120)


class TestTerms:
    def test_term0(self, bd_Q):
        t = term0(bd_Q, 0.0, 0.5, one(2))
        assert t.values[bd_Q.space.index(one(2))] == pytest.approx(math.exp(-1.5), rel=1e-13)
        assert t.mass == pytest.approx(math.exp(-1.5), rel=1e-13)

    def test_term1_entry(self, bd_Q):
        t1 = term_k(bd_Q, None, 0.0, 0.5, one(1), 1, term0(bd_Q, 0.0, 0.5, one(1)))
        # death of the single particle within 0.5
        exact = (0.5 / 1.5) * (1 - math.exp(-0.75))
        assert t1.values[bd_Q.space.index(Configuration())] == pytest.approx(exact, rel=1e-12)
        assert exact == pytest.approx(0.1758778, abs=1e-7)

    def test_one_jump_never_returns(self, bd_Q):
        t1 = term_k(bd_Q, None, 0.0, 1.0, one(2), 1, term0(bd_Q, 0.0, 1.0, one(2)))
        assert t1.values[bd_Q.space.index(one(2))] == 0.0

    def test_needs_previous_term(self, bd_Q):
        with pytest.raises(ContractViolation):
            term_k(bd_Q, None, 0.0, 1.0, one(1), 2, None)
        with pytest.raises(ContractViolation):
            term_k(bd_Q, None, 0.0, 1.0, one(1), 2, term0(bd_Q, 0.0, 1.0, one(1)))
        with pytest.raises(DomainError):
            term_k(bd_Q, None, 0.0, 1.0, one(1), 0, None)

    def test_stopped_terms_need_matching_sweep(self, bd_Q, S3):
        t0 = term0(bd_Q, 0.0, 1.0, one(1))
        with pytest.raises(ContractViolation):
            term_k(bd_Q, S3, 0.0, 1.0, one(1), 1, t0)
        s0 = stopped_term0(bd_Q, S3, 0.0, 1.0, one(1))
        s1 = term_k(bd_Q, S3, 0.0, 1.0, one(1), 1, s0)
        assert s1.values[bd_Q.space.index(one(3))] == 0.0

    def test_terms_sum_to_series(self, bd_Q):
        t = term0(bd_Q, 0.0, 1.0, one(1))
        acc = t.values.copy()
        for k in range(1, 40):
            t = term_k(bd_Q, None, 0.0, 1.0, one(1), k, t)
            acc += t.values
        assert np.abs(acc - distribution(bd_Q, 0.0, 1.0, one(1)).probs).max() < 1e-8


class TestSolve:
    def test_identity_at_zero(self, bd_Q, S3):
        for d in (solve(bd_Q, 0.4, 0.4, one(2)), solve_stopped(bd_Q, S3, 0.4, 0.4, one(2))):
            e = np.zeros(bd_Q.size)
            e[bd_Q.space.index(one(2))] = 1.0
            assert np.array_equal(d.probs, e)

    def test_oracle_agreement(self, bd_Q):
        d = solve(bd_Q, 0.0, 1.0, one(1), CTL)
        assert np.abs(d.probs - distribution(bd_Q, 0.0, 1.0, one(1)).probs).max() < 1e-8
        assert d[Configuration()] == pytest.approx(BD_EXTINCTION, abs=1e-8)
        assert d.diagnostics["k_used"] <= 120

    def test_two_type_agreement(self, two_Q):
        start = Configuration.from_dense((1, 1))
        d = solve(two_Q, 0.0, 1.0, start, CTL)
        assert np.abs(d.probs - distribution(two_Q, 0.0, 1.0, start).probs).max() < 1e-8

    def test_stopped_agreement(self, bd_Q, S3):
        d = solve_stopped(bd_Q, S3, 0.0, 1.0, one(1), CTL)
        ref = distribution(bd_Q, 0.0, 1.0, one(1), S3)
        assert np.abs(d.probs - ref.probs).max() < 1e-8
        assert d.diagnostics["forward_backward_gap"] < 1e-12

    def test_empty_S_reduces(self, bd_Q):
        a = solve(bd_Q, 0.0, 1.0, one(2), CTL)
        b = solve_stopped(bd_Q, NO_STOP, 0.0, 1.0, one(2), CTL)
        assert np.abs(a.probs - b.probs).max() <= 1e-12

    def test_start_in_S_rejected(self, bd_Q, S3):
        with pytest.raises(DomainError):
            solve_stopped(bd_Q, S3, 0.0, 1.0, one(3))

    def test_nonconvergence_carries_partial(self, bd_Q):
        with pytest.raises(NonConvergenceError) as err:
            solve(bd_Q, 0.0, 1.0, one(1), SeriesControl(k_max=3))
        partial = err.value.partial
        assert partial is not None and partial.tail > 1e-9
        assert partial.diagnostics["k_used"] == 3

    def test_modulated_matches_oracle(self, bd_law):
        mod = Modulation(lambda t: 1.0 + 0.5 * math.sin(3 * t), c_max=1.5)
        Q = build_generator(bd_law, enumerate_truncated(TypeSpace((0.0,)), 24), mod)
        d = solve(Q, 0.2, 1.0, one(1), CTL)
        assert np.abs(d.probs - distribution(Q, 0.2, 1.0, one(1)).probs).max() < 1e-7

    def test_stopped_mass_monotone(self, bd_Q, S3):
        m = [solve_stopped(bd_Q, S3, 0.0, t, one(1), CTL).mass_on(S3) for t in (0.25, 0.5, 1.0, 1.5)]
        assert all(b >= a - 1e-12 for a, b in zip(m, m[1:]))

    def test_matrix_rows(self, bd_Q, S3):
        P, tails = solve_matrix(bd_Q, 0.0, 0.5, CTL, S3)
        ref = transition(bd_Q.__class__(bd_Q.with_rows_zeroed(bd_Q.space.indices(S3)).Q, bd_Q.space), 0.0, 0.5)
        assert np.abs(P - ref).max() < 1e-8
        assert tails.max() < 1e-9


@given(st.floats(0.05, 1.5), st.integers(0, 6))
@settings(max_examples=15, deadline=None)
def test_series_is_subprobability(dt, n):
    from stopbranch import birth_death_law

    Q = build_generator(birth_death_law(1.0, 0.5), enumerate_truncated(TypeSpace((0.0,)), 16))
    d = solve(Q, 0.0, dt, one(n), SeriesControl(k_max=150))
    assert d.probs.min() >= -1e-13
    assert d.total <= 1 + 1e-12
