import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopbranch import (
    EMPTY,
    CapacityError,
    Configuration,
    DomainError,
    StoppingSet,
    TestFunction,
    TypeSpace,
    enumerate_truncated,
    pairing,
)
from stopbranch.config_space import shift_set


def cfg(*counts):
    return Configuration.from_dense(counts)


configs = st.lists(st.integers(0, 4), min_size=2, max_size=2).map(lambda c: cfg(*c))


class TestTypeSpace:
    def test_labels_validated(self):
        assert TypeSpace((0.0, 1.5)).d == 2
        for bad in ((), (1.0, 1.0), (2.0, 1.0), (-1.0,), (math.inf,)):
            with pytest.raises(DomainError):
                TypeSpace(bad)

    def test_index_of(self):
        t = TypeSpace((1.0, 2.0))
        assert t.index_of(2.0) == 1
        with pytest.raises(DomainError):
            t.index_of(3.0)


class TestConfiguration:
    def test_zero_counts_are_dropped(self):
        assert Configuration(((0, 0), (1, 2))) == Configuration.single(1, 2)
        assert Configuration.of({}) == EMPTY
        assert EMPTY.total == 0 and str(EMPTY) == "0"

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            Configuration(((0, -1),))

    def test_arithmetic(self):
        a, b = cfg(2, 1), cfg(1, 0)
        assert a + b == cfg(3, 1)
        assert a.minus(b) == cfg(1, 1)
        assert b.minus(a) is None
        assert a.dense(3) == (2, 1, 0)
        assert str(a) == "{0:2, 1:1}"

    @given(configs, configs)
    def test_addition_commutes_and_totals_add(self, a, b):
        assert a + b == b + a
        assert (a + b).total == a.total + b.total
        assert (a + b).minus(b) == a


class TestPairing:
    def test_constant(self):
        assert pairing(TestFunction((-1.0,)), Configuration.single(0, 3)) == -3.0

    def test_empty(self):
        assert pairing(TestFunction((0.7, -2.0)), EMPTY) == 0.0

    def test_two_types(self):
        # types (1.0, 2.0): two of the first, one of the second
        assert pairing(TestFunction((-0.5, -1.0)), cfg(2, 1)) == -2.0

    def test_missing_type(self):
        with pytest.raises(DomainError):
            pairing(TestFunction((1.0,)), cfg(0, 1))

    def test_admissible_flag(self):
        assert TestFunction((-1.0, 0.0)).admissible
        assert not TestFunction((-1.0, 0.1)).admissible
        with pytest.raises(DomainError):
            TestFunction((math.nan,))


class TestShift:
    def test_identity(self):
        A = {cfg(1, 0), cfg(0, 3)}
        assert shift_set(EMPTY, A) == A

    def test_singleton(self):
        one = Configuration.single(0, 1)
        assert shift_set(one, {EMPTY}) == {one}

    def test_by_hand(self):
        assert shift_set(cfg(1, 1), {cfg(1, 0), cfg(0, 2)}) == {cfg(2, 1), cfg(1, 3)}

    @given(configs, configs, st.sets(configs, max_size=4))
    def test_composes_additively(self, a, b, A):
        assert shift_set(a, shift_set(b, A)) == shift_set(a + b, A)


class TestStoppingSet:
    def test_empty_configuration_not_allowed(self):
        with pytest.raises(DomainError):
            StoppingSet(frozenset({EMPTY}))

    def test_membership(self):
        S = StoppingSet(frozenset({cfg(3), cfg(1)}))
        assert cfg(3) in S and cfg(2) not in S
        assert list(S) == [cfg(1), cfg(3)]
        assert StoppingSet().is_empty


class TestEnumeration:
    def test_unary(self):
        sp = enumerate_truncated(TypeSpace((0.0,)), 2)
        assert sp.states == (EMPTY, cfg(1), cfg(2))

    def test_simplex(self):
        sp = enumerate_truncated(TypeSpace((0.0, 1.0)), 1)
        assert sp.states == (EMPTY, cfg(1, 0), cfg(0, 1))

    def test_binomial_ten(self):
        assert len(enumerate_truncated(TypeSpace((0.0, 1.0)), 3).states) == 10

    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    @pytest.mark.parametrize("N", [1, 4, 10])
    def test_count_is_binomial(self, d, N):
        sp = enumerate_truncated(TypeSpace(tuple(float(i) for i in range(d))), N)
        assert len(sp.states) == math.comb(N + d, d)
        assert len(set(sp.states)) == len(sp.states)
        assert sp.size == len(sp.states) + 1

    def test_deterministic_and_bijective(self):
        t = TypeSpace((0.0, 1.0, 2.0))
        a, b = enumerate_truncated(t, 5), enumerate_truncated(t, 5)
        assert a.states == b.states
        assert [a.index(s) for s in a.states] == list(range(len(a.states)))
        assert a.label(a.overflow) == "overflow"

    def test_outside_truncation(self):
        sp = enumerate_truncated(TypeSpace((0.0,)), 3)
        with pytest.raises(DomainError):
            sp.index(cfg(4))
        assert sp.index_dense((7,)) == sp.overflow

    def test_capacity(self):
        with pytest.raises(CapacityError):
            enumerate_truncated(TypeSpace(tuple(float(i) for i in range(6))), 40, max_states=1000)
        with pytest.raises(DomainError):
            enumerate_truncated(TypeSpace((0.0,)), 0)

    def test_exp_pairing_overflow_weight_zero(self):
        sp = enumerate_truncated(TypeSpace((0.0,)), 3)
        w = sp.exp_pairing(TestFunction((-1.0,)))
        assert w[-1] == 0.0
        assert w[:-1] == pytest.approx([math.exp(-n) for n in range(4)])
