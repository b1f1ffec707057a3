"""Brute-force reference solutions by uniformization.

With ``Lam >= max |q|`` the matrix ``M = I + Q / Lam`` is stochastic and

    exp(Q t) = sum_j Poisson(j; Lam t) M^j,

a sum of nonnegative terms with a computable tail.  This module is kept
deliberately simple and dense; it is the ground truth the series solver and
the verifier are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .config_space import NO_STOP, Configuration, StoppingSet, TruncatedSpace
from .errors import CapacityError, DomainError
from .generator import GeneratorMatrix

#: Largest state count for which dense matrices are formed.
DENSE_LIMIT = 4000
#: Poisson tail left out of every uniformized sum.
POISSON_TAIL = 1e-12
#: Headroom factor on the largest exit rate.
UNIFORM_HEADROOM = 1.05
# Lam * dt above this is split into equal chunks and composed
_CHUNK = 30.0


@dataclass
class Distribution:
    """Probability vector over a truncated space, overflow sentinel last.

    ``tail`` is mass the producing method could not assign (series remainder);
    ``overflow`` is mass that left the truncation.
    """

    probs: np.ndarray
    space: TruncatedSpace
    tail: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.probs[:-1]

    @property
    def overflow(self) -> float:
        return float(self.probs[-1])

    @property
    def total(self) -> float:
        return float(math.fsum(self.probs))

    def __getitem__(self, alpha: Configuration) -> float:
        return float(self.probs[self.space.index(alpha)])

    def mass_on(self, configs) -> float:
        idx = self.space.indices(configs)
        return float(math.fsum(self.probs[idx]))

    def as_dict(self, threshold: float = 0.0) -> dict[str, float]:
        return {
            self.space.label(i): float(p)
            for i, p in enumerate(self.probs)
            if abs(p) > threshold
        }


def _poisson_weights(x: float, tol: float = POISSON_TAIL) -> np.ndarray:
    w = [math.exp(-x)]
    cum = w[0]
    j = 0
    while 1.0 - cum > tol:
        j += 1
        w.append(w[-1] * x / j)
        cum += w[-1]
        if j > 10_000:  # pragma: no cover - guarded by chunking
            raise RuntimeError("Poisson series did not converge")
    return np.array(w)


def _uniformized(Q: sp.spmatrix, lam: float) -> np.ndarray:
    n = Q.shape[0]
    return np.eye(n) + Q.toarray() / lam


def _lam(Q: GeneratorMatrix) -> float:
    return UNIFORM_HEADROOM * Q.max_rate


def exp_transition(Q: GeneratorMatrix, dt: float) -> np.ndarray:
    """Dense ``exp(Q dt)`` for constant rates (use the clock for modulated ones)."""
    if dt < 0:
        raise DomainError("dt must be nonnegative")
    n = Q.size
    if n > DENSE_LIMIT:
        raise CapacityError(f"dense oracle limited to {DENSE_LIMIT} states, got {n}")
    lam = _lam(Q)
    if dt == 0 or lam == 0:
        return np.eye(n)
    chunks = max(1, math.ceil(lam * dt / _CHUNK))
    x = lam * dt / chunks
    M = _uniformized(Q.Q, lam)
    w = _poisson_weights(x)
    P = w[0] * np.eye(n)
    V = np.eye(n)
    for wj in w[1:]:
        V = V @ M
        P += wj * V
    out = P
    for _ in range(chunks - 1):
        out = out @ P
    return out


def exp_action(Q: GeneratorMatrix, dt: float, v: np.ndarray) -> np.ndarray:
    """``exp(Q dt) @ v`` by uniformization, without forming dense powers."""
    if dt < 0:
        raise DomainError("dt must be nonnegative")
    lam = _lam(Q)
    v = np.asarray(v, dtype=float)
    if dt == 0 or lam == 0:
        return v.copy()
    chunks = max(1, math.ceil(lam * dt / _CHUNK))
    x = lam * dt / chunks
    M = (sp.identity(Q.size, format="csr") + Q.Q / lam).tocsr()
    w = _poisson_weights(x)
    out = v
    for _ in range(chunks):
        term = out
        acc = w[0] * term
        for wj in w[1:]:
            term = M @ term
            acc = acc + wj * term
        out = acc
    return out


def exp_action_many(Q: GeneratorMatrix, dts, v: np.ndarray) -> np.ndarray:
    """Rows ``exp(Q dt_j) @ v`` for many ``dt_j``, sharing one sequence of powers.

    Falls back to :func:`exp_action` per step when the largest Poisson mean is
    too big for a single unchunked sum.
    """
    dts = np.asarray(dts, dtype=float).ravel()
    if np.any(dts < 0):
        raise DomainError("dt must be nonnegative")
    v = np.asarray(v, dtype=float)
    lam = _lam(Q)
    out = np.empty((dts.size, v.size))
    if dts.size == 0:
        return out
    if lam == 0:
        out[:] = v
        return out
    x = lam * dts
    if x.max() > 20 * _CHUNK:
        for j, dt in enumerate(dts):
            out[j] = exp_action(Q, dt, v)
        return out
    J = int(stats.poisson.isf(POISSON_TAIL, x.max())) + 1
    M = (sp.identity(Q.size, format="csr") + Q.Q / lam).tocsr()
    W = stats.poisson.pmf(np.arange(J + 1)[None, :], x[:, None])  # (steps, J + 1)
    out[:] = W[:, :1] * v
    term = v
    for j in range(1, J + 1):
        term = M @ term
        out += W[:, j : j + 1] * term
    return out


def transition(Q: GeneratorMatrix, t1: float, t2: float) -> np.ndarray:
    """Transition matrix from ``t1`` to ``t2``; modulation enters via the clock."""
    if t1 > t2:
        raise DomainError("need t1 <= t2")
    return exp_transition(Q, Q.clock(t1, t2))


def absorb(Q: GeneratorMatrix, S: StoppingSet) -> GeneratorMatrix:
    """Zero every row indexed by a state of ``S``; other rows are untouched."""
    if S.is_empty:
        return Q
    return Q.with_rows_zeroed(Q.space.indices(S))


def distribution(
    Q: GeneratorMatrix, t1: float, t2: float, alpha: Configuration, S: StoppingSet = NO_STOP
) -> Distribution:
    """Row of the (optionally stopped) oracle transition matrix started at ``alpha``."""
    start = Q.space.index(alpha)
    e = np.zeros(Q.size)
    e[start] = 1.0
    A = absorb(Q, S)
    # row action: exp(Q^T dt) e_start
    At = GeneratorMatrix(A.Q.T.tocsr(), A.space, A.law, A.modulation)
    probs = exp_action(At, A.clock(t1, t2), e)
    return Distribution(probs, Q.space)


def extinction(
    Q: GeneratorMatrix, S: StoppingSet | None, dt: float, alpha: Configuration, t0: float = 0.0
) -> float:
    """Mass on ``{0}`` (ordinary) or on ``S | {0}`` (stopped) after ``dt``."""
    S = S or NO_STOP
    dist = distribution(Q, t0, t0 + dt, alpha, S)
    mass = dist.probs[Q.space.index(Configuration())]
    if not S.is_empty:
        mass += dist.mass_on(S)
    return float(mass)
