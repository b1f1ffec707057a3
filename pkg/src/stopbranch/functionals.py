"""Laplace and density functionals, and checks of their algebraic laws.

For a distribution ``P`` over configurations and per-type weights ``s``

    F   = sum_b exp[s, b] P(b)          (Laplace functional)
    Psi = log F

and for a generator row ``q(alpha, .)``

    phi = sum_b exp[s, b] q(alpha, b)   (density functional)
    psi = exp(-[s, alpha]) phi.

``psi`` is additive over independent subpopulations because a
configuration-level row is the count-weighted sum of single-particle rows.
The stopped variants use the row restricted to states outside ``S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracle
from .config_space import NO_STOP, Configuration, StoppingSet, TestFunction, pairing
from .errors import ContractViolation, DomainError
from .generator import GeneratorMatrix, partition
from .oracle import Distribution

__all__ = [
    "TestFunction",
    "laplace",
    "log_laplace",
    "density_functional",
    "laplace_of",
    "additivity_check",
    "derivative_link_check",
    "AdditivityResidual",
]


def laplace(dist: Distribution, s) -> float:
    """Laplace functional ``sum_b exp[s, b] dist(b)``.

    Every enumerated state counts, S-states included when ``dist`` is a
    stopped distribution; overflow mass carries weight 0.
    """
    w = dist.space.exp_pairing(s)
    F = math.fsum(w * dist.probs)
    if F < 0:
        raise ContractViolation(f"negative Laplace functional {F!r}; the distribution is invalid")
    return F


def log_laplace(dist: Distribution, s) -> float:
    """``log F``; raises :class:`DomainError` when ``F == 0``."""
    F = laplace(dist, s)
    if F == 0:
        raise DomainError("log Laplace functional undefined: F = 0")
    return math.log(F)


def _row(Q: GeneratorMatrix, S: StoppingSet, r: int):
    if S.is_empty:
        M = Q.Q
    else:
        M = partition(Q, S, "p_Sbar")
    row = M.getrow(r)
    return row.indices, row.data


def density_functional(
    Q: GeneratorMatrix, S: StoppingSet | None, alpha: Configuration, s, t: float | None = None
) -> tuple[float, float]:
    """Return ``(phi, psi)`` for the row of ``alpha``; stopped when ``S`` is nonempty.

    ``psi`` is accumulated directly as ``sum_b q(alpha, b) exp[s, b - alpha]``
    so that large pairings do not overflow before cancelling.  Rates into
    the overflow sentinel carry weight 0, so additivity only holds for rows
    strictly inside the truncation.
    """
    S = S or NO_STOP
    space = Q.space
    r = space.index(alpha)
    cols, vals = _row(Q, S, r)
    scale = 1.0 if t is None else Q.scale(t)
    w = np.asarray(s.values if isinstance(s, TestFunction) else s, dtype=float)
    base = pairing(w, alpha)
    terms = []
    for c, v in zip(cols, vals):
        if c == space.overflow:
            continue
        terms.append(v * math.exp(float(space.counts[c] @ w) - base))
    psi = scale * math.fsum(terms)
    return math.exp(base) * psi, psi


def laplace_of(
    Q: GeneratorMatrix, S: StoppingSet | None, t1: float, t2: float, alpha: Configuration, s
) -> float:
    """Oracle Laplace functional ``F`` (or ``F_S``) started from ``alpha``."""
    S = S or NO_STOP
    if alpha in S:
        return math.exp(pairing(s, alpha))
    return laplace(oracle.distribution(Q, t1, t2, alpha, S), s)


@dataclass(frozen=True)
class AdditivityResidual:
    psi: float
    product: float
    overflow: float

    def to_dict(self) -> dict:
        return {"psi": self.psi, "product": self.product, "overflow": self.overflow}


def additivity_check(
    Q: GeneratorMatrix,
    S: StoppingSet | None,
    alpha1: Configuration,
    alpha2: Configuration,
    s,
    dt: float = 0.5,
    t0: float = 0.0,
) -> AdditivityResidual:
    """Residuals of ``psi`` additivity and of the Laplace product law.

    ``psi``: ``|psi(a1 + a2) - psi(a1) - psi(a2)|``.
    product: ``|F(a1 + a2) - F(a1) F(a2)|`` with ``F`` from the oracle over
    ``[t0, t0 + dt]``.  ``overflow`` is the largest overflow mass among the
    three oracle rows, so callers can tell truncation error from a failure.
    With a nonempty ``S`` both laws generally fail; the residuals are
    reported, not asserted.
    """
    S = S or NO_STOP
    joint = alpha1 + alpha2
    Q.space.index(joint)
    psi = [density_functional(Q, S, a, s)[1] for a in (joint, alpha1, alpha2)]
    r_psi = abs(psi[0] - psi[1] - psi[2])
    F, over = [], 0.0
    for a in (joint, alpha1, alpha2):
        if a in S:
            F.append(math.exp(pairing(s, a)))
            continue
        dist = oracle.distribution(Q, t0, t0 + dt, a, S)
        over = max(over, dist.overflow)
        F.append(laplace(dist, s))
    return AdditivityResidual(r_psi, abs(F[0] - F[1] * F[2]), over)


def derivative_link_check(
    Q: GeneratorMatrix, alpha: Configuration, s, h: float, S: StoppingSet | None = None, t: float = 0.0
) -> float:
    """``|(F(t, alpha, t + h, s) - exp[s, alpha]) / h - phi|``, which is O(h).

    With ``S`` given, ``F_S`` and ``phi_S`` are compared.  The two agree in
    the limit only when the row of ``alpha`` has no rates into ``S``.
    """
    if not h > 0:
        raise DomainError("h must be > 0")
    S = S or NO_STOP
    F = laplace_of(Q, S, t, t + h, alpha, s)
    phi = density_functional(Q, S, alpha, s, t)[0]
    return abs((F - math.exp(pairing(s, alpha))) / h - phi)
