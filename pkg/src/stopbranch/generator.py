"""Configuration-level transition densities built from a per-particle law.

Every particle of type ``i`` transforms at rate ``rates[i]`` and is replaced
by a brood drawn from ``offspring[i]``.  Aggregating over the particles of a
configuration (each type weighted by its count) gives the sparse generator
``Q`` on a truncated space.  Rows of the empty configuration and of the
overflow sentinel are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ._quadrature import gauss_legendre
from .config_space import NO_STOP, Configuration, StoppingSet, TruncatedSpace
from .errors import DomainError

#: Tolerance on offspring normalization and generator row sums.
AXIOM_TOL = 1e-12


@dataclass(frozen=True)
class ParticleLaw:
    """Per-type transformation rates and offspring distributions.

    ``offspring[i]`` is a sequence of ``(Configuration, probability)`` pairs
    describing the brood that replaces one particle of type ``i``.
    """

    rates: tuple[float, ...]
    offspring: tuple[tuple[tuple[Configuration, float], ...], ...]
    brood_cap: int | None = None

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        offspring = tuple(tuple((c, float(p)) for c, p in law) for law in self.offspring)
        if len(rates) != len(offspring):
            raise DomainError("rates and offspring must cover the same types")
        for i, (rate, law) in enumerate(zip(rates, offspring)):
            if not math.isfinite(rate) or rate < 0:
                raise DomainError(f"type {i}: rate must be finite and >= 0")
            if any(p < 0 for _, p in law):
                raise DomainError(f"type {i}: negative offspring probability")
            total = math.fsum(p for _, p in law)
            if abs(total - 1.0) > AXIOM_TOL:
                raise DomainError(f"type {i}: offspring probabilities sum to {total!r}, not 1")
        cap = self.brood_cap
        if cap is None:
            cap = max((c.total for law in offspring for c, _ in law), default=0)
        for i, law in enumerate(offspring):
            if any(c.total > cap for c, _ in law):
                raise DomainError(f"type {i}: brood larger than the declared cap {cap}")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "offspring", offspring)
        object.__setattr__(self, "brood_cap", cap)

    @property
    def d(self) -> int:
        return len(self.rates)

    def deltas(self, i: int) -> list[tuple[np.ndarray, float]]:
        """Net count changes ``o - e_i`` with their probabilities for type ``i``."""
        out = []
        for c, p in self.offspring[i]:
            delta = np.zeros(self.d, dtype=np.int64)
            for j, n in c.items:
                if j >= self.d:
                    raise DomainError(f"offspring of type {i} references undeclared type {j}")
                delta[j] += n
            delta[i] -= 1
            out.append((delta, p))
        return out


def birth_death_law(birth: float, death: float) -> ParticleLaw:
    """Single-type linear birth-death law: split at rate ``birth``, die at ``death``."""
    rate = birth + death
    if rate == 0:
        return ParticleLaw((0.0,), (((Configuration.single(0, 1), 1.0),),))
    law = []
    if death:
        law.append((Configuration(), death / rate))
    if birth:
        law.append((Configuration.single(0, 2), birth / rate))
    return ParticleLaw((rate,), (tuple(law),))


@dataclass(frozen=True)
class Modulation:
    """Scalar time modulation ``c(t) >= 0`` shared by all rates.

    ``c_max`` bounds ``c`` on the times of interest; the simulator thins
    against it.  ``integral`` uses composite Gauss-Legendre with ``nodes``
    points per unit-length panel.
    """

    func: Callable[[float], float]
    c_max: float
    nodes: int = 16

    def __call__(self, t):
        return self.func(t)

    def integral(self, t1: float, t2: float) -> float:
        if t2 == t1:
            return 0.0
        panels = max(1, math.ceil(abs(t2 - t1)))
        edges = np.linspace(t1, t2, panels + 1)
        x, w = gauss_legendre(self.nodes)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            u = 0.5 * (b - a) * x + 0.5 * (a + b)
            total += 0.5 * (b - a) * float(np.dot(w, np.vectorize(self.func)(u)))
        return total


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Sparse generator over a truncated space, overflow sentinel included.

    ``Q`` holds the base rates; at time ``t`` the density is ``c(t) * Q``
    when a modulation is attached.
    """

    Q: sp.csr_matrix
    space: TruncatedSpace
    law: ParticleLaw | None = None
    modulation: Modulation | None = None
    diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Q = sp.csr_matrix(self.Q)
        Q.sort_indices()
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "diag", Q.diagonal().copy())

    @property
    def size(self) -> int:
        return self.Q.shape[0]

    @property
    def max_rate(self) -> float:
        return float(np.max(-self.diag)) if self.size else 0.0

    def scale(self, t: float) -> float:
        return 1.0 if self.modulation is None else float(self.modulation(t))

    def clock(self, t1: float, t2: float) -> float:
        """Integrated modulation ``int_{t1}^{t2} c(t) dt``."""
        if self.modulation is None:
            return t2 - t1
        return self.modulation.integral(t1, t2)

    def rates_at(self, t: float) -> sp.csr_matrix:
        return self.Q * self.scale(t)

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def with_rows_zeroed(self, rows: np.ndarray) -> "GeneratorMatrix":
        keep = np.ones(self.size)
        keep[rows] = 0.0
        Q = sp.diags(keep) @ self.Q
        return GeneratorMatrix(sp.csr_matrix(Q), self.space, self.law, self.modulation)


def build_generator(
    law: ParticleLaw, space: TruncatedSpace, modulation: Modulation | None = None
) -> GeneratorMatrix:
    """Aggregate per-particle events into configuration-level rates.

    For a state with ``n_i`` particles of type ``i``, each offspring outcome
    ``o`` of that type fires at rate ``n_i * rate_i * P(o)`` and moves the
    state to ``alpha - e_i + o``.  Results above the cap go to overflow;
    outcomes that reproduce the state exactly add nothing.
    """
    if law.d != space.d:
        raise DomainError(f"law has {law.d} types but the space has {space.d}")
    counts = space.counts
    n = len(space.states)
    rows, cols, vals = [], [], []
    for i in range(law.d):
        if law.rates[i] == 0:
            continue
        src = np.nonzero(counts[:, i] > 0)[0]
        if src.size == 0:
            continue
        for delta, p in law.deltas(i):
            if p == 0 or not delta.any():
                continue
            targets = counts[src] + delta
            idx = np.fromiter(
                (space.index_dense(tgt) for tgt in targets), dtype=np.int64, count=src.size
            )
            rows.append(src)
            cols.append(idx)
            vals.append(counts[src, i] * law.rates[i] * p)
    size = n + 1
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    off = sp.coo_matrix((v, (r, c)), shape=(size, size)).tocsr()
    off.sum_duplicates()
    out_rate = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(out_rate)).tocsr()
    Q.eliminate_zeros()
    return GeneratorMatrix(Q, space, law, modulation)


def check_axioms(Q: GeneratorMatrix, tol: float = AXIOM_TOL) -> list[str]:
    """List every row that breaks the sign pattern or the zero row sum."""
    problems = []
    M = Q.Q.tocoo()
    off = M.row != M.col
    for r in np.unique(M.row[off & (M.data < 0)]):
        problems.append(f"row {Q.space.label(r)}: negative off-diagonal rate")
    for r in np.nonzero(Q.diag > 0)[0]:
        problems.append(f"row {Q.space.label(r)}: positive diagonal")
    sums = np.asarray(Q.Q.sum(axis=1)).ravel()
    scale = np.maximum(1.0, np.abs(Q.diag))
    for r in np.nonzero(np.abs(sums) > tol * scale)[0]:
        problems.append(f"row {Q.space.label(r)}: row sum {sums[r]:.3e}")
    for r in (0, Q.space.overflow):
        if Q.Q.getrow(r).nnz:
            problems.append(f"row {Q.space.label(r)}: absorbing row is not zero")
    return problems


_KINDS = ("q", "p1", "p2", "p_S", "p_Sbar")


def partition(Q: GeneratorMatrix, S: StoppingSet = NO_STOP, kind: str = "p1"):
    """Split the rates of ``Q`` relative to the stopping set ``S``.

    ``q``       diagonal vector
    ``p1``      off-diagonal part
    ``p2``      off-diagonal part with columns in ``S`` removed
    ``p_S``     columns in ``S`` only
    ``p_Sbar``  columns outside ``S`` (diagonal kept for rows outside ``S``)

    Matrix kinds come back as CSR matrices with the full shape.
    """
    if kind not in _KINDS:
        raise DomainError(f"unknown partition kind {kind!r}; expected one of {_KINDS}")
    if kind == "q":
        return Q.diag.copy()
    in_S = np.zeros(Q.size, dtype=bool)
    if not S.is_empty:
        in_S[Q.space.indices(S)] = True
    M = Q.Q.tocoo()
    keep = {
        "p1": M.row != M.col,
        "p2": (M.row != M.col) & ~in_S[M.col],
        "p_S": in_S[M.col],
        "p_Sbar": ~in_S[M.col],
    }[kind]
    return sp.csr_matrix((M.data[keep], (M.row[keep], M.col[keep])), shape=M.shape)


def _row_index(Q: GeneratorMatrix, alpha) -> int:
    if isinstance(alpha, Configuration):
        return Q.space.index(alpha)
    return int(alpha)


def J(Q: GeneratorMatrix, t1: float, t2: float, alpha) -> float:
    """Integrated diagonal rate ``int_{t1}^{t2} q(t, alpha) dt`` (always <= 0)."""
    if t1 > t2:
        raise DomainError("J needs t1 <= t2")
    q = Q.diag[_row_index(Q, alpha)]
    if q == 0.0 or t1 == t2:
        return 0.0
    return float(q * Q.clock(t1, t2))


def density_row(Q: GeneratorMatrix, alpha, t: float | None = None) -> dict[int, float]:
    """Row ``p(t, alpha, .)`` as an index-to-rate mapping."""
    r = _row_index(Q, alpha)
    row = Q.Q.getrow(r)
    s = 1.0 if t is None else Q.scale(t)
    return {int(j): float(v) * s for j, v in zip(row.indices, row.data)}

