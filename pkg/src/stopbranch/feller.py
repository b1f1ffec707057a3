"""Transition probabilities as a series over the number of jumps.

Term ``k`` collects the paths that change configuration exactly ``k`` times
between ``t1`` and ``t2``.  It is built from term ``k - 1`` by conditioning
on the first jump:

    P^(0)(t, a, t2, .) = exp(J(t, t2, a)) delta_a
    P^(k)(t, a, t2, .) = int_t^t2 exp(J(t, u, a)) sum_b p1(u, a, b) P^(k-1)(u, b, t2, .) du

All terms are evaluated on one composite Gauss-Legendre grid over
``[t1, t2]``, so level ``k`` reuses the node values of level ``k - 1``
instead of recursing.

For the S-stopped process the jumps avoid ``S`` (rates ``p2``) and the mass
that enters ``S`` on the ``k``-th jump is added through

    int_t1^t2 sum_b P_Sbar^(k-1)(t1, a, u, b) p_S(u, b, .) du,

which needs the S-avoiding terms as functions of their end time; those come
from a forward sweep over the same grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats

from . import _kernels
from ._quadrature import PanelGrid, panel_count
from .config_space import NO_STOP, Configuration, StoppingSet
from .errors import ContractViolation, DomainError, NonConvergenceError
from .generator import GeneratorMatrix, partition
from .oracle import Distribution


@dataclass(frozen=True)
class SeriesControl:
    """Truncation and quadrature settings for the jump series.

    ``panel_rate`` caps ``max|q| * panel width`` when ``panels`` is left to
    be chosen automatically.
    """

    k_max: int = 60
    tail_tol: float = 1e-9
    quad_nodes: int = 12
    panel_rate: float = 0.5
    panels: int | None = None

    def __post_init__(self):
        if self.k_max < 0:
            raise DomainError("k_max must be >= 0")
        if not self.tail_tol > 0:
            raise DomainError("tail_tol must be > 0")
        if self.quad_nodes < 2:
            raise DomainError("quad_nodes must be >= 2")
        if not self.panel_rate > 0:
            raise DomainError("panel_rate must be > 0")
        if self.panels is not None and self.panels < 1:
            raise DomainError("panels must be >= 1")


@dataclass(eq=False)
class SeriesTerm:
    """Contribution of exactly-``k``-jump paths.

    ``values`` is the row for the start configuration at ``t1``;
    ``matrix`` holds every source row at ``t1`` and ``grid_values`` the
    node values needed to build term ``k + 1``.
    """

    k: int
    values: np.ndarray
    matrix: np.ndarray = field(repr=False)
    grid_values: np.ndarray | None = field(default=None, repr=False)
    sweep: "_Sweep | None" = field(default=None, repr=False)

    @property
    def mass(self) -> float:
        return float(math.fsum(self.values))


class _Sweep:
    """Grid, clock and rate data shared by every level of one solve."""

    def __init__(self, Q: GeneratorMatrix, S: StoppingSet, t1: float, t2: float, ctl: SeriesControl):
        if t1 > t2:
            raise DomainError("need t1 <= t2")
        self.Q, self.S, self.t1, self.t2, self.ctl = Q, S, t1, t2, ctl
        n = Q.size
        c_max = 1.0 if Q.modulation is None else Q.modulation.c_max
        self.rate_bound = Q.max_rate * c_max
        panels = ctl.panels or panel_count(t2 - t1, self.rate_bound, ctl.panel_rate)
        self.grid = PanelGrid.build(t1, t2, ctl.quad_nodes, panels)
        if Q.modulation is None:
            self.C = self.grid.nodes - t1
            self.Cedge = self.grid.edges - t1
            self.c = np.ones_like(self.grid.nodes)
        else:
            self.C = np.vectorize(lambda u: Q.clock(t1, u))(self.grid.nodes)
            self.Cedge = np.vectorize(lambda u: Q.clock(t1, u))(self.grid.edges)
            self.c = np.vectorize(Q.scale)(self.grid.nodes)
        self.span = float(self.Cedge[-1])
        self.q = Q.diag.astype(float)
        self.in_S = np.zeros(n, dtype=bool)
        if S.is_empty:
            self.R = partition(Q, S, "p1")
        else:
            self.in_S[Q.space.indices(S)] = True
            keep = sp.diags((~self.in_S).astype(float))
            # intermediate states never lie in S: drop S rows as well as S columns
            self.R = sp.csr_matrix(keep @ partition(Q, S, "p2"))
            self.RS = sp.csr_matrix(keep @ partition(Q, S, "p_S"))
        self.n = n

    def poisson_tail(self, k: int) -> float:
        """Bound on the mass of paths with more than ``k`` jumps."""
        x = self.rate_bound * self.span / (1.0 if self.Q.modulation is None else self.Q.modulation.c_max)
        if x == 0:
            return 0.0
        return float(stats.poisson.sf(k, x))

    def rate_apply(self, G: np.ndarray) -> np.ndarray:
        """``c(u) * R @ G(u)`` for every node; ``G`` has shape (panels, m, n, r)."""
        P, m, n, r = G.shape
        flat = G.reshape(P * m, n, r).transpose(1, 0, 2).reshape(n, P * m * r)
        H = (self.R @ flat).reshape(n, P * m, r).transpose(1, 0, 2).reshape(P, m, n, r)
        return np.ascontiguousarray(H * self.c[:, :, None, None])

    def term0(self, start: int) -> SeriesTerm:
        n = self.n
        surv = np.exp(self.q[None, None, :] * (self.span - self.C)[:, :, None])
        grid = np.zeros(self.C.shape + (n, n))
        idx = np.arange(n)
        grid[:, :, idx, idx] = surv
        matrix = np.diag(np.exp(self.q * self.span))
        return SeriesTerm(0, matrix[start].copy(), matrix, grid, self)

    def next(self, prev: SeriesTerm, start: int) -> SeriesTerm:
        H = self.rate_apply(prev.grid_values)
        g = self.grid
        grid, matrix = _kernels.backward_sweep(
            H, self.q, np.ascontiguousarray(self.C), np.ascontiguousarray(self.Cedge),
            np.ascontiguousarray(g.weights), np.ascontiguousarray(g.tail),
        )
        return SeriesTerm(prev.k + 1, matrix[start].copy(), matrix, grid, self)

    # forward (end-time) side, used only for the stopping integral

    def forward0(self, rows: np.ndarray) -> np.ndarray:
        grid = np.zeros(self.C.shape + (rows.size, self.n))
        grid[:, :, np.arange(rows.size), rows] = np.exp(self.q[rows][None, None, :] * self.C[:, :, None])
        return grid

    def forward_next(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        P, m, r, n = F.shape
        flat = F.reshape(P * m * r, n)
        K = (sp.csr_matrix(flat) @ self.R).toarray().reshape(P, m, r, n) * self.c[:, :, None, None]
        g = self.grid
        return _kernels.forward_sweep(
            K, self.q, np.ascontiguousarray(self.C), np.ascontiguousarray(self.Cedge),
            np.ascontiguousarray(g.weights), np.ascontiguousarray(g.tail),
        )

    def stopping_mass(self, F: np.ndarray) -> np.ndarray:
        """``int c(u) F(u) p_S du`` over the whole grid; shape (rows, n)."""
        wF = (F * (self.grid.weights * self.c)[:, :, None, None]).sum(axis=(0, 1))
        return np.asarray((self.RS.T @ wF.T).T)


def _start_index(Q: GeneratorMatrix, alpha) -> int:
    return Q.space.index(alpha) if isinstance(alpha, Configuration) else int(alpha)


def term0(Q: GeneratorMatrix, t1: float, t2: float, alpha, ctl: SeriesControl | None = None) -> SeriesTerm:
    """Zero-jump term: mass ``exp(J(t1, t2, alpha))`` on ``alpha`` itself."""
    return _Sweep(Q, NO_STOP, t1, t2, ctl or SeriesControl()).term0(_start_index(Q, alpha))


def term_k(
    Q: GeneratorMatrix,
    S: StoppingSet | None,
    t1: float,
    t2: float,
    alpha,
    k: int,
    prev: SeriesTerm | None,
    ctl: SeriesControl | None = None,
) -> SeriesTerm:
    """Term ``k >= 1`` from the node values of term ``k - 1``.

    With a nonempty ``S`` the jumps use ``p2`` and never pass through ``S``;
    ``prev`` must then come from a sweep built with the same ``S`` (use
    :func:`stopped_term0`).
    """
    if k < 1:
        raise DomainError("term_k needs k >= 1")
    if prev is None or prev.grid_values is None or prev.k != k - 1:
        raise ContractViolation(f"term {k} needs the node values of term {k - 1}")
    sweep = prev.sweep
    S = S or NO_STOP
    if sweep.S != S or sweep.t1 != t1 or sweep.t2 != t2 or sweep.Q is not Q:
        raise ContractViolation("previous term was built for a different problem")
    return sweep.next(prev, _start_index(Q, alpha))


def stopped_term0(Q, S, t1, t2, alpha, ctl=None) -> SeriesTerm:
    """Zero-jump term on a sweep that avoids ``S`` (the start must lie outside ``S``)."""
    return _Sweep(Q, S, t1, t2, ctl or SeriesControl()).term0(_start_index(Q, alpha))


def _run(Q, S, t1, t2, rows, ctl, stopped):
    """Sum the series; returns (mass matrix for ``rows``, per-k row masses, diagnostics)."""
    sweep = _Sweep(Q, S if stopped else NO_STOP, t1, t2, ctl)
    rows = np.asarray(rows, dtype=np.int64)
    term = sweep.term0(int(rows[0]))
    acc = term.matrix[rows].copy()
    masses = [acc.sum(axis=1)]
    with_stop = stopped and not S.is_empty
    if with_stop:
        F = sweep.forward0(rows)
        front_gap = 0.0
    k_used = 0
    for k in range(1, ctl.k_max + 1):
        if sweep.poisson_tail(k - 1) <= ctl.tail_tol:
            break
        term = sweep.next(term, int(rows[0]))
        level = term.matrix[rows]
        if with_stop:
            level = level + sweep.stopping_mass(F)
            F, F_end = sweep.forward_next(F)
            front_gap = max(front_gap, float(np.abs(F_end - term.matrix[rows]).max()))
        acc += level
        masses.append(level.sum(axis=1))
        k_used = k
        if np.all(1.0 - acc.sum(axis=1) <= ctl.tail_tol):
            break
    diag = {
        "k_used": k_used,
        "panels": sweep.grid.panels,
        "quad_nodes": ctl.quad_nodes,
        "poisson_bound": sweep.poisson_tail(k_used),
    }
    if with_stop:
        diag["forward_backward_gap"] = front_gap
    return acc, np.array(masses), diag


def _finish(Q, acc_row, masses, diag, ctl, start):
    total = float(math.fsum(acc_row))
    tail = max(0.0, 1.0 - total)
    diag = dict(diag, term_masses=[float(m) for m in masses])
    dist = Distribution(acc_row, Q.space, tail=tail, diagnostics=diag)
    if tail > ctl.tail_tol:
        raise NonConvergenceError(
            f"jump series left {tail:.3e} unassigned after k={diag['k_used']} "
            f"(tail_tol={ctl.tail_tol:g})",
            partial=dist,
        )
    return dist


def solve(Q: GeneratorMatrix, t1: float, t2: float, alpha, ctl: SeriesControl | None = None) -> Distribution:
    """Transition distribution ``P(t1, alpha, t2, .)`` as the sum of jump terms."""
    ctl = ctl or SeriesControl()
    start = _start_index(Q, alpha)
    acc, masses, diag = _run(Q, NO_STOP, t1, t2, [start], ctl, stopped=False)
    return _finish(Q, acc[0], masses[:, 0], diag, ctl, start)


def solve_stopped(
    Q: GeneratorMatrix, S: StoppingSet, t1: float, t2: float, alpha, ctl: SeriesControl | None = None
) -> Distribution:
    """Transition distribution of the S-stopped process; states of ``S`` absorb.

    With ``S`` empty this runs exactly the same computation as :func:`solve`.
    """
    ctl = ctl or SeriesControl()
    start = _start_index(Q, alpha)
    if not S.is_empty and Q.space.mask(S)[start]:
        raise DomainError("the stopped process must start outside S")
    acc, masses, diag = _run(Q, S, t1, t2, [start], ctl, stopped=True)
    return _finish(Q, acc[0], masses[:, 0], diag, ctl, start)


def solve_matrix(
    Q: GeneratorMatrix, t1: float, t2: float, ctl: SeriesControl | None = None, S: StoppingSet | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """All source rows at once; returns ``(P, tails)``.

    Rows of states in ``S`` are the identity (frozen).  No convergence check
    is made here; callers inspect ``tails``.
    """
    ctl = ctl or SeriesControl()
    S = S or NO_STOP
    n = Q.size
    in_S = Q.space.mask(S) if not S.is_empty else np.zeros(n, dtype=bool)
    rows = np.nonzero(~in_S)[0]
    acc, _, _ = _run(Q, S, t1, t2, rows, ctl, stopped=not S.is_empty)
    P = np.eye(n)
    P[rows] = acc
    tails = np.maximum(0.0, 1.0 - P.sum(axis=1))
    return P, tails
