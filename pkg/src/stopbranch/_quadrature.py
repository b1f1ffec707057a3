"""Composite Gauss-Legendre grids with partial-panel integration weights."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L


@lru_cache(maxsize=None)
def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``m``-point rule on ``[-1, 1]``."""
    if m < 1:
        raise ValueError("need at least one node")
    x, w = L.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def partial_weights(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference matrices for integrals of the node interpolant.

    ``tail[i, n] = int_{x_i}^{1} l_n(x) dx`` and
    ``head[i, n] = int_{-1}^{x_i} l_n(x) dx`` where ``l_n`` are the Lagrange
    polynomials on the Gauss-Legendre nodes.
    """
    x, w = gauss_legendre(m)
    V = L.legvander(x, m - 1)
    # discrete orthogonality: V^T diag(w) V = diag(2 / (2k + 1))
    Vinv = ((2 * np.arange(m) + 1) / 2.0)[:, None] * V.T * w[None, :]
    anti = np.zeros((m + 1, m))
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        anti[:, k] = L.legint(e)
    at_x = L.legval(x, anti).T        # [i, k]: antiderivative of P_k at x_i
    at_hi = L.legval(1.0, anti)
    at_lo = L.legval(-1.0, anti)
    tail = (at_hi[None, :] - at_x) @ Vinv
    head = (at_x - at_lo[None, :]) @ Vinv
    tail.setflags(write=False)
    head.setflags(write=False)
    return tail, head


@dataclass(frozen=True, eq=False)
class PanelGrid:
    """Composite rule on ``[t1, t2]`` with ``panels`` equal panels of ``m`` nodes.

    ``nodes`` and ``weights`` have shape ``(panels, m)``; ``tail``/``head``
    are the per-panel partial weights (already scaled by the half width).
    """

    t1: float
    t2: float
    panels: int
    m: int
    edges: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    tail: np.ndarray
    head: np.ndarray

    @classmethod
    def build(cls, t1: float, t2: float, m: int, panels: int) -> "PanelGrid":
        x, w = gauss_legendre(m)
        tail, head = partial_weights(m)
        edges = np.linspace(t1, t2, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = mid[:, None] + half[:, None] * x[None, :]
        weights = half[:, None] * w[None, :]
        return cls(t1, t2, panels, m, edges, nodes, weights, half[0] * tail, half[0] * head)

    @property
    def flat_nodes(self) -> np.ndarray:
        return self.nodes.ravel()


def panel_count(span: float, rate: float, panel_rate: float) -> int:
    """Smallest panel count keeping ``rate * panel_width <= panel_rate``."""
    if span <= 0 or rate <= 0:
        return 1
    return max(1, math.ceil(rate * span / panel_rate))
