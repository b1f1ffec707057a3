"""Hot inner loops, compiled with numba when available.

Set ``STOPBRANCH_NUMBA=0`` in the environment to force the pure numpy /
plain Python implementations.  Both paths are always importable under their
explicit names so tests can compare them.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("STOPBRANCH_NUMBA", "1").lower() not in ("0", "false", "no")

ALIVE, EXTINCT, STOPPED, OVERFLOWED = 0, 1, 2, 3
OUTCOME_NAMES = ("alive", "extinct", "stopped", "overflowed")


# ---------------------------------------------------------------------------
# backward sweep: one level of the first-jump recursion on a panel grid
#
#   G(u_i) = int_{u_i}^{t_end} diag(exp(q (C(v) - C(u_i)))) H(v) dv
#
# H has shape (panels, m, n, r); the exponential scales axis ``n``.
# ---------------------------------------------------------------------------


def backward_sweep_numpy(H, q, C, Cedge, weights, tail):
    panels, m, n, r = H.shape
    out = np.empty_like(H)
    T = np.zeros((n, r))
    for j in range(panels - 1, -1, -1):
        b = Cedge[j + 1]
        Hj = H[j]
        dC = C[j][None, :] - C[j][:, None]                  # [i, k] = C_k - C_i
        W = tail[None] * np.exp(q[:, None, None] * dC[None])  # [a, i, k]
        out[j] = np.matmul(W, Hj.transpose(1, 0, 2)).transpose(1, 0, 2)
        out[j] += np.exp(q[None, :] * (b - C[j])[:, None])[:, :, None] * T[None]
        Ew = weights[j][:, None] * np.exp(q[None, :] * (C[j] - Cedge[j])[:, None])
        T = np.exp(q * (b - Cedge[j]))[:, None] * T + (Ew[:, :, None] * Hj).sum(axis=0)
    return out, T


def _backward_sweep_loops(H, q, C, Cedge, weights, tail):
    panels, m, n, r = H.shape
    out = np.empty_like(H)
    T = np.zeros((n, r))
    Tn = np.empty((n, r))
    for j in range(panels - 1, -1, -1):
        b = Cedge[j + 1]
        # innermost loops run over contiguous (a, c)
        for i in range(m):
            for a in range(n):
                e_edge = math.exp(q[a] * (b - C[j, i]))
                for c in range(r):
                    out[j, i, a, c] = e_edge * T[a, c]
            for k in range(m):
                w = tail[i, k]
                if w == 0.0:
                    continue
                dC = C[j, k] - C[j, i]
                for a in range(n):
                    e = w * math.exp(q[a] * dC)
                    for c in range(r):
                        out[j, i, a, c] += e * H[j, k, a, c]
        for a in range(n):
            e_panel = math.exp(q[a] * (b - Cedge[j]))
            for c in range(r):
                Tn[a, c] = e_panel * T[a, c]
        for k in range(m):
            dC = C[j, k] - Cedge[j]
            for a in range(n):
                e = weights[j, k] * math.exp(q[a] * dC)
                for c in range(r):
                    Tn[a, c] += e * H[j, k, a, c]
        T, Tn = Tn, T
    return out, T

if HAS_NUMBA:
    backward_sweep_numba = numba.njit(cache=True, nogil=True)(_backward_sweep_loops)
else:  # pragma: no cover
    backward_sweep_numba = None

backward_sweep = backward_sweep_numba if USE_NUMBA else backward_sweep_numpy


def forward_sweep(K, q, C, Cedge, weights, tail, sweep=None):
    """Time-reversed sweep: ``F(u_i) = int_{t_start}^{u_i} K(v) diag(exp(q (C(u_i) - C(v)))) dv``.

    ``K`` has shape ``(panels, m, r, n)`` with the exponential acting on the
    last axis.  Implemented by reversing time and reusing the backward sweep;
    ``tail`` is the same reference matrix the backward sweep takes, since the
    reflected partial weights of the head integrals are the tail weights.
    """
    sweep = sweep or backward_sweep
    Kr = np.ascontiguousarray(K[::-1, ::-1].transpose(0, 1, 3, 2))
    Cr = np.ascontiguousarray(-C[::-1, ::-1])
    Er = np.ascontiguousarray(-Cedge[::-1])
    Wr = np.ascontiguousarray(weights[::-1, ::-1])
    out, T = sweep(Kr, q, Cr, Er, Wr, tail)
    return np.ascontiguousarray(out[::-1, ::-1].transpose(0, 1, 3, 2)), np.ascontiguousarray(T.T)


# ---------------------------------------------------------------------------
# exact event-driven simulation of one trajectory
# ---------------------------------------------------------------------------


def ssa_run_python(rng, rates, deltas, cum, n_out, state, t0, horizon, S, cap, times, states):
    """Advance ``state`` in place from ``t0`` until an absorbing event or ``horizon``.

    Returns ``(outcome, t_end, n_jumps)``.  Jumps beyond the buffer length
    are still simulated but not recorded; callers compare ``n_jumps`` with
    ``len(times)``.
    """
    d = state.shape[0]
    total = 0
    for i in range(d):
        total += state[i]
    if total == 0:
        return EXTINCT, t0, 0
    t = t0
    jumps = 0
    while True:
        R = 0.0
        for i in range(d):
            R += state[i] * rates[i]
        if R <= 0.0:
            return ALIVE, horizon, jumps
        t += -math.log(1.0 - rng.random()) / R
        if t >= horizon:
            return ALIVE, horizon, jumps
        u = rng.random() * R
        kind = d - 1
        acc = 0.0
        for i in range(d):
            acc += state[i] * rates[i]
            if u < acc and state[i] > 0:
                kind = i
                break
        u = rng.random()
        pick = n_out[kind] - 1
        for o in range(n_out[kind]):
            if u < cum[kind, o]:
                pick = o
                break
        total = 0
        for i in range(d):
            state[i] += deltas[kind, pick, i]
            total += state[i]
        if jumps < times.shape[0]:
            times[jumps] = t
            for i in range(d):
                states[jumps, i] = state[i]
        jumps += 1
        if total > cap:
            return OVERFLOWED, t, jumps
        if total == 0:
            return EXTINCT, t, jumps
        for s in range(S.shape[0]):
            hit = True
            for i in range(d):
                if S[s, i] != state[i]:
                    hit = False
                    break
            if hit:
                return STOPPED, t, jumps


if HAS_NUMBA:
    ssa_run_numba = numba.njit(cache=True)(ssa_run_python)
else:  # pragma: no cover
    ssa_run_numba = None

ssa_run = ssa_run_numba if USE_NUMBA else ssa_run_python
