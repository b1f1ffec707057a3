"""Exact event-driven Monte Carlo of the free and the S-stopped process.

Each replica draws from its own counter-based stream: a Philox generator
whose key comes from the master seed and whose counter block is the replica
number.  Results therefore do not depend on how replicas are grouped or
ordered, and two disjoint replica ranges pool into the same estimate as
one run over their union.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from ._kernels import ALIVE, EXTINCT, OUTCOME_NAMES, OVERFLOWED, STOPPED
from .config_space import NO_STOP, Configuration, StoppingSet, TestFunction, pairing
from .errors import DomainError
from .generator import Modulation, ParticleLaw

DEFAULT_CAP = 1000
_BUFFER = 256


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant path: ``states[j]`` holds from ``times[j]`` on.

    ``times[0]`` is the start time and ``states[0]`` the start
    configuration; ``t_end`` is where observation ended.
    """

    times: tuple[float, ...]
    states: tuple[Configuration, ...]
    outcome: str
    t_end: float
    stopped_at: tuple[float, Configuration] | None = None

    @property
    def final(self) -> Configuration:
        return self.states[-1]

    @property
    def jumps(self) -> int:
        return len(self.times) - 1

    def state_at(self, t: float) -> Configuration:
        j = int(np.searchsorted(np.asarray(self.times), t, side="right")) - 1
        return self.states[max(j, 0)]

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "t_end": self.t_end,
            "times": list(self.times),
            "states": [str(s) for s in self.states],
            "stopped_at": None
            if self.stopped_at is None
            else [self.stopped_at[0], str(self.stopped_at[1])],
        }


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error.

    ``m2`` is the sum of squared deviations, kept so that estimates from
    disjoint replica ranges can be pooled exactly.
    """

    mean: float
    std_error: float
    replicas: int
    seed: int
    m2: float = 0.0
    overflowed: int = 0
    first_replica: int = 0

    @classmethod
    def from_samples(cls, samples: Iterable[float], seed: int, overflowed: int = 0, first_replica: int = 0):
        x = np.asarray(list(samples), dtype=float)
        n = x.size
        if n < 1:
            raise DomainError("an estimate needs at least one replica")
        mean = math.fsum(x) / n
        m2 = math.fsum((x - mean) ** 2)
        return cls(mean, math.sqrt(m2 / n / n), n, seed, m2, overflowed, first_replica)

    def merge(self, other: "Estimate") -> "Estimate":
        """Pool two estimates over disjoint replica ranges."""
        n1, n2 = self.replicas, other.replicas
        n = n1 + n2
        delta = other.mean - self.mean
        mean = self.mean + delta * n2 / n
        m2 = self.m2 + other.m2 + delta * delta * n1 * n2 / n
        return Estimate(
            mean,
            math.sqrt(m2 / n / n),
            n,
            self.seed,
            m2,
            self.overflowed + other.overflowed,
            min(self.first_replica, other.first_replica),
        )

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "replicas": self.replicas,
            "seed": self.seed,
            "overflowed": self.overflowed,
            "first_replica": self.first_replica,
        }


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent stream number ``replica`` derived from ``seed``."""
    key = _master_key(int(seed))
    return np.random.Generator(np.random.Philox(counter=[0, 0, int(replica), 0], key=key))


@lru_cache(maxsize=64)
def _master_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)


@dataclass(frozen=True, eq=False)
class _Tables:
    rates: np.ndarray   # (d,) effective rates, self-returning outcomes removed
    deltas: np.ndarray  # (d, K, d) count changes
    cum: np.ndarray     # (d, K) cumulative outcome probabilities
    n_out: np.ndarray   # (d,)


@lru_cache(maxsize=32)
def _tables(law: ParticleLaw) -> _Tables:
    d = law.d
    outs = []
    rates = np.zeros(d)
    for i in range(d):
        moving = [(delta, p) for delta, p in law.deltas(i) if delta.any() and p > 0]
        keep = math.fsum(p for _, p in moving)
        rates[i] = law.rates[i] * keep
        outs.append([(delta, p / keep) for delta, p in moving] if keep > 0 else [])
    K = max(1, max(len(o) for o in outs))
    deltas = np.zeros((d, K, d), dtype=np.int64)
    cum = np.ones((d, K))
    n_out = np.zeros(d, dtype=np.int64)
    for i, o in enumerate(outs):
        n_out[i] = len(o)
        acc = 0.0
        for k, (delta, p) in enumerate(o):
            deltas[i, k] = delta
            acc += p
            cum[i, k] = acc
        if o:
            cum[i, len(o) - 1] = 1.0
        if not o:
            rates[i] = 0.0
    return _Tables(rates, deltas, cum, n_out)


def _stop_array(S: StoppingSet, d: int) -> np.ndarray:
    if S.is_empty:
        return np.zeros((0, d), dtype=np.int64)
    return np.array([c.dense(d) for c in S], dtype=np.int64)


def _run_modulated(rng, tab, state, t0, horizon, S_arr, cap, times, states, modulation):
    # thinning against c_max; mirrors _kernels.ssa_run_python
    d = state.shape[0]
    if state.sum() == 0:
        return EXTINCT, t0, 0
    t = t0
    jumps = 0
    c_max = modulation.c_max
    while True:
        R = float(np.dot(state, tab.rates))
        if R <= 0.0 or c_max <= 0.0:
            return ALIVE, horizon, jumps
        t += -math.log(1.0 - rng.random()) / (R * c_max)
        if t >= horizon:
            return ALIVE, horizon, jumps
        if rng.random() * c_max >= modulation(t):
            continue
        u = rng.random() * R
        acc = np.cumsum(state * tab.rates)
        kind = int(min(np.searchsorted(acc, u, side="right"), d - 1))
        u = rng.random()
        pick = int(min(np.searchsorted(tab.cum[kind, : tab.n_out[kind]], u, side="right"), tab.n_out[kind] - 1))
        state += tab.deltas[kind, pick]
        if jumps < times.shape[0]:
            times[jumps] = t
            states[jumps] = state
        jumps += 1
        total = int(state.sum())
        if total > cap:
            return OVERFLOWED, t, jumps
        if total == 0:
            return EXTINCT, t, jumps
        if S_arr.shape[0] and (S_arr == state).all(axis=1).any():
            return STOPPED, t, jumps


def _run_one(law, start, t0, horizon, S_arr, cap, rng, modulation, buffer, backend=None):
    tab = _tables(law)
    state = start.copy()
    times = np.zeros(buffer)
    states = np.zeros((buffer, start.size), dtype=np.int64)
    if modulation is not None:
        code, t_end, jumps = _run_modulated(rng, tab, state, t0, horizon, S_arr, cap, times, states, modulation)
    else:
        run = backend or _kernels.ssa_run
        code, t_end, jumps = run(
            rng, tab.rates, tab.deltas, tab.cum, tab.n_out, state,
            float(t0), float(horizon), S_arr, int(cap), times, states,
        )
    return code, t_end, jumps, state, times, states


def _check_start(alpha0: Configuration, S: StoppingSet, law: ParticleLaw, t0: float, horizon: float):
    if alpha0 in S:
        raise DomainError("the stopped process must start outside S")
    if horizon < t0:
        raise DomainError("horizon must be >= t0")
    return np.array(alpha0.dense(law.d), dtype=np.int64)


def simulate(
    law: ParticleLaw,
    alpha0: Configuration,
    t0: float,
    horizon: float,
    S: StoppingSet | None = None,
    rng: np.random.Generator | None = None,
    *,
    cap: int = DEFAULT_CAP,
    modulation: Modulation | None = None,
    backend=None,
) -> Trajectory:
    """Sample one trajectory of the process started from ``alpha0`` at ``t0``.

    Stops at the first state in ``S``, at extinction, at ``horizon``, or when
    the population exceeds ``cap``.  Events that reproduce the configuration
    exactly are not jumps and are never drawn.
    """
    S = S or NO_STOP
    start = _check_start(alpha0, S, law, t0, horizon)
    if rng is None:
        rng = np.random.default_rng()
    S_arr = _stop_array(S, law.d)
    # record into a growing buffer; on overflow replay from a snapshot of the bit generator
    snapshot = rng.bit_generator.state
    buffer = _BUFFER
    while True:
        rng.bit_generator.state = snapshot
        code, t_end, jumps, _, times, states = _run_one(
            law, start, t0, horizon, S_arr, cap, rng, modulation, buffer, backend
        )
        if jumps <= buffer:
            break
        buffer = max(4 * buffer, jumps)
    path_times = (float(t0),) + tuple(float(x) for x in times[:jumps])
    path_states = (alpha0,) + tuple(Configuration.from_dense(s) for s in states[:jumps])
    outcome = OUTCOME_NAMES[code]
    stopped_at = (path_times[-1], path_states[-1]) if code == STOPPED else None
    return Trajectory(path_times, path_states, outcome, float(t_end), stopped_at)


def run_replicas(
    law: ParticleLaw,
    alpha0: Configuration,
    t0: float,
    horizon: float,
    S: StoppingSet | None,
    replicas: int,
    seed: int,
    *,
    first_replica: int = 0,
    cap: int = DEFAULT_CAP,
    modulation: Modulation | None = None,
    backend=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal outcome codes and dense terminal states for a replica range."""
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    S = S or NO_STOP
    start = _check_start(alpha0, S, law, t0, horizon)
    S_arr = _stop_array(S, law.d)
    codes = np.empty(replicas, dtype=np.int64)
    finals = np.empty((replicas, law.d), dtype=np.int64)
    for r in range(replicas):
        code, _, _, state, _, _ = _run_one(
            law, start, t0, horizon, S_arr, cap, replica_rng(seed, first_replica + r), modulation, 0, backend
        )
        codes[r] = code
        finals[r] = state
    return codes, finals


def estimate(
    law: ParticleLaw,
    alpha0: Configuration,
    t0: float,
    horizon: float,
    S: StoppingSet | None,
    score: Callable[[str, Configuration], float],
    replicas: int,
    seed: int,
    **kw,
) -> Estimate:
    """Mean of ``score(outcome, terminal state)`` over independent replicas."""
    codes, finals = run_replicas(law, alpha0, t0, horizon, S, replicas, seed, **kw)
    samples = [score(OUTCOME_NAMES[c], Configuration.from_dense(f)) for c, f in zip(codes, finals)]
    return Estimate.from_samples(
        samples, seed, int(np.count_nonzero(codes == OVERFLOWED)), kw.get("first_replica", 0)
    )


def estimate_event(
    law: ParticleLaw,
    alpha0: Configuration,
    t0: float,
    horizon: float,
    S: StoppingSet | None,
    predicate: Callable[[Configuration], bool],
    replicas: int,
    seed: int,
    **kw,
) -> Estimate:
    """Fraction of replicas whose terminal state satisfies ``predicate``."""
    return estimate(
        law, alpha0, t0, horizon, S, lambda _o, c: 1.0 if predicate(c) else 0.0, replicas, seed, **kw
    )


def estimate_functional(
    law: ParticleLaw,
    alpha0: Configuration,
    t0: float,
    horizon: float,
    S: StoppingSet | None,
    s: TestFunction,
    replicas: int,
    seed: int,
    **kw,
) -> Estimate:
    """Monte Carlo Laplace functional ``E exp[s, terminal]``; overflowed replicas score 0."""

    def score(outcome, c):
        if outcome == "overflowed":
            return 0.0
        return math.exp(pairing(s, c))

    return estimate(law, alpha0, t0, horizon, S, score, replicas, seed, **kw)
