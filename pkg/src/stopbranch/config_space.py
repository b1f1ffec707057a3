"""Types, configurations, stopping sets and the truncated state space.

A configuration is a finite multiset of typed particles, stored sparsely as
``(type_index, count)`` pairs.  Types carry nonnegative real labels, but only
finitely many of them are ever active, so every solver works on an index
range ``0..d-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import CapacityError, DomainError

#: Default ceiling on the number of enumerated states.
MAX_STATES = 250_000


@dataclass(frozen=True)
class TypeSpace:
    """Ordered, finite set of particle types with real labels."""

    labels: tuple[float, ...]

    def __post_init__(self):
        labels = tuple(float(x) for x in self.labels)
        if not labels:
            raise DomainError("a type space needs at least one type")
        if any(not math.isfinite(x) or x < 0 for x in labels):
            raise DomainError("type labels must be finite and nonnegative")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise DomainError("type labels must be strictly increasing")
        object.__setattr__(self, "labels", labels)

    @property
    def d(self) -> int:
        return len(self.labels)

    def index_of(self, label: float) -> int:
        label = float(label)
        for i, x in enumerate(self.labels):
            if x == label:
                return i
        raise DomainError(f"type {label!r} is not declared")


@dataclass(frozen=True, order=True)
class Configuration:
    """Finite multiset of particles: sorted ``(type_index, count)`` pairs.

    Only positive counts are stored, so the empty configuration is
    ``Configuration(())`` and compares equal however it was built.
    """

    items: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        merged: dict[int, int] = {}
        for i, n in self.items:
            i, n = int(i), int(n)
            if i < 0:
                raise DomainError(f"negative type index {i}")
            if n < 0:
                raise DomainError(f"negative count {n} for type {i}")
            merged[i] = merged.get(i, 0) + n
        object.__setattr__(
            self, "items", tuple(sorted((i, n) for i, n in merged.items() if n > 0))
        )

    @classmethod
    def of(cls, counts: Mapping[int, int] | None = None) -> "Configuration":
        return cls(tuple((counts or {}).items()))

    @classmethod
    def from_dense(cls, counts: Sequence[int]) -> "Configuration":
        return cls(tuple((i, int(n)) for i, n in enumerate(counts) if n))

    @classmethod
    def single(cls, type_index: int, count: int = 1) -> "Configuration":
        return cls(((type_index, count),))

    @property
    def total(self) -> int:
        return sum(n for _, n in self.items)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.items)

    @property
    def is_empty(self) -> bool:
        return not self.items

    def count(self, type_index: int) -> int:
        for i, n in self.items:
            if i == type_index:
                return n
        return 0

    def dense(self, d: int) -> tuple[int, ...]:
        out = [0] * d
        for i, n in self.items:
            if i >= d:
                raise DomainError(f"type index {i} outside a space of {d} types")
            out[i] = n
        return tuple(out)

    def __add__(self, other: "Configuration") -> "Configuration":
        return Configuration(self.items + other.items)

    def minus(self, other: "Configuration") -> "Configuration | None":
        """Componentwise difference, or ``None`` when some count would go negative."""
        mine = dict(self.items)
        for i, n in other.items:
            left = mine.get(i, 0) - n
            if left < 0:
                return None
            mine[i] = left
        return Configuration(tuple(mine.items()))

    def __str__(self) -> str:
        if not self.items:
            return "0"
        return "{" + ", ".join(f"{i}:{n}" for i, n in self.items) + "}"


EMPTY = Configuration()


@dataclass(frozen=True)
class TestFunction:
    """Per-type real weights ``s(x)`` used in pairings ``[s, alpha]``."""

    __test__ = False  # keep pytest from collecting this class

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if any(not math.isfinite(v) for v in values):
            raise DomainError("test function values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, d: int, value: float) -> "TestFunction":
        return cls((value,) * d)

    @property
    def admissible(self) -> bool:
        """True when every weight is nonpositive (Laplace-admissible)."""
        return all(v <= 0 for v in self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def _weights(f) -> Sequence[float]:
    if isinstance(f, TestFunction):
        return f.values
    return f


def pairing(f, alpha: Configuration) -> float:
    """Return ``[f, alpha] = sum_i f(x_i) n_i`` over the support of ``alpha``.

    ``f`` may be a :class:`TestFunction`, a sequence indexed by type, or a
    mapping from type index to weight.
    """
    w = _weights(f)
    total = 0.0
    for i, n in alpha.items:
        try:
            total += float(w[i]) * n
        except (IndexError, KeyError):
            raise DomainError(f"test function undefined on type {i}") from None
    return total


def shift_set(alpha: Configuration, A: Iterable[Configuration]) -> set[Configuration]:
    """Shift operator ``W_alpha A = {a' : a' - alpha in A}``.

    Since ``a' - alpha = a`` has the unique solution ``a' = a + alpha`` in the
    nonnegative lattice, this is a translate of ``A``.
    """
    return {a + alpha for a in A}


@dataclass(frozen=True)
class StoppingSet:
    """Finite set of absorbing configurations; never contains the empty one."""

    members: frozenset[Configuration] = frozenset()

    def __post_init__(self):
        members = frozenset(self.members)
        if EMPTY in members:
            raise DomainError("the empty configuration 0 may not belong to S")
        object.__setattr__(self, "members", members)

    def __contains__(self, alpha: Configuration) -> bool:
        return alpha in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Configuration]:
        return iter(sorted(self.members))

    @property
    def is_empty(self) -> bool:
        return not self.members


NO_STOP = StoppingSet()


def _compositions(total: int, d: int) -> Iterator[tuple[int, ...]]:
    # counts with the given total, lexicographically descending
    if d == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, d - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class TruncatedSpace:
    """All configurations of total at most ``cap`` plus one overflow sentinel.

    ``states[i]`` is the configuration with index ``i``; the overflow
    sentinel has index ``len(states)``.
    """

    types: TypeSpace
    cap: int
    states: tuple[Configuration, ...]
    counts: np.ndarray = field(repr=False)
    _index: dict = field(repr=False)

    @property
    def d(self) -> int:
        return self.types.d

    @property
    def overflow(self) -> int:
        return len(self.states)

    @property
    def size(self) -> int:
        """Number of indices including the overflow sentinel."""
        return len(self.states) + 1

    def index(self, alpha: Configuration) -> int:
        try:
            return self._index[alpha.dense(self.d)]
        except KeyError:
            raise DomainError(
                f"configuration {alpha} lies outside the truncation N={self.cap}"
            ) from None

    def index_dense(self, counts: Sequence[int]) -> int:
        """Index of a dense count vector, mapping any total above the cap to overflow."""
        key = tuple(int(c) for c in counts)
        if sum(key) > self.cap:
            return self.overflow
        return self._index[key]

    def label(self, i: int) -> str:
        return "overflow" if i == self.overflow else str(self.states[i])

    def indices(self, configs: Iterable[Configuration]) -> np.ndarray:
        return np.array(sorted(self.index(c) for c in configs), dtype=np.int64)

    def mask(self, configs: Iterable[Configuration]) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        m[self.indices(configs)] = True
        return m

    def exp_pairing(self, f) -> np.ndarray:
        """Vector of ``exp([f, state])`` over all indices; overflow gets 0."""
        w = np.asarray(_weights(f), dtype=float)
        if w.shape != (self.d,):
            raise DomainError(f"test function must have {self.d} entries")
        out = np.zeros(self.size)
        out[:-1] = np.exp(self.counts @ w)
        return out


def enumerate_truncated(types: TypeSpace, N: int, max_states: int = MAX_STATES) -> TruncatedSpace:
    """Enumerate every configuration with total at most ``N``.

    Order is graded: by total first, then lexicographically descending
    counts, so ``d=2, N=1`` gives ``[0, (1,0), (0,1)]``.
    """
    if N < 1:
        raise DomainError("truncation cap N must be at least 1")
    d = types.d
    n_states = math.comb(N + d, d)
    if n_states > max_states:
        raise CapacityError(f"{n_states} states exceed the limit of {max_states}")
    dense = [c for total in range(N + 1) for c in _compositions(total, d)]
    index = {c: i for i, c in enumerate(dense)}
    states = tuple(Configuration.from_dense(c) for c in dense)
    counts = np.array(dense, dtype=np.int64).reshape(len(dense), d)
    counts.setflags(write=False)
    return TruncatedSpace(types, N, states, counts, index)
