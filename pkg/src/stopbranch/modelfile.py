"""JSON model files.

A model file is one object with the keys::

    {
      "types": [0.0, 1.0],
      "law": [
        {"type": 0.0, "rate": 1.5,
         "offspring": [{"config": {}, "prob": 0.25},
                       {"config": {"0.0": 1, "1.0": 1}, "prob": 0.75}]},
        ...
      ],
      "stopping": [{"0.0": 3}],
      "truncation": 32,
      "controls": {"k_max": 60, "tail_tol": 1e-9, "quad_nodes": 12},
      "seeds": {"simulate": 1}
    }

Configurations map type labels (as strings) to counts; ``{}`` is the empty
configuration.  Every error names the offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .config_space import Configuration, StoppingSet, TruncatedSpace, TypeSpace, enumerate_truncated
from .errors import DomainError, ModelError
from .feller import SeriesControl
from .generator import GeneratorMatrix, ParticleLaw, build_generator

_TOP_KEYS = {"types", "law", "stopping", "truncation", "controls", "seeds"}
_CONTROL_KEYS = {"k_max", "tail_tol", "quad_nodes", "panel_rate"}


@dataclass
class Model:
    types: TypeSpace
    law: ParticleLaw
    stopping: StoppingSet
    truncation: int
    controls: SeriesControl
    seeds: dict = field(default_factory=dict)
    source: str = "<memory>"

    def space(self) -> TruncatedSpace:
        return enumerate_truncated(self.types, self.truncation)

    def generator(self, space: TruncatedSpace | None = None) -> GeneratorMatrix:
        return build_generator(self.law, space or self.space())

    def label_config(self, alpha: Configuration) -> dict[str, int]:
        return {_label(self.types.labels[i]): n for i, n in alpha.items}

    def format_config(self, alpha: Configuration) -> str:
        if alpha.is_empty:
            return "0"
        return ",".join(f"{_label(self.types.labels[i])}:{n}" for i, n in alpha.items)

    def resolved(self) -> dict:
        """Canonical echo of the parsed model."""
        return {
            "types": [float(x) for x in self.types.labels],
            "law": [
                {
                    "type": float(self.types.labels[i]),
                    "rate": self.law.rates[i],
                    "offspring": [
                        {"config": self.label_config(c), "prob": p} for c, p in self.law.offspring[i]
                    ],
                }
                for i in range(self.law.d)
            ],
            "stopping": [self.label_config(c) for c in self.stopping],
            "truncation": self.truncation,
            "controls": {
                "k_max": self.controls.k_max,
                "tail_tol": self.controls.tail_tol,
                "quad_nodes": self.controls.quad_nodes,
                "panel_rate": self.controls.panel_rate,
            },
            "seeds": dict(sorted(self.seeds.items())),
        }


def _label(x: float) -> str:
    return repr(float(x))


def _need(obj: dict, key: str, locus: str):
    if key not in obj:
        raise ModelError(f"missing required key {key!r}", locus=locus)
    return obj[key]


def _number(x, locus: str, integer: bool = False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ModelError(f"expected a number, got {x!r}", locus=locus)
    if integer and not (isinstance(x, int) or float(x).is_integer()):
        raise ModelError(f"expected an integer, got {x!r}", locus=locus)
    if not math.isfinite(x):
        raise ModelError(f"expected a finite number, got {x!r}", locus=locus)
    return int(x) if integer else float(x)


def _type_index(types: TypeSpace, raw, locus: str) -> int:
    try:
        label = float(raw)
    except (TypeError, ValueError):
        raise ModelError(f"type label {raw!r} is not a number", locus=locus) from None
    try:
        return types.index_of(label)
    except (DomainError, KeyError, ValueError):
        raise ModelError(f"type {raw!r} is not declared in types", locus=locus) from None


def parse_config(types: TypeSpace, obj, locus: str) -> Configuration:
    if not isinstance(obj, dict):
        raise ModelError(f"a configuration is an object of label: count, got {obj!r}", locus=locus)
    counts: dict[int, int] = {}
    for key, n in obj.items():
        i = _type_index(types, key, f"{locus}.{key}")
        n = _number(n, f"{locus}.{key}", integer=True)
        if n < 0:
            raise ModelError(f"negative count {n}", locus=f"{locus}.{key}")
        counts[i] = counts.get(i, 0) + n
    return Configuration.of(counts)


def parse_start(types: TypeSpace, text: str) -> Configuration:
    """Parse ``"label:count,label:count"`` or ``"0"`` (the empty configuration)."""
    text = text.strip()
    if text in ("0", ""):
        return Configuration()
    counts: dict[str, int] = {}
    for part in text.split(","):
        label, sep, n = part.partition(":")
        if not sep:
            raise ModelError(f"expected label:count, got {part!r}", locus="--from")
        try:
            counts[label.strip()] = counts.get(label.strip(), 0) + int(n)
        except ValueError:
            raise ModelError(f"count {n!r} is not an integer", locus="--from") from None
    return parse_config(types, counts, "--from")


def parse_model(data, source: str = "<memory>") -> Model:
    """Build a :class:`Model` from decoded JSON, validating every field."""
    if not isinstance(data, dict):
        raise ModelError("a model file must hold one JSON object", locus="$")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ModelError(f"unknown keys {sorted(unknown)}", locus="$")
    raw_types = _need(data, "types", "$")
    if not isinstance(raw_types, list) or not raw_types:
        raise ModelError("types must be a nonempty list of labels", locus="types")
    try:
        types = TypeSpace(tuple(_number(x, f"types[{k}]") for k, x in enumerate(raw_types)))
    except DomainError as exc:
        raise ModelError(str(exc), locus="types") from None

    raw_law = _need(data, "law", "$")
    if not isinstance(raw_law, list):
        raise ModelError("law must be a list with one entry per type", locus="law")
    rates: list[float | None] = [None] * types.d
    offspring: list = [None] * types.d
    for k, entry in enumerate(raw_law):
        locus = f"law[{k}]"
        if not isinstance(entry, dict):
            raise ModelError("each law entry is an object", locus=locus)
        i = _type_index(types, _need(entry, "type", locus), f"{locus}.type")
        if rates[i] is not None:
            raise ModelError(f"type {types.labels[i]!r} has two law entries", locus=locus)
        rate = _number(_need(entry, "rate", locus), f"{locus}.rate")
        if rate < 0:
            raise ModelError("rate must be >= 0", locus=f"{locus}.rate")
        outs = _need(entry, "offspring", locus)
        if not isinstance(outs, list) or not outs:
            raise ModelError("offspring must be a nonempty list", locus=f"{locus}.offspring")
        brood = []
        for j, o in enumerate(outs):
            ol = f"{locus}.offspring[{j}]"
            if not isinstance(o, dict):
                raise ModelError("each offspring entry is an object", locus=ol)
            c = parse_config(types, _need(o, "config", ol), f"{ol}.config")
            p = _number(_need(o, "prob", ol), f"{ol}.prob")
            if p < 0:
                raise ModelError("probability must be >= 0", locus=f"{ol}.prob")
            brood.append((c, p))
        total = math.fsum(p for _, p in brood)
        if abs(total - 1.0) > 1e-12:
            raise ModelError(
                f"offspring probabilities of type {types.labels[i]!r} sum to {total!r}, not 1",
                locus=f"{locus}.offspring",
            )
        rates[i] = rate
        offspring[i] = tuple(brood)
    missing = [types.labels[i] for i, r in enumerate(rates) if r is None]
    if missing:
        raise ModelError(f"no law given for types {missing}", locus="law")
    try:
        law = ParticleLaw(tuple(rates), tuple(offspring))
    except DomainError as exc:
        raise ModelError(str(exc), locus="law") from None

    N = _number(_need(data, "truncation", "$"), "truncation", integer=True)
    if N < 1:
        raise ModelError("truncation must be >= 1", locus="truncation")

    raw_stop = data.get("stopping", [])
    if not isinstance(raw_stop, list):
        raise ModelError("stopping must be a list of configurations", locus="stopping")
    members = []
    for k, obj in enumerate(raw_stop):
        c = parse_config(types, obj, f"stopping[{k}]")
        if c.is_empty:
            raise ModelError("the empty configuration 0 may not belong to S (0 must stay outside S)", locus=f"stopping[{k}]")
        if c.total > N:
            raise ModelError(f"stopping state {c} lies beyond the truncation N={N}", locus=f"stopping[{k}]")
        members.append(c)
    stopping = StoppingSet(frozenset(members))

    raw_ctl = data.get("controls", {})
    if not isinstance(raw_ctl, dict):
        raise ModelError("controls must be an object", locus="controls")
    unknown = set(raw_ctl) - _CONTROL_KEYS
    if unknown:
        raise ModelError(f"unknown keys {sorted(unknown)}", locus="controls")
    kw = {}
    for key in ("k_max", "quad_nodes"):
        if key in raw_ctl:
            kw[key] = _number(raw_ctl[key], f"controls.{key}", integer=True)
    for key in ("tail_tol", "panel_rate"):
        if key in raw_ctl:
            kw[key] = _number(raw_ctl[key], f"controls.{key}")
    try:
        controls = SeriesControl(**kw)
    except DomainError as exc:
        raise ModelError(str(exc), locus="controls") from None

    raw_seeds = data.get("seeds", {})
    if not isinstance(raw_seeds, dict):
        raise ModelError("seeds must be an object of name: integer", locus="seeds")
    seeds = {str(k): _number(v, f"seeds.{k}", integer=True) for k, v in raw_seeds.items()}
    return Model(types, law, stopping, N, controls, seeds, source)


def load_model(path) -> Model:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read model file: {exc.strerror}", locus=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc.msg}", locus=f"{path}:{exc.lineno}:{exc.colno}") from None
    return parse_model(data, str(path))
