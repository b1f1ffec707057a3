import json

import pytest

from stopbranch import Configuration, ModelError
from stopbranch.generator import check_axioms
from stopbranch.modelfile import load_model, parse_model, parse_start

from conftest import MODELS


def base():
    return {
        "types": [0.0],
        "law": [{"type": 0.0, "rate": 1.5, "offspring": [{"config": {}, "prob": 1 / 3}, {"config": {"0.0": 2}, "prob": 2 / 3}]}],
        "truncation": 8,
    }


@pytest.mark.parametrize("name", ["birth_death", "birth_death_stop3", "subcritical", "frozen", "two_type"])
def test_fixtures_load(name):
    m = load_model(MODELS / f"{name}.json")
    assert check_axioms(m.generator()) == []
    assert parse_model(json.loads(json.dumps(m.resolved()))).resolved() == m.resolved()


def test_state_count():
    assert len(load_model(MODELS / "birth_death.json").space().states) == 33
    assert len(load_model(MODELS / "two_type.json").space().states) == 91


def test_probabilities_must_sum_to_one():
    d = base()
    d["law"][0]["offspring"][1]["prob"] = 0.9 - 1 / 3
    with pytest.raises(ModelError, match="type 0.0") as err:
        parse_model(d)
    assert err.value.locus == "law[0].offspring"


def test_empty_configuration_not_in_S():
    d = base()
    d["stopping"] = [{}]
    with pytest.raises(ModelError, match="0 must stay outside S"):
        parse_model(d)


def test_stopping_beyond_truncation():
    d = base()
    d["stopping"] = [{"0.0": 9}]
    with pytest.raises(ModelError, match="beyond the truncation"):
        parse_model(d)


@pytest.mark.parametrize(
    "edit, locus",
    [
        (lambda d: d.update(colour="red"), "$"),
        (lambda d: d.pop("truncation"), "$"),
        (lambda d: d.update(truncation=0), "truncation"),
        (lambda d: d.update(types=[]), "types"),
        (lambda d: d["law"][0].update(rate=-1), "law[0].rate"),
        (lambda d: d["law"][0].update(type=4.0), "law[0].type"),
        (lambda d: d["law"][0]["offspring"][0].update(prob="x"), "law[0].offspring[0].prob"),
        (lambda d: d["law"][0]["offspring"][1]["config"].update({"0.0": -1}), "law[0].offspring[1].config.0.0"),
        (lambda d: d.update(controls={"k_max": 1.5}), "controls.k_max"),
        (lambda d: d.update(controls={"speed": 1}), "controls"),
        (lambda d: d.update(controls={"tail_tol": 0}), "controls"),
        (lambda d: d.update(seeds={"simulate": "a"}), "seeds.simulate"),
    ],
)
def test_errors_name_the_field(edit, locus):
    d = base()
    edit(d)
    with pytest.raises(ModelError) as err:
        parse_model(d)
    assert err.value.locus == locus


def test_missing_law_entry():
    d = base()
    d["types"] = [0.0, 1.0]
    with pytest.raises(ModelError, match="no law given"):
        parse_model(d)


def test_bad_json(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"types": [0.0,\n ]}')
    with pytest.raises(ModelError) as err:
        load_model(p)
    assert err.value.locus.startswith(f"{p}:2:")


def test_parse_start():
    m = load_model(MODELS / "two_type.json")
    assert parse_start(m.types, "0") == Configuration()
    assert parse_start(m.types, "0:2,1:1") == Configuration.from_dense((2, 1))
    assert m.format_config(Configuration.from_dense((2, 1))) == "0.0:2,1.0:1"
    for bad in ("0:x", "3:1", "0"+"-1"):
        with pytest.raises(ModelError):
            parse_start(m.types, bad)
