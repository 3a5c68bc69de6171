import numpy as np
import pytest
import yaml

from factorcavity import io, models
from factorcavity.errors import ConfigError
from factorcavity.graphmodel import DegreeSpec


def test_degree_spec_forms():
    assert io.degree_spec_from_config(3).support == (3,)
    assert io.degree_spec_from_config({"constant": 4}).support == (4,)
    spec = io.degree_spec_from_config({2: 0.25, 3: 0.75})
    assert spec.mean == pytest.approx(2.75)
    spec = io.degree_spec_from_config({"support": [1, 2], "mass": [0.5, 0.5]})
    assert spec.mean == 1.5
    spec = io.degree_spec_from_config({"poisson": {"mean": 2.5, "max_support": 20}})
    assert spec.max_value <= 20
    with pytest.raises(ConfigError):
        io.degree_spec_from_config("nope")


def test_degree_spec_round_trip():
    spec = DegreeSpec.from_mapping({2: 0.3, 5: 0.7})
    again = io.degree_spec_from_config(io.degree_spec_to_config(spec))
    assert again.support == spec.support
    assert again.mass == spec.mass


def test_weight_family_round_trip():
    fam = models.ldgm(0.2, DegreeSpec.constant(2),
                      DegreeSpec.from_mapping({2: 0.5, 3: 0.5})).family
    cfg = io.weight_family_to_config(fam)
    again = io.weight_family_from_config(cfg)
    for k in fam.arities:
        for i in range(fam.n_tables(k)):
            assert np.array_equal(again.table(k, i), fam.table(k, i))
        assert np.array_equal(again.masses[k], fam.masses[k])
    # flat arrays use row-major spin order
    flat = cfg["arities"][2]["tables"][0]
    assert flat[0] == fam.table(2, 0)[0, 0]
    assert flat[1] == fam.table(2, 0)[0, 1]


def test_weight_family_rejects_nonpositive():
    cfg = {"q": 2, "arities": {2: {"tables": [[1.0, 1.0, 1.0, -0.5]],
                                   "masses": [1.0]}}}
    with pytest.raises((ConfigError, ValueError)):
        io.weight_family_from_config(cfg)


def test_model_round_trip(tmp_path):
    node = {"name": "ldgm", "eta": 0.3, "dspec": 2, "kspec": {2: 0.5, 3: 0.5}}
    model = io.model_from_config(node)
    assert model.params["eta"] == 0.3
    again = io.model_from_config(io.model_to_config(model))
    assert again.kspec.support == model.kspec.support

    path = tmp_path / "model.yaml"
    path.write_text(yaml.safe_dump({"model": node}))
    loaded = io.load_config(path)
    assert io.model_from_config(loaded["model"]).q == 2


def test_model_config_errors():
    with pytest.raises(ConfigError):
        io.model_from_config({"eta": 0.2})
    with pytest.raises(ConfigError):
        io.model_from_config({"name": "ldgm"})


def test_records_and_digests():
    a = io.result_record("exact", {"n": 4, "model": "sbm"}, 7, 1.25, stderr=0.1)
    b = io.result_record("exact", {"model": "sbm", "n": 4}, 7, 1.25, stderr=0.1)
    assert a["inputs_digest"] == b["inputs_digest"]
    c = io.result_record("exact", {"n": 5, "model": "sbm"}, 7, 1.25)
    assert c["inputs_digest"] != a["inputs_digest"]


def test_csv_body_deterministic():
    rows = [(0.1, 1 / 3, "tag"), (0.2, 2.0 ** -45, "tag2")]
    text = io.csv_body(("a", "b", "c"), rows)
    assert text.splitlines()[0] == "# factor-cavity schema v1"
    assert text == io.csv_body(("a", "b", "c"), rows)
    assert repr(1 / 3) in text
