import json

import numpy as np
import pytest

from condfield import __version__
from condfield.cli import dumps, main

PRODUCT = {"dimension": 1, "alphabet": [-1, 1], "master": [[0], [1], [2]],
           "kind": "product", "parameters": {"site": [0.3, 0.7]}}
RANDOM = {"dimension": 1, "alphabet": [0, 1, 2], "master": [[0], [1], [2], [3]],
          "kind": "random_positive", "seed": 5, "parameters": {}}
ISING = {"dimension": 2, "alphabet": [-1, 1],
         "master": [[i, j] for i in range(3) for j in range(3)],
         "kind": "gibbs", "parameters": {"beta": 0.4, "J": 1.0}}
SINGLE = {"dimension": 1, "alphabet": [0, 1], "master": [[0]],
          "kind": "explicit_table", "parameters": {"joint": [0.25, 0.75]}}


@pytest.fixture
def run(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("CONDFIELD_BUDGET", raising=False)

    def _run(model, *args, raw=None):
        argv = list(args)
        if model is not None:
            path = tmp_path / "model.json"
            path.write_text(raw if raw is not None else json.dumps(model))
            argv += ["--model", str(path)]
        code = main(argv)
        out = capsys.readouterr()
        return code, out.out, out.err

    return _run


def records(text):
    return [json.loads(line) for line in text.splitlines()]


def test_product_validate_all(run):
    code, out, _ = run(PRODUCT, "validate", "--system", "all")
    assert code == 0
    recs = records(out)
    head, summary = recs[0], recs[-1]
    assert head["type"] == "header" and head["version"] == __version__
    assert head["seed"] == 0 and len(head["model_sha256"]) == 64
    assert summary == {"type": "summary", "passed": True, "sampled": False, "exit_code": 0}
    systems = {r["system"] for r in recs if r["type"] == "check"}
    assert systems == {"f", "1f", "palm", "d", "1d"}


def test_perturbed_validate_fails_with_witness(run):
    code, out, _ = run(RANDOM, "validate", "--system", "f", "--perturb", "--seed", "3")
    assert code == 1
    recs = records(out)
    assert recs[1]["name"] == "perturbation" and recs[1]["delta"] == 0.05
    failing = [r for r in recs if r["type"] == "check" and not r["passed"]]
    assert failing and all(r["witness"] for r in failing)


@pytest.mark.parametrize("raw", [
    '{"dimension": 1, "alph',
    '[1, 2]',
    json.dumps({**PRODUCT, "kind": "mystery"}),
    json.dumps({k: v for k, v in PRODUCT.items() if k != "master"}),
    json.dumps({**SINGLE, "parameters": {"joint": [0.5, 0.6]}}),
    json.dumps({**SINGLE, "parameters": {"joint": [1.0, 0.0]}}),
    json.dumps({**PRODUCT, "master": [[0], [0, 1]]}),
    json.dumps({**ISING, "parameters": {}}),
])
def test_malformed_models_exit_2(run, raw):
    code, out, err = run({}, "validate", raw=raw)
    assert code == 2 and out == "" and err.startswith("condfield:")


def test_argument_errors_exit_2(run, tmp_path):
    assert run(None, "validate", "--system", "x")[0] == 2
    assert run(None, "frobnicate")[0] == 2
    assert run(None, "validate")[0] == 2  # no model
    assert run(PRODUCT, "validate", "--tolerance-eq", "-1")[0] == 2
    assert run(None, "validate", "--model", str(tmp_path / "missing.json"))[0] == 2


def test_size_caps_exit_3(run):
    big = {"dimension": 1, "alphabet": [0, 1], "master": [[i] for i in range(22)],
           "kind": "random_positive", "parameters": {}}
    assert run(big, "validate")[0] == 3
    mid = {**big, "master": [[i] for i in range(14)]}
    assert run(mid, "validate", "--system", "f")[0] == 3


@pytest.mark.parametrize("model", [PRODUCT, RANDOM, ISING])
@pytest.mark.parametrize("via", ["f", "1f", "palm"])
def test_reconstruct(run, model, via):
    code, out, _ = run(model, "reconstruct", "--via", via)
    assert code == 0
    res = records(out)[1]
    assert res["name"] == "reconstruction" and res["max_deviation"] <= 1e-10


def test_reconstruct_palm_needs_two_sites(run):
    assert run(SINGLE, "reconstruct", "--via", "palm")[0] == 2


@pytest.mark.parametrize("route", ["1f_product", "1f_ratio", "palm"])
def test_lift_routes(run, route):
    code, out, _ = run(RANDOM, "lift", "--route", route)
    assert code == 0
    recs = records(out)
    assert recs[1]["check"] == "fspec_consistency" and recs[1]["passed"]
    assert recs[2]["max_deviation"] <= 1e-10


def test_lift_on_a_single_site_is_the_identity(run):
    code, out, _ = run(SINGLE, "lift", "--route", "1f_product")
    assert code == 0 and records(out)[2]["max_deviation"] == 0.0


def test_analyze_markov(run):
    code, out, _ = run(ISING, "analyze", "--what", "markov")
    assert code == 0
    recs = records(out)
    names = [r.get("check", r.get("name")) for r in recs[1:-1]]
    assert names == ["markov_1f", "markov_equivalence", "sullivan", "markov_f"]
    # a generic field is not nearest-neighbor Markov
    code, out, _ = run(RANDOM, "analyze", "--what", "markov")
    assert code == 1
    assert records(out)[-2]["witness"] is not None


def test_explicit_neighborhood(run):
    model = {**RANDOM, "neighborhood": {"edges": [[[0], [1]], [[0], [2]], [[0], [3]],
                                                  [[1], [2]], [[1], [3]], [[2], [3]]]}}
    assert run(model, "analyze", "--what", "markov")[0] == 0
    assert run({**RANDOM, "neighborhood": "sideways"}, "analyze")[0] == 2


def test_analyze_mixing_product_is_zero(run):
    code, out, _ = run(PRODUCT, "analyze", "--what", "mixing")
    assert code == 0
    rho = records(out)[1]
    assert rho["name"] == "mixing_rho"
    assert max(e[2] for e in rho["entries"]) <= 1e-15


def test_analyze_dobrushin_and_sullivan(run):
    code, out, _ = run(ISING, "analyze", "--what", "dobrushin")
    assert code == 0
    res = records(out)[1]
    assert len(res["per_point"]) == 9 and res["max"] == max(v for _, v in res["per_point"])
    assert res["finite_volume"] is True
    assert run(RANDOM, "analyze", "--what", "sullivan")[0] == 0


def test_gibbs_with_explicit_terms(run):
    model = {"dimension": 1, "alphabet": [0, 1], "master": [[0], [1], [2]], "kind": "gibbs",
             "parameters": {"beta": 1.0, "site_terms": [[[0], [0.0, 0.5]]],
                            "pair_terms": [[[0], [2], [[0.0, 1.0], [1.0, 0.0]]]]}}
    # the interaction graph has the single edge 0-2, under which the field is Markov
    assert run(model, "analyze", "--what", "markov")[0] == 0


def test_reports_are_deterministic(run):
    a = run(RANDOM, "validate", "--seed", "4", "--budget", "40")[1]
    b = run(RANDOM, "validate", "--seed", "4", "--budget", "40")[1]
    assert a == b and '"sampled":true' in a


def test_environment_budget_overrides_flag(run, monkeypatch):
    monkeypatch.setenv("CONDFIELD_BUDGET", "40")
    code, out, _ = run(RANDOM, "validate", "--system", "f", "--budget", "100000000")
    recs = records(out)
    assert recs[0]["budget"] == 40 and recs[-1]["sampled"] is True
    monkeypatch.setenv("CONDFIELD_BUDGET", "lots")
    assert run(RANDOM, "validate")[0] == 2


def test_out_file_and_text_format(run, tmp_path):
    dest = tmp_path / "report.txt"
    code, out, _ = run(PRODUCT, "validate", "--format", "text", "--out", str(dest))
    assert code == 0 and out == ""
    lines = dest.read_text().splitlines()
    assert lines[0].startswith(f"# condfield {__version__} validate seed=0")
    assert all(line.startswith("PASS [") for line in lines[1:-1])
    assert lines[-1] == "# summary passed=True sampled=False exit=0"


def test_export_and_validate_fixture(run, tmp_path):
    fixture = tmp_path / "palm.jsonl"
    code, _, _ = run(RANDOM, "export", "--system", "palm", "--out", str(fixture))
    assert code == 0
    lines = fixture.read_text().splitlines()
    assert json.loads(lines[0])["system"] == "palm"
    code, out, _ = run(None, "validate", "--spec", str(fixture))
    assert code == 0
    assert {r["system"] for r in records(out) if r["type"] == "check"} == {"palm"}
    # knock one probability off and the fixture no longer loads
    rec = json.loads(lines[1])
    rec["p"][0] += 0.1
    fixture.write_text("\n".join([lines[0], json.dumps(rec)] + lines[2:]) + "\n")
    assert run(None, "validate", "--spec", str(fixture))[0] == 2
    assert run(RANDOM, "export")[0] == 2  # no --out


def test_floats_use_seventeen_significant_digits():
    assert dumps(0.1) == "0.10000000000000001"
    assert dumps({"a": [1, 2.5, None, True]}) == '{"a":[1,2.5,null,true]}'
    for x in np.random.default_rng(0).random(50):
        assert float(dumps(float(x))) == x
    assert json.loads(dumps(float("inf"))) == float("inf")
