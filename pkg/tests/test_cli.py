import json

import pytest

from nodalknots.cli import (
    EXIT_CONFIG,
    EXIT_FAIL,
    EXIT_PASS,
    Context,
    PipelineConfig,
    main,
    run_pipeline,
)
from nodalknots.helmholtz import ConfigurationError


@pytest.mark.parametrize("doc", [
    {"l0": 7},
    {"l0": 0},
    {"l0": "big"},
    {"khat": -3},
    {"preset": "figure-eight"},
    {"grid": {"extract": 8}},
    {"grid": {"other": 32}},
    {"tolerances": {"regularization": -1}},
    {"tolerances": {"nope": 1}},
    {"stability": {"epsilonRel": -0.1}},
    {"outputs": {"formats": ["ply"]}},
    {"threads": 0},
    {"rngSeed": -1},
    {"mystery": 1},
])
def test_config_rejects(doc):
    with pytest.raises(ConfigurationError):
        PipelineConfig.from_json(doc)


def test_config_defaults_and_digest():
    a = PipelineConfig()
    b = PipelineConfig.from_json({"preset": "hopf"})
    assert a.digest() == b.digest()
    assert a.grid == {"extract": 32, "compare": 48}
    assert a.stability == {"trials": 20, "epsilonRel": 0.1}
    assert PipelineConfig(rngSeed=1).digest() != a.digest()
    assert PipelineConfig(stability={"epsilonRel": 0}).stability["epsilonRel"] == 0


def test_odd_l0_exits_with_configuration_code(capsys):
    assert main(["run", "--preset", "hopf", "--l0", "7"]) == EXIT_CONFIG
    assert "l0" in capsys.readouterr().err


def test_bad_arguments_exit_two(tmp_path):
    assert main(["run", "--format", "ply"]) == EXIT_CONFIG
    assert main(["run", "--threads", "0"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG


def test_context_round_trip():
    ctx = Context("hopf", 3.0, (9.0, 4.0, 4.0), 0.1, 20.0, 0.5)
    back = Context.from_json(json.loads(json.dumps(ctx.to_json())))
    assert back == ctx
    parts = ctx.region().parts
    assert parts[1] == parts[0].mirrored()
    assert len(ctx.reference()) == 4


def test_unknot_run_report(unknot_run):
    report, out = unknot_run
    assert report.verdict == "pass" and report.exit_code == EXIT_PASS
    doc = json.loads(report.dumps())
    assert set(doc["stages"]) == {"seed", "fit", "lift", "compare", "extract", "classify", "stability"}
    assert doc["config"]["l0"] % 2 == 0 and doc["config"]["khat"] >= 32
    assert doc["provenance"]["configHash"] == PipelineConfig.from_json(
        {"preset": "unknot", "stability": {"trials": 0}, "outputs": {"formats": ["json", "obj"]}}).digest()
    for name in ("coefficients.json", "psi.json", "curves.json", "curves.obj"):
        assert (out / name).exists()


def test_reports_are_reproducible(unknot_run, unknot_config):
    report, _ = unknot_run
    again = run_pipeline(unknot_config)
    assert again.dumps(timings=False) == report.dumps(timings=False)


def test_subcommands_round_trip(unknot_run, tmp_path, capsys):
    _, out = unknot_run
    coeff = out / "coefficients.json"
    assert main(["lift", str(coeff), "--khat", "32", "--out", str(tmp_path)]) == EXIT_PASS
    lifted = json.loads(capsys.readouterr().out)
    assert lifted["khat"] == 32 and lifted["lambda"] == 131
    psi = tmp_path / "psi.json"
    assert main(["compare", str(psi), str(coeff), "--grid", "12"]) in (EXIT_PASS, EXIT_FAIL)
    cmp_doc = json.loads(capsys.readouterr().out)
    assert cmp_doc["c1Error"] >= cmp_doc["c0Error"]
    assert main(["extract", str(psi), "--out", str(tmp_path)]) == EXIT_PASS
    ext = json.loads(capsys.readouterr().out)
    assert ext["closed"] >= 2
    curves = tmp_path / "curves.json"
    assert main(["classify", str(curves)]) == EXIT_PASS
    cls = json.loads(capsys.readouterr().out)
    assert [c["classification"] for c in cls["copies"]] == ["unknot", "unknot"]
    assert main(["classify", str(curves), "--preset", "trefoil"]) == EXIT_FAIL
    capsys.readouterr()
    assert main(["export", str(curves), "--format", "vtk", "--out", str(tmp_path)]) == EXIT_PASS
    assert (tmp_path / "curves.vtk").read_text().startswith("# vtk")
    assert main(["stability", str(psi), "--trials", "2", "--epsilon", "0"]) == EXIT_PASS
    st = json.loads(capsys.readouterr().out)
    assert st["preserved"] == 2 and st["epsilonRel"] == 0


def test_synth_writes_coefficients(tmp_path, capsys):
    assert main(["synth", "--preset", "unknot", "--l0", "8", "--out", str(tmp_path)]) == EXIT_PASS
    doc = json.loads(capsys.readouterr().out)
    assert doc["fit"]["l0"] == 8
    saved = json.loads((tmp_path / "coefficients.json").read_text())
    assert saved["context"]["preset"] == "unknot"


def test_khat_below_l0_is_configuration_error():
    with pytest.raises(ConfigurationError):
        PipelineConfig(preset="unknot", l0=8, khat=2)
    # with l0 resolved by the fit the check happens at the lift stage
    rep = run_pipeline(PipelineConfig(preset="unknot", khat=2, stability={"trials": 0}))
    assert rep.error == {"stage": "lift", "kind": "configuration", "message": rep.error["message"]}
    assert rep.exit_code == EXIT_CONFIG
