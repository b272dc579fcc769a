"""End-to-end checks for the experiment runner.

Exit statuses, config validation diagnostics, and the reproducibility
contract (fixed field order, 17-digit floats) are all part of the
interface, so they get tested like any other behavior.
"""

import io
import json
import math

import pytest

from semiperturb.cli import (
    build_parser,
    deterministic_json,
    emit_convergence,
    load_config,
    main,
)


# ---------------------------------------------------------------------------
# serialization helpers


def test_deterministic_json_layout():
    doc = {"schema": 1, "value": 0.1, "flag": True, "name": "x",
           "items": [1.0, None]}
    text = deterministic_json(doc)
    assert json.loads(text) == doc
    # insertion order is the field order
    assert text.index('"schema"') < text.index('"value"') < text.index('"flag"')
    assert "0.10000000000000001" in text


def test_deterministic_json_rejects_non_finite():
    with pytest.raises(ValueError):
        deterministic_json({"x": float("inf")})
    with pytest.raises(TypeError):
        deterministic_json({"x": object()})


def test_emit_convergence_orders():
    rows = [(4e-3, 1.6e-5), (2e-3, 4e-6), (1e-3, 1e-6)]
    buf = io.StringIO()
    emit_convergence(rows, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "dt,error,order"
    assert lines[1].endswith(",")  # no order for the first level
    for line in lines[2:]:
        order = float(line.split(",")[2])
        assert math.isclose(order, 2.0, abs_tol=1e-12)


def test_emit_convergence_exact_marker():
    rows = [(4e-3, 1e-4), (2e-3, 0.0), (1e-3, 0.0)]
    buf = io.StringIO()
    emit_convergence(rows, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[2].split(",")[2] == "exact"
    assert lines[3].split(",")[2] == "exact"


def test_emit_convergence_preconditions():
    with pytest.raises(ValueError):
        emit_convergence([(4e-3, 1e-4), (2e-3, 1e-5)], io.StringIO())
    with pytest.raises(ValueError):
        emit_convergence([(1e-3, 1e-4), (2e-3, 1e-5), (4e-3, 1e-6)],
                         io.StringIO())


# ---------------------------------------------------------------------------
# config resolution


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dt": 0.005, "seed": 7}))
    args = build_parser().parse_args(
        ["matrix-demo", "--config", str(path), "--dt", "0.01"])
    cfg = load_config(args)
    assert cfg["dt"] == 0.01
    assert cfg["seed"] == 7
    assert cfg["profile"] == "fast"


def test_unknown_config_key_exit_2(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"bogus": 1}))
    code = main(["matrix-demo", "--config", str(path),
                 "--out", str(tmp_path)])
    assert code == 2


def test_bad_values_exit_2(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"atoms": [[0.0]]}))
    assert main(["transport-demo", "--config", str(path),
                 "--out", str(tmp_path)]) == 2
    assert main(["matrix-demo", "--dt", "-0.5", "--out", str(tmp_path)]) == 2
    path.write_text("not json")
    assert main(["matrix-demo", "--config", str(path),
                 "--out", str(tmp_path)]) == 2


def test_convergence_needs_three_levels(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"spacings": [4e-3, 2e-3]}))
    assert main(["convergence", "--config", str(path),
                 "--out", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# subcommand runs


def _report(tmp_path, name):
    with open(tmp_path / f"{name}-report.json") as fh:
        return json.load(fh)


def test_matrix_demo_defaults_pass(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"t_values": [0.5], "dt": 0.005}))
    code = main(["matrix-demo", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 0
    report = _report(tmp_path, "matrix-demo")
    assert report["schema"] == 1
    assert report["passed"] is True
    gaps = [c for c in report["checks"] if c["name"].startswith("oracle-gap")]
    assert gaps and all(c["measured"] <= 1e-6 for c in gaps)
    csv = (tmp_path / "matrix-demo-gaps.csv").read_text().splitlines()
    assert csv[0] == "system,t,gap"


def test_matrix_demo_explicit_pair(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "matrix": [[-1.0, 0.0], [0.0, -2.0]],
        "perturbation": [[0.0, 0.1], [0.1, 0.0]],
        "t_values": [0.5], "dt": 0.005}))
    assert main(["matrix-demo", "--config", str(cfg),
                 "--out", str(tmp_path)]) == 0
    report = _report(tmp_path, "matrix-demo")
    assert any(c["name"] == "guard-explicit" for c in report["checks"])

    cfg.write_text(json.dumps({"matrix": [[-1.0, 0.0], [0.0, -2.0]],
                               "perturbation": [[0.0]]}))
    assert main(["matrix-demo", "--config", str(cfg),
                 "--out", str(tmp_path)]) == 2


def test_transport_demo_zero_measure_identity(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"atoms": []}))
    code = main(["transport-demo", "--config", str(cfg),
                 "--out", str(tmp_path)])
    assert code == 0
    report = _report(tmp_path, "transport-demo")
    gap = [c for c in report["checks"] if c["name"] == "oracle-gap"][0]
    assert gap["measured"] < 1e-12
    state = (tmp_path / "transport-demo-state.csv").read_text().splitlines()
    assert state[0] == "x,value"
    assert len(state) > 100


def test_transport_demo_guard_failure_exit_1(tmp_path):
    # canonical guard product is 2 t0, so t0 = 0.5 saturates it
    code = main(["transport-demo", "--t0", "0.5", "--out", str(tmp_path)])
    assert code == 1
    report = _report(tmp_path, "transport-demo")
    assert report["passed"] is False
    assert report["checks"][0]["name"] == "guard"
    assert not (tmp_path / "transport-demo-state.csv").exists()


def test_admissibility_pass_and_fail(tmp_path):
    assert main(["admissibility", "--out", str(tmp_path)]) == 0
    good = _report(tmp_path, "admissibility")
    assert good["config"]["report"]["admissible"] is True

    assert main(["admissibility", "--t0", "0.3", "--out", str(tmp_path)]) == 1
    bad = _report(tmp_path, "admissibility")
    failed = [c for c in bad["checks"] if not c["pass"]]
    assert [c["name"] for c in failed] == ["smallness-analytic"]
    assert math.isclose(failed[0]["measured"], 0.6, abs_tol=1e-12)
    assert bad["config"]["report"]["smallness_pass"] is False


def test_implemented_demo_passes(tmp_path):
    code = main(["implemented-demo", "--out", str(tmp_path)])
    assert code == 0
    report = _report(tmp_path, "implemented-demo")
    names = [c["name"] for c in report["checks"]]
    for expected in ("perturbed-vs-exponential", "extract-lift-roundtrip",
                     "non-multiplicative-rejected", "comparison-equality",
                     "pseudoresolvent", "hille-yosida", "euler-decreasing"):
        assert expected in names
    euler = (tmp_path / "implemented-demo-euler.csv").read_text().splitlines()
    assert euler[0] == "n,residual"
    residuals = [float(line.split(",")[1]) for line in euler[1:]]
    assert residuals == sorted(residuals, reverse=True)


def test_convergence_run_and_orders(tmp_path):
    code = main(["convergence", "--out", str(tmp_path)])
    assert code == 0
    report = _report(tmp_path, "convergence")
    for c in report["checks"]:
        assert c["measured"] >= 1.8
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0] == "dt,error,order"
    assert len(lines) == 4


def test_reports_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"t_values": [0.5], "dt": 0.005}))
    for out in (a, b):
        assert main(["matrix-demo", "--config", str(cfg), "--seed", "3",
                     "--out", str(out)]) == 0
    assert ((a / "matrix-demo-report.json").read_bytes()
            == (b / "matrix-demo-report.json").read_bytes())
    assert ((a / "matrix-demo-gaps.csv").read_bytes()
            == (b / "matrix-demo-gaps.csv").read_bytes())
