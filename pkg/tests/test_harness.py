import json
import os

import numpy as np
import pytest

from sgm import harness
from sgm.cli import main as cli_main
from sgm.errors import ConfigError
from sgm.harness import RunConfig, certify, load_problem, read_trace, run_and_save
from sgm.oracles import gallery


def write_json(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


MINIMAL = {
    "dimension": 1,
    "geometry": {"kind": "euclidean"},
    "Q": {"kind": "whole-space"},
    "objective": {"components": [{"type": "norm", "center": [0.0]}]},
}


OPTSTEP_FILE = {
    "name": "optstep-halfspace",
    "dimension": 2,
    "geometry": {"kind": "euclidean"},
    "Q": {"kind": "halfspaces", "normals": [[0.0, 1.0]], "offsets": [0.0]},
    "objective": {
        "components": [
            {"type": "quadratic", "diag": [1.0, 1.0], "center": [0.0, 1.0], "offset": -0.5,
             "holder": [1.0, 1.0], "strong_convexity": 1.0}
        ]
    },
    "psi": {"kind": "indicator"},
    "constraints": [],
    "x0": [1.0, 0.0],
    "truth": {"xstar": [0.0, 0.0], "f0star": 0.0, "Fstar": 0.0},
}


def test_load_minimal(tmp_path):
    inst = load_problem(write_json(tmp_path, "m.json", MINIMAL))
    assert inst.dim == 1
    v, g = inst.objective.eval(np.array([-2.0]))
    assert v == 2.0 and g[0] == -1.0


def test_optstep_file_reproduces_gallery(tmp_path):
    file_inst = load_problem(write_json(tmp_path, "o.json", OPTSTEP_FILE))
    ref = gallery("optstep-halfspace")
    assert np.array_equal(file_inst.x0, ref.x0)
    assert file_inst.Q.same_as(ref.Q)
    assert file_inst.psi.kind == ref.psi.kind and file_inst.psi.set.same_as(ref.psi.set)
    assert file_inst.truth.Fstar == ref.truth.Fstar
    assert np.array_equal(file_inst.truth.xstar, ref.truth.xstar)
    rng = np.random.default_rng(1)
    ref_comp = ref.objective.components[0]
    for _ in range(50):
        x = rng.uniform(-3, 3, 2)
        v1, g1 = file_inst.objective.eval(x)
        v2, g2 = ref_comp.eval(x)
        assert abs(v1 - v2) < 1e-12
        assert np.allclose(g1, g2, atol=1e-14)


def test_unknown_keys_rejected(tmp_path):
    bad = dict(MINIMAL)
    bad["extra"] = 1
    with pytest.raises(ConfigError, match="extra"):
        load_problem(write_json(tmp_path, "b1.json", bad))
    bad2 = json.loads(json.dumps(MINIMAL))
    bad2["Q"] = {"kind": "box", "lower": [0.0], "upper": [1.0], "oops": True}
    with pytest.raises(ConfigError, match="Q.oops"):
        load_problem(write_json(tmp_path, "b2.json", bad2))
    bad3 = json.loads(json.dumps(MINIMAL))
    del bad3["objective"]
    with pytest.raises(ConfigError, match="objective"):
        load_problem(write_json(tmp_path, "b3.json", bad3))
    bad4 = json.loads(json.dumps(MINIMAL))
    bad4["objective"] = {"components": [{"type": "mystery"}]}
    with pytest.raises(ConfigError, match="components"):
        load_problem(write_json(tmp_path, "b4.json", bad4))


def test_capability_validation_simplex_euclidean(tmp_path):
    spec = {
        "dimension": 2,
        "geometry": {"kind": "euclidean"},
        "Q": {"kind": "simplex"},
        "objective": {"components": [{"type": "linear", "a": [1.0, 0.0]}]},
        "x0": [0.5, 0.5],
    }
    inst = load_problem(write_json(tmp_path, "s.json", spec))
    config = RunConfig(problem="unused", method="basic", iters=5, R0=1.0)
    with pytest.raises(ConfigError, match="simplex"):
        harness.validate_config(config, inst)


def test_config_validation():
    inst = gallery("norm-box")
    with pytest.raises(ConfigError, match="F\\*"):
        harness.validate_config(RunConfig(problem="x", method="composite", iters=5), inst)
    with pytest.raises(ConfigError, match="constraints"):
        harness.validate_config(RunConfig(problem="x", method="switch1", iters=5, D=1.0), inst)
    inst2 = gallery("slater-unbounded")
    with pytest.raises(ConfigError, match="D0 and eps"):
        harness.validate_config(RunConfig(problem="x", method="unbounded", iters=5, D0=None, eps=None), inst2)
    with pytest.raises(ConfigError):
        harness.validate_config(RunConfig(problem="x", method="no-such", iters=5), inst)


def test_trace_roundtrip(tmp_path):
    config = RunConfig(problem="gallery:twolin-box", method="switch1", iters=40,
                       out_dir=str(tmp_path))
    run, summary, trace_path, summary_path = run_and_save(config)
    rows = read_trace(trace_path)
    assert len(rows) == 40
    for rec, row in zip(run.records, rows):
        assert row["lambda"] == rec.lam  # 17-digit decimal text round-trips
        assert row["f0"] == rec.f0
        assert np.array_equal(row["x"], rec.x_next)


def test_certify_replays_exactly(tmp_path):
    for method, name in (("switch1", "twolin-box"), ("switch2", "linquad-box")):
        config = RunConfig(problem=f"gallery:{name}", method=method, iters=80, out_dir=str(tmp_path))
        run, summary, trace_path, summary_path = run_and_save(config)
        ok, report = certify(trace_path, summary_path)
        assert ok, report
        assert any("dual value and gap: MATCH" in line for line in report)


def test_certify_detects_tampering(tmp_path):
    config = RunConfig(problem="gallery:twolin-box", method="switch1", iters=60, out_dir=str(tmp_path))
    run, summary, trace_path, summary_path = run_and_save(config)
    lines = open(trace_path).read().splitlines()
    parts = lines[-1].split(",")
    parts[5] = "%.17g" % (float(parts[5]) + 0.125)
    lines[-1] = ",".join(parts)
    open(trace_path, "w").write("\n".join(lines) + "\n")
    ok, report = certify(trace_path, summary_path)
    assert not ok


def test_cli_run_optstep(tmp_path, capsys):
    code = cli_main([
        "run", "--gallery", "optstep-halfspace", "--method", "composite",
        "--iters", "40", "--out", str(tmp_path),
    ])
    assert code == 0
    trace = next(p for p in os.listdir(tmp_path) if p.endswith(".trace.csv"))
    rows = read_trace(os.path.join(str(tmp_path), trace))
    xs = [row["x"][0] for row in rows]
    for k, v in enumerate(xs):
        assert abs(v - 2.0 ** (-(k + 1))) <= 1e-12


def test_cli_horizon_too_short(capsys):
    code = cli_main(["run", "--gallery", "noslater-ball", "--method", "switch1", "--iters", "0"])
    assert code == 2


def test_cli_unknown_gallery(capsys):
    code = cli_main(["run", "--gallery", "nope", "--method", "basic", "--iters", "5", "--R0", "1"])
    assert code == 2


def test_cli_list_gallery(capsys):
    assert cli_main(["list-gallery"]) == 0
    out = capsys.readouterr().out
    assert "optstep-halfspace" in out and "noslater-ball" in out


def test_cli_suite_filter(capsys):
    assert cli_main(["suite", "--filter", "noslater-dual"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] noslater-dual" in out
    assert cli_main(["suite", "--filter", "zzz"]) == 2


def test_cli_basic_run(tmp_path):
    code = cli_main([
        "run", "--gallery", "norm-box", "--method", "basic", "--iters", "50",
        "--schedule", "constant", "--R0", "2.0", "--out", str(tmp_path),
    ])
    assert code == 0


def test_atomic_write_and_nan_handling(tmp_path):
    config = RunConfig(problem="gallery:optstep-halfspace", method="composite", iters=5,
                       out_dir=str(tmp_path))
    run, summary, trace_path, summary_path = run_and_save(config)
    stored = json.load(open(summary_path))
    assert stored["tolerances"]["version"] == harness.TOLERANCES["version"]
    assert stored["best_f0"] == run.best_f0
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".sgm-tmp-")]
