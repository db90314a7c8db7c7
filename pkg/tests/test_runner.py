import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cgwe import cli
from cgwe.runner import (EXIT_FAIL, EXIT_NUMERICAL, EXIT_PASS, EXIT_SCHEMA, SUBCOMMANDS, RunRecord,
                         SchemaError, atomic_write, emit_plot_data, load_config, parse_config,
                         run_experiment, worker_count)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FAST_VMC = {"family": "gaussian", "n_particles": 2, "lambda0": [0.5, 1.2], "budget": 6,
            "n_samples_opt": 2000, "n_samples": 4000}
SMALL_CGMF = {"grid": {"extents": [20.0], "points": [128], "boundary": "box"},
              "kernel": {"name": "harmonic", "params": {"k": 1.0}},
              "mu_tilde": [[-0.2919]], "n_particles": 2, "count": 3}
SMALL_TWO_SCALE = {"epsilons": [0.25, 0.125], "t2": 0.25, "domain_r": 32.0,
                   "envelope": {"center": 0.0, "width": 2.0, "momentum": 0.0}}


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


# --- schema -------------------------------------------------------------------

def test_all_shipped_configs_parse():
    names = set()
    for path in sorted(CONFIGS.glob("*.json")):
        cfg = load_config(path)
        names.add(cfg.subcommand)
        assert cfg.to_dict()["subcommand"] == cfg.subcommand
    assert names == set(SUBCOMMANDS)


@pytest.mark.parametrize("doc,match", [
    ({"subcommand": "vmc", "parameters": {"famliy": "gaussian"}}, "famliy"),
    ({"subcommand": "cgmf-solve", "parameters": {"grid": {"extent": [1.0]}}}, "extent"),
    ({"subcommand": "vmc", "parameters": {}, "sed": 3}, "sed"),
    ({"subcommand": "nope", "parameters": {}}, "unknown subcommand"),
    ({"subcommand": "vmc", "parameters": {"family": "slater"}}, "family"),
    ({"subcommand": "vmc", "parameters": {}, "seed": 1.5}, "seed"),
    ({"subcommand": "mass-tensor", "parameters": {"preset": "helium"}}, "preset"),
    ([1, 2], "JSON object"),
])
def test_schema_violations_rejected(doc, match):
    with pytest.raises(SchemaError, match=match):
        parse_config(doc)


def test_subcommand_mismatch_rejected():
    with pytest.raises(SchemaError, match="requested"):
        parse_config({"subcommand": "vmc", "parameters": {}}, subcommand="two-scale")


def test_overrides_and_resolved_defaults():
    cfg = parse_config({"subcommand": "two-scale"}, seed=9, output_dir="elsewhere")
    assert cfg.seed == 9 and cfg.output_dir == "elsewhere"
    d = cfg.to_dict()
    assert d["parameters"]["epsilons"] == [0.125, 0.0625, 0.03125]
    assert d["parameters"]["envelope"] == {"center": 1.0, "width": 2.0, "momentum": 0.0}


def test_malformed_config_exits_2_without_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    p = write_config(tmp_path, {"subcommand": "theorem-check", "parameters": {"dims": 8},
                                "output_dir": str(out)})
    assert cli.main(["theorem-check", "--config", str(p)]) == EXIT_SCHEMA
    assert not out.exists()
    assert "dims" in capsys.readouterr().err


def test_invalid_json_and_missing_file_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["vmc", "--config", str(bad)]) == EXIT_SCHEMA
    assert cli.main(["vmc", "--config", str(tmp_path / "absent.json")]) == EXIT_SCHEMA


# --- record ---------------------------------------------------------------------

def test_record_round_trip_is_byte_identical():
    rec = RunRecord(config={"subcommand": "x", "output_dir": "o"}, results={"a": np.float64(1.5)})
    rec.add_series("s", ["i", "v"], [[0, 0.1], [1, np.float64(0.2)]])
    rec.add_check("c", np.bool_(True), np.float64(1e-3), 1e-2)
    text = rec.to_json()
    back = RunRecord.from_json(text)
    assert back.to_json() == text
    assert back == RunRecord.from_json(text)


@given(values=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), max_size=8),
       passed=st.booleans())
def test_record_round_trip_property(values, passed):
    rec = RunRecord(config={"output_dir": "o"}, results={"v": values})
    rec.add_series("s", ["x"], [[v] for v in values])
    rec.add_check("c", passed, values, None)
    text = rec.to_json()
    assert RunRecord.from_json(text).to_json() == text
    assert rec.exit_code == (EXIT_PASS if passed else EXIT_FAIL)


def test_error_status_maps_to_exit_3():
    rec = RunRecord(config={}, status="error", error="boom")
    assert rec.exit_code == EXIT_NUMERICAL


def test_emit_plot_data_missing_series_names_available(tmp_path):
    rec = RunRecord(config={"output_dir": str(tmp_path)})
    rec.add_series("trace", ["step", "energy"], [[0, 1.0]])
    rec.add_series("estimate", ["value"], [[1.0]])
    with pytest.raises(KeyError, match="spectrum.*estimate.*trace"):
        emit_plot_data(rec, "spectrum")


def test_emit_plot_data_columns_and_rows(tmp_path):
    rec = RunRecord(config={"output_dir": str(tmp_path)})
    rec.add_series("convergence", ["epsilon", "err_norm"], [[0.125, 0.5], [0.0625, 0.25]])
    path = emit_plot_data(rec, "convergence")
    lines = path.read_text().splitlines()
    assert lines == ["epsilon,err_norm", "0.125,0.5", "0.0625,0.25"]


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write(tmp_path / "a" / "x.json", "{}")
    atomic_write(tmp_path / "a" / "x.json", b"[]")
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["x.json"]
    assert (tmp_path / "a" / "x.json").read_text() == "[]"


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv("CGWE_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("CGWE_WORKERS", "zero")
    assert worker_count() == 1
    monkeypatch.delenv("CGWE_WORKERS")
    assert worker_count() == 1


# --- end-to-end ------------------------------------------------------------------

def test_theorem_check_cli(tmp_path, capsys):
    out = tmp_path / "tc"
    code = cli.main(["theorem-check", "--config", str(CONFIGS / "theorem_check.json"), "--out", str(out)])
    assert code == EXIT_PASS
    rec = RunRecord.from_json((out / "record.json").read_text())
    assert rec.results["max_residual"] <= 1e-3
    assert rec.status == "pass"
    assert rec.config["output_dir"] == str(out)
    header = (out / "residual.csv").read_text().splitlines()[0]
    assert header == "model,T,residual_T,residual_2T,ratio"
    assert "PASS residual <= tol" in capsys.readouterr().out


def test_mass_tensor_hydrogenic_golden(tmp_path):
    cfg = load_config(CONFIGS / "mass_tensor_hydrogenic.json", output_dir=str(tmp_path))
    rec = run_experiment(cfg)
    names = {g["name"]: g for g in rec.golden}
    assert names["chi_tilde_rounded"]["golden"] == 0.2081
    assert all(g["provenance"] and g["passed"] for g in rec.golden)
    assert rec.exit_code == EXIT_PASS


def test_mass_tensor_random_writes_tensor(tmp_path):
    cfg = load_config(CONFIGS / "mass_tensor_random.json", output_dir=str(tmp_path))
    rec = run_experiment(cfg)
    doc = json.loads((tmp_path / "mass_tensor.json").read_text())
    assert len(doc["mu"]) == (2 * 3) ** 2
    assert rec.results["hermiticity_residual"] <= 1e-12
    assert (tmp_path / "tensor.csv").exists()


def test_cgmf_solve_series_columns(tmp_path):
    cfg = parse_config({"subcommand": "cgmf-solve", "parameters": SMALL_CGMF,
                        "output_dir": str(tmp_path)})
    rec = run_experiment(cfg)
    assert rec.exit_code == EXIT_PASS
    assert (tmp_path / "scf.csv").read_text().splitlines()[0] == "iteration,residual,E_tilde"
    assert (tmp_path / "condensate.cgwf").exists()


def test_cgmf_excite_and_prop(tmp_path):
    rec = run_experiment(parse_config({"subcommand": "cgmf-excite", "parameters": SMALL_CGMF,
                                       "output_dir": str(tmp_path / "e")}))
    assert rec.exit_code == EXIT_PASS
    assert len(rec.results["eigenvalues"]) == 3
    prop = dict(SMALL_CGMF, t_final=0.5, save_every=5)
    rec = run_experiment(parse_config({"subcommand": "cgwe-prop", "parameters": prop,
                                       "output_dir": str(tmp_path / "p")}))
    assert rec.exit_code == EXIT_PASS
    assert rec.series["trajectory"]["columns"] == ["t", "norm", "energy"]


def test_numerical_failure_exits_3_and_writes_record(tmp_path):
    params = dict(SMALL_CGMF, max_iter=2, tol=1e-14)
    p = write_config(tmp_path, {"subcommand": "cgmf-solve", "parameters": params,
                                "output_dir": str(tmp_path / "run")})
    assert cli.main(["cgmf-solve", "--config", str(p)]) == EXIT_NUMERICAL
    rec = RunRecord.from_json((tmp_path / "run" / "record.json").read_text())
    assert rec.status == "error"
    assert "CondensateConvergenceError" in rec.error
    assert rec.series["scf"]["rows"]


def test_two_scale_series_columns(tmp_path):
    cfg = parse_config({"subcommand": "two-scale", "parameters": SMALL_TWO_SCALE,
                        "output_dir": str(tmp_path)})
    rec = run_experiment(cfg)
    header = (tmp_path / "convergence.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["epsilon", "err_norm"]
    assert len(rec.series["convergence"]["rows"]) == 2


def test_vmc_spectrum_request_lists_available_series(tmp_path):
    cfg = parse_config({"subcommand": "vmc", "parameters": FAST_VMC, "output_dir": str(tmp_path)})
    rec = run_experiment(cfg, write=False)
    with pytest.raises(KeyError, match="estimate.*trace"):
        emit_plot_data(rec, "spectrum", tmp_path)


def test_vmc_outputs_byte_identical_for_fixed_seed(tmp_path):
    p = write_config(tmp_path, {"subcommand": "vmc", "parameters": FAST_VMC})
    for name in ("a", "b"):
        cli.main(["vmc", "--config", str(p), "--seed", "4", "--out", str(tmp_path / name)])
    for csv_name in ("trace.csv", "estimate.csv"):
        assert (tmp_path / "a" / csv_name).read_bytes() == (tmp_path / "b" / csv_name).read_bytes()
    ra = json.loads((tmp_path / "a" / "record.json").read_text())
    rb = json.loads((tmp_path / "b" / "record.json").read_text())
    ra.pop("wall_clock"), rb.pop("wall_clock")
    ra["config"].pop("output_dir"), rb["config"].pop("output_dir")
    assert ra == rb
