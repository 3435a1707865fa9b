import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from loopshape import reproduce
from loopshape.cli import main
from loopshape.freq_analysis import bode_table, margins
from loopshape.glm_design import PolyBasisSpec, design_poly
from loopshape.jobconfig import JOB_SCHEMA, ConfigError, build_job

ROOT = Path(__file__).resolve().parents[1]
OMEGA_Q = math.pi / 32


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write_job(tmp_path, doc, name="job.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


GAIN_ONLY_JOB = {
    "plant": {"b": [0.0, 0.001193, 0.001139], "a": [1.0, -1.867, 0.8688], "T": 0.05},
    "loop": {"K_e": 10.0},
    "signals": {"reference": "step", "disturbance": {"amplitude": 1.0, "omega": OMEGA_Q}},
    "run": {"length": 4096},
}


# --- design ---------------------------------------------------------------------------


def test_design_prints_published_lag_rows(capsys):
    code, out, err = run(capsys, "design", "--poly", "-K", 1, "-m", 2, "-s", -0.5)
    assert code == 0
    assert out.splitlines() == ["b = [  0.3225  -0.1677   0.0000 ]", "a = [  1.0000  -1.2131   0.3679 ]"]
    assert err == ""


def test_design_smoother(capsys):
    code, out, err = run(capsys, "design", "--poly", "-K", 0, "-m", 0, "-s", -1)
    assert code == 0
    assert f"{1 - math.exp(-1):.4f}" in out.splitlines()[0]
    assert "hint:" in err  # m_hat * sigma = 0 is outside the rule-of-thumb band


def test_design_sinusoidal_lead(capsys):
    code, out, _ = run(capsys, "design", "--sin", "--freqs", 0, 0.0625, "--gains", 0.1, 1,
                       "--phases", 0, 90, "-s", -1)
    assert code == 0
    assert out.splitlines()[0] == "b = [  2.2228  -3.9018   1.7078   0.0000 ]"


def test_design_json_round_trips_through_bode(capsys, tmp_path):
    js = tmp_path / "lag.json"
    code, _, _ = run(capsys, "design", "--poly", "-K", 1, "-m", 2, "-s", -0.5, "-T", 0.05, "-o", js)
    assert code == 0
    doc = json.loads(js.read_text())
    h = design_poly(PolyBasisSpec(1, -0.5, 2)).h
    assert np.max(np.abs(np.array(doc["b"]) - h.b)) <= 1e-12
    assert np.max(np.abs(np.array(doc["a"]) - h.a)) <= 1e-12
    assert doc["T"] == 0.05 and doc["condition"] > 0
    assert np.allclose([complex(*p) for p in doc["poles"]], math.exp(-0.5))

    csv_path = tmp_path / "bode.csv"
    assert run(capsys, "bode", js, "-n", 64, "-o", csv_path)[0] == 0
    header, data = read_csv(csv_path)
    assert header == ["freq_cps", "mag_db", "mag_linear", "phase_deg"]
    ref = bode_table(h, 64)
    assert np.max(np.abs(data[:, 2] - [p.mag_linear for p in ref])) <= 1e-12
    assert np.max(np.abs(data[:, 3] - [p.phase_deg for p in ref])) <= 1e-9


def test_design_highpass(capsys, tmp_path):
    js = tmp_path / "hp.json"
    assert run(capsys, "design", "--poly", "-K", 0, "-m", 1, "-s", -0.5, "--highpass", "-o", js)[0] == 0
    doc = json.loads(js.read_text())
    assert abs(sum(doc["b"]) / sum(doc["a"])) < 1e-12


@pytest.mark.parametrize("argv", [
    ["design", "--poly", "-K", "1", "-s", "0.5"],
    ["design", "--poly", "-s", "-0.5"],
    ["design", "--poly", "-K", "1"],
    ["design", "--poly", "-K", "1", "-m", "1.5", "-s", "-0.5", "--highpass"],
    ["design", "--sin", "--freqs", "0", "0.6", "--gains", "1", "1", "-s", "-0.5"],
    ["design", "--sin", "--gains", "1", "-s", "-0.5"],
    ["design", "--sin", "--freqs", "0", "0.25", "--gains", "1", "1", "-s", "-0.5", "--highpass"],
])
def test_design_invalid_spec_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("error:")


def test_design_ill_conditioned_exit_3(capsys):
    code, _, err = run(capsys, "design", "--poly", "-K", 10, "-s", -0.1)
    assert code == 3 and "numerical" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["design", "--poly", "-K", "x", "-s", "-1"])
    assert exc.value.code == 2


# --- bode -----------------------------------------------------------------------------


def test_bode_identity_flat(capsys, tmp_path):
    p = tmp_path / "id.csv"
    assert run(capsys, "bode", "--b", 1, "-n", 100, "-o", p)[0] == 0
    _, data = read_csv(p)
    assert data.shape == (100, 4)
    assert np.all(data[:, 1] == 0) and np.all(data[:, 2] == 1) and np.all(data[:, 3] == 0)


def test_bode_sinusoidal_lag_dc_and_nyquist(capsys, tmp_path):
    js, p = tmp_path / "sl.json", tmp_path / "sl.csv"
    run(capsys, "design", "--sin", "--freqs", 0, 0.5, "--gains", 1, 0.01, "-s", -0.75, "-o", js)
    assert run(capsys, "bode", js, "--spacing", "log", "--f-min", 1e-6, "-n", 200, "-o", p)[0] == 0
    _, data = read_csv(p)
    assert data[0, 1] == pytest.approx(0.0, abs=1e-6)
    assert data[-1, 0] == 0.5 and data[-1, 1] == pytest.approx(-40.0, abs=1e-6)


def test_bode_stdout_and_svg_deterministic(capsys, tmp_path):
    code, out, _ = run(capsys, "bode", "--b", 0.5, "--a", 1, -0.5, "-n", 8, "--svg", tmp_path / "a.svg")
    assert code == 0 and len(out.splitlines()) == 9
    run(capsys, "bode", "--b", 0.5, "--a", 1, -0.5, "-n", 8, "--svg", tmp_path / "b.svg")
    a, b = (tmp_path / "a.svg").read_bytes(), (tmp_path / "b.svg").read_bytes()
    assert a == b and a.lstrip().startswith(b"<?xml")


@pytest.mark.parametrize("content", ["{not json", '{"b": [1]}', '{"b": "x", "a": [1]}'])
def test_bode_malformed_input_exit_2(capsys, tmp_path, content):
    p = tmp_path / "bad.json"
    p.write_text(content)
    assert run(capsys, "bode", p)[0] == 2


def test_bode_needs_input(capsys, tmp_path):
    assert run(capsys, "bode")[0] == 2
    assert run(capsys, "bode", tmp_path / "missing.json")[0] == 2


# --- margins ----------------------------------------------------------------------------


def test_margins_motor_lag(capsys, tmp_path):
    js = tmp_path / "m.json"
    code, out, _ = run(capsys, "margins", "--plant", "motor", "--poly", "-K", 1, "-m", 2, "-s", -0.5,
                       "--ke", 0.05, "--ki", 0.05, "-o", js)
    assert code == 0
    lines = out.splitlines()
    gm = float(lines[0].split()[1])
    dm = float(lines[2].split()[1])
    assert gm == pytest.approx(5.6573, rel=0.01) and dm == pytest.approx(7.6275, rel=0.01)
    assert "at 0.0764 cycles/sample" in lines[0]
    rep = margins(reproduce.motor_cmp_loop(PolyBasisSpec(1, -0.5, 2)))
    doc = json.loads(js.read_text())
    assert doc["gm_linear"] == pytest.approx(rep.gm_linear, abs=1e-12)
    assert doc["dm_samples"] == pytest.approx(rep.dm_samples, abs=1e-12)
    assert doc["dm_seconds"] == pytest.approx(rep.dm_samples * 0.05)


def test_margins_with_filter_file(capsys, tmp_path):
    js = tmp_path / "lead.json"
    run(capsys, "design", "--poly", "-K", 2, "-m", -1, "-s", -1, "-o", js)
    code, out, _ = run(capsys, "margins", "--filter", js, "--ke", 0.05, "--ki", 0.05)
    assert code == 0
    assert float(out.splitlines()[0].split()[1]) == pytest.approx(4.9867, rel=0.01)
    assert float(out.splitlines()[2].split()[1]) == pytest.approx(11.0543, rel=0.01)


def test_margins_pure_gain_infinite(capsys, tmp_path):
    js = tmp_path / "g.json"
    code, out, _ = run(capsys, "margins", "--plant-b", 1, "--plant-a", 1, "--ke", 0.5, "-o", js)
    assert code == 0
    assert "GM  infinite" in out and "PM  infinite" in out
    assert json.loads(js.read_text())["gm_linear"] is None


def test_margins_plant_json_and_delay(capsys, tmp_path):
    plant = tmp_path / "plant.json"
    run(capsys, "discretize", "--builtin", "motor", "-o", plant)
    code, out, _ = run(capsys, "margins", "--plant", plant, "--poly", "-K", 1, "-m", 2, "-s", -0.5,
                       "--ke", 0.05, "--ki", 0.05, "--io-delay", 2)
    assert code == 0 and "several crossovers" in out


def test_margins_bad_plant_arguments(capsys):
    assert run(capsys, "margins", "--plant-b", 1)[0] == 2
    assert run(capsys, "margins", "--io-delay", -1)[0] == 2


# --- discretize -------------------------------------------------------------------------


def test_discretize_simulation_plant(capsys, tmp_path):
    js = tmp_path / "p.json"
    code, out, _ = run(capsys, "discretize", "--num", 1, "--den", 0.7813, 2.813, 1, "-T", 0.05, "-o", js)
    assert code == 0
    assert out.splitlines()[1] == "a = [  1.0000  -1.8670   0.8688 ]"
    assert "-0.9542" in out and "0.8825" in out and "0.9845" in out
    doc = json.loads(js.read_text())
    assert np.allclose(doc["b"], [0.0, 0.001193, 0.001139], atol=5e-6)
    code, out2, _ = run(capsys, "discretize", "--builtin", "sim4")
    assert out2 == out


def test_discretize_errors(capsys):
    assert run(capsys, "discretize", "--num", 1, "--den", 0, 1, "-T", 0.05)[0] == 2
    assert run(capsys, "discretize", "--num", 1, "--den", 1, 1)[0] == 2


# --- simulate ---------------------------------------------------------------------------


def test_simulate_gain_only_disturbance(capsys, tmp_path):
    job = write_job(tmp_path, GAIN_ONLY_JOB)
    code, out, _ = run(capsys, "simulate", job, "--out-dir", tmp_path / "out")
    assert code == 0
    metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert metrics["residual_amplitude"] == pytest.approx(0.74, abs=0.02)
    header, data = read_csv(tmp_path / "out" / "trace.csv")
    assert header == ["n", "t_seconds", "r", "e", "u", "c", "dq", "dr"]
    assert data.shape == (4096, 8)
    assert data[2, 1] == pytest.approx(0.1)


def test_simulate_zero_signals_all_zero(capsys, tmp_path):
    doc = {"plant": {"builtin": "motor"}, "loop": {"K_e": 0.05, "K_i": 0.05},
           "signals": {"reference": "zero"}, "run": {"length": 64}}
    assert run(capsys, "simulate", write_job(tmp_path, doc), "--out-dir", tmp_path)[0] == 0
    _, data = read_csv(tmp_path / "trace.csv")
    assert not data[:, 2:].any()


def test_simulate_rerun_byte_identical(capsys, tmp_path):
    doc = {
        "design": {"basis": "poly", "K": 1, "m_hat": 2, "sigma": -0.5},
        "plant": {"builtin": "motor"},
        "loop": {"K_e": 0.05, "K_i": 0.05, "io_delay": 2, "saturation": [-5, 5]},
        "signals": {"reference": "step", "amplitude": 10,
                    "disturbance": {"amplitude": 0.1, "omega": 0.2, "phase_deg": 30},
                    "noise": {"mean": 0.0, "variance": 1e-4, "seed": 5}},
        "run": {"length": 300, "outputs": {"trace": "t.csv", "metrics": "m.json", "svg": "t.svg"}},
    }
    job = write_job(tmp_path, doc)
    run(capsys, "simulate", job, "--out-dir", tmp_path / "a")
    run(capsys, "simulate", job, "--out-dir", tmp_path / "b")
    for name in ("t.csv", "m.json", "t.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.json")))
def test_shipped_configs_run(capsys, tmp_path, name):
    assert run(capsys, "simulate", ROOT / "configs" / name, "--out-dir", tmp_path)[0] == 0


def test_simulate_lss_and_pid_controllers(capsys, tmp_path):
    for ctl in ({"type": "pid", "Kp": 0.05, "Ki": 0.05, "Kd": 0.0},
                {"type": "lss", "ctrl_poles": [0.75, 0.75, 0.75], "obs_poles": [[0.25, 0], 0.25]}):
        doc = {"plant": {"builtin": "motor"}, "loop": {"controller": ctl},
               "signals": {"amplitude": 20}, "run": {"length": 400}}
        assert run(capsys, "simulate", write_job(tmp_path, doc), "--out-dir", tmp_path)[0] == 0
        m = json.loads((tmp_path / "metrics.json").read_text())
        assert abs(m["steady_state_error"]) < 1e-3


@pytest.mark.parametrize("doc", [
    {**GAIN_ONLY_JOB, "extra": 1},
    {**GAIN_ONLY_JOB, "loop": {"K_e": 10.0, "Kx": 1}},
    {**GAIN_ONLY_JOB, "run": {"length": 10}},
    {**GAIN_ONLY_JOB, "plant": {"builtin": "pendulum"}},
    {**GAIN_ONLY_JOB, "design": {"basis": "poly", "K": 1, "sigma": 0.5}},
    {"plant": {"builtin": "motor"}},
    {**GAIN_ONLY_JOB, "plant": {"b": [1.0, 0.5], "a": [1.0, -0.5], "T": 0.05}},
    {**GAIN_ONLY_JOB, "loop": {"K_i": 0.1, "controller": {"type": "pid", "Kp": 1, "Ki": 0, "Kd": 0}}},
])
def test_simulate_invalid_config_exit_2(capsys, tmp_path, doc):
    code, _, err = run(capsys, "simulate", write_job(tmp_path, doc), "--out-dir", tmp_path)
    assert code == 2 and err.startswith("error:")


def test_simulate_unplaceable_exit_3(capsys, tmp_path):
    doc = {"plant": {"b": [0.0, 1.0, -0.5], "a": [1.0, -0.8, 0.15], "T": 0.05},
           "loop": {"controller": {"type": "lss", "ctrl_poles": [0.1, 0.2, 0.3], "obs_poles": [0.1, 0.2]}},
           "run": {"length": 100}}
    assert run(capsys, "simulate", write_job(tmp_path, doc), "--out-dir", tmp_path)[0] == 3


def test_build_job_reports_location():
    with pytest.raises(ConfigError, match="loop"):
        build_job({**GAIN_ONLY_JOB, "loop": {"K_e": "ten"}})


def test_schema_document_matches_code():
    doc = json.loads((ROOT / "docs" / "jobconfig.schema.json").read_text())
    assert doc == JOB_SCHEMA


# --- reproduce ---------------------------------------------------------------------------


def test_reproduce_all_pass(capsys):
    code, out, _ = run(capsys, "reproduce")
    assert code == 0
    lines = out.splitlines()
    assert all(line.startswith("[PASS]") for line in lines[:-1])
    for name in reproduce.PUBLISHED_DESIGNS:
        assert any(name in line for line in lines)
    assert lines[-1].endswith("rows passed")


def test_reproduce_corrupted_constant_fails(capsys, monkeypatch):
    bad = dict(reproduce.PUBLISHED_DESIGNS)
    spec, b_ref, a_ref = bad["sinusoidal lead"]
    bad["sinusoidal lead"] = (spec, b_ref, [1.0, -1.0476, 0.3854, -0.0598])
    monkeypatch.setattr(reproduce, "PUBLISHED_DESIGNS", bad)
    code, out, _ = run(capsys, "reproduce", "--serial")
    assert code == 1
    failed = [line for line in out.splitlines() if line.startswith("[FAIL]")]
    assert len(failed) == 1 and "sinusoidal lead a" in failed[0]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "loopshape", "design", "--poly", "-K", "1", "-m", "2",
                           "-s", "-0.5"], capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.startswith("b = [  0.3225")
