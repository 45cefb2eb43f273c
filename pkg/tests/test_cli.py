import csv
import json

import numpy as np
import pytest

from spherectl.cli import main
from spherectl.config import load_config, parse_config_text
from spherectl.errors import ConfigError

SMALL = """\
# desk-scale instance
N = 4
d = 3
T = 1.0
dt = 0.05
lambda = 0.1
"""


def write_cfg(tmp_path, text=SMALL, name="run.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def run(tmp_path, cmd, *extra, text=SMALL, out="out"):
    out = tmp_path / out
    code = main([cmd, "--config", write_cfg(tmp_path, text), "--out", str(out), *extra])
    return code, out


# -- configuration -----------------------------------------------------------

def test_parse_config_text():
    vals = parse_config_text("N = 7  # particles\n\nlambda=2.5\nrenorm = false\n")
    assert vals == {"N": 7, "lam": 2.5, "renorm": False}


@pytest.mark.parametrize(
    "text,field",
    [
        ("bogus = 1\n", "bogus"),
        ("N = 3\nN = 4\n", "N"),
        ("N = three\n", "N"),
        ("lambda = 0\n", "lambda"),
        ("dt = 0.03\nT = 1\n", "dt"),
        ("init = ring\n", "init"),
    ],
)
def test_bad_config_field(tmp_path, text, field):
    with pytest.raises(ConfigError) as err:
        load_config(write_cfg(tmp_path, text))
    assert err.value.field == field


def test_config_error_exit_code(tmp_path, capsys):
    code, out = run(tmp_path, "simulate", text="kappa = -1\n")
    assert code == 1
    assert "kappa" in capsys.readouterr().err
    assert not (out / "trajectory.csv").exists()


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == 1


def test_usage_error_exit_code(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--order", "3"])
    assert err.value.code == 1


def test_config_echo_round_trips(tmp_path):
    code, out = run(tmp_path, "simulate", "--seed", "5", "--order", "2")
    assert code == 0
    echoed = load_config(out / "config.txt")
    assert echoed.seed == 5 and echoed.order == 2 and echoed.N == 4
    rep = json.loads((out / "report.json").read_text())
    assert rep["config_seed"] == 5 and rep["config_lambda"] == 0.1


# -- simulate ------------------------------------------------------------------

@pytest.mark.parametrize("order", [1, 2])
def test_simulate_outputs(tmp_path, order):
    code, out = run(tmp_path, "simulate", "--order", str(order), text=SMALL + "v0_scale = 0.3\n")
    assert code == 0
    header, traj = read_csv(out / "trajectory.csv")
    assert header[:5] == ["t", "particle", "x1", "x2", "x3"]
    assert len(header) == (5 if order == 1 else 8)
    assert traj.shape[0] == 21 * 4
    np.testing.assert_allclose(np.linalg.norm(traj[:, 2:5], axis=1), 1.0, atol=1e-12)
    mheader, metrics = read_csv(out / "metrics.csv")
    assert mheader[:2] == ["t", "position_variance"]
    assert ("velocity_variance" in mheader) == (order == 2)
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "ok"
    assert rep["max_norm_drift"] <= 1e-12
    assert rep["control_bound_M"] == 0.0
    assert ("wellposedness_margin" in rep) == (order == 2)


def test_simulate_single_particle(tmp_path):
    code, out = run(tmp_path, "simulate", text="N = 1\nT = 1\ndt = 0.1\n")
    assert code == 0
    _, metrics = read_csv(out / "metrics.csv")
    np.testing.assert_array_equal(metrics[:, 1], 0.0)


@pytest.mark.parametrize("order", [1, 2])
def test_simulate_consensus_is_constant(tmp_path, order):
    code, out = run(tmp_path, "simulate", "--order", str(order), text=SMALL + "init = consensus\n")
    assert code == 0
    _, traj = read_csv(out / "trajectory.csv")
    # constant up to the last bit that renormalization may touch
    np.testing.assert_allclose(traj[:, 2:5], np.broadcast_to(traj[0, 2:5], traj[:, 2:5].shape), rtol=0, atol=1e-15)


def test_simulate_consensus_emerges(tmp_path):
    code, out = run(tmp_path, "simulate", text="N = 20\nT = 40\ninit = hemisphere\n")
    assert code == 0
    _, metrics = read_csv(out / "metrics.csv")
    assert metrics[-1, 1] <= 1e-3
    assert metrics[-1, 1] < metrics[0, 1]


def test_csv_bodies_are_byte_identical(tmp_path):
    _, a = run(tmp_path, "optimize", "--order", "2", out="a", text=SMALL + "k_max = 5\nv0_scale = 0.2\n")
    _, b = run(tmp_path, "optimize", "--order", "2", out="b", text=SMALL + "k_max = 5\nv0_scale = 0.2\n")
    for name in ("trajectory.csv", "metrics.csv", "history.csv", "control.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ra, rb = (json.loads((o / "report.json").read_text()) for o in (a, b))
    assert ra.pop("config_out") != rb.pop("config_out")
    assert ra == rb
    assert not list(a.glob("*.tmp"))


def test_seed_override_changes_data(tmp_path):
    _, a = run(tmp_path, "simulate", "--seed", "1", out="a")
    _, b = run(tmp_path, "simulate", "--seed", "2", out="b")
    assert (a / "trajectory.csv").read_bytes() != (b / "trajectory.csv").read_bytes()


def test_floats_round_trip(tmp_path):
    _, out = run(tmp_path, "simulate")
    line = (out / "trajectory.csv").read_text().splitlines()[1]
    for field in line.split(",")[2:]:
        assert format(float(field), ".17g") == field


# -- optimize / compare ------------------------------------------------------------

@pytest.mark.parametrize("order", [1, 2])
def test_optimize_consensus_has_one_history_row(tmp_path, order):
    code, out = run(tmp_path, "optimize", "--order", str(order), text=SMALL + "init = consensus\n")
    assert code == 0
    header, hist = read_csv(out / "history.csv")
    assert header == ["iteration", "total", "tracking", "energy", "grad_norm", "step"]
    assert hist.shape[0] == 1
    _, ctrl = read_csv(out / "control.csv")
    np.testing.assert_array_equal(ctrl[:, 2:], 0.0)


def test_optimize_lowers_cost(tmp_path):
    code, out = run(tmp_path, "optimize", text=SMALL + "k_max = 40\n")
    assert code == 0
    _, hist = read_csv(out / "history.csv")
    assert hist[:, 1].min() < hist[0, 1]
    rep = json.loads((out / "report.json").read_text())
    assert rep["best_total"] == hist[:, 1].min()
    assert rep["best_total"] < rep["zero_control_total"]


def test_regularization_sweep_on_control_file(tmp_path):
    peaks = {}
    for lam in ("0.1", "1000"):
        text = SMALL.replace("lambda = 0.1", f"lambda = {lam}")
        code, out = run(tmp_path, "optimize", text=text, out=f"lam{lam}")
        assert code == 0
        _, ctrl = read_csv(out / "control.csv")
        peaks[lam] = np.linalg.norm(ctrl[:, 2:], axis=1).max()
    assert peaks["1000"] < 1e-2 * peaks["0.1"]


def test_step_failure_exit_code(tmp_path):
    text = SMALL + "alpha0 = 1e2\nalpha_min = 1e2\nalpha_max = 1e2\nrenorm = false\n"
    code, out = run(tmp_path, "optimize", text=text)
    assert code == 3
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "FAILED"
    assert rep["termination"] == "step-failure"
    # partial outputs are kept
    assert (out / "history.csv").exists() and (out / "control.csv").exists()


def test_integrator_abort_exit_code(tmp_path, monkeypatch):
    from spherectl import cli
    from spherectl.errors import IntegrationError

    def boom(*args, **kwargs):
        raise IntegrationError("norm left band", step=7)

    monkeypatch.setattr(cli, "integrate_forward", boom)
    code, out = run(tmp_path, "simulate")
    assert code == 2
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "FAILED" and rep["step"] == 7


@pytest.mark.parametrize("order", [1, 2])
def test_compare_outputs(tmp_path, order):
    text = SMALL.replace("T = 1.0", "T = 2.0") + "k_max = 30\nv0_scale = 0.2\n"
    code, out = run(tmp_path, "compare", "--order", str(order), text=text)
    assert code == 0
    header, cmp = read_csv(out / "compare.csv")
    assert header[1:3] == ["position_variance_controlled", "position_variance_uncontrolled"]
    assert len(header) == (3 if order == 1 else 5)
    assert cmp[0, 1] == cmp[0, 2]  # same initial data
    assert cmp[-1, 1] < cmp[-1, 2]
    for name in ("trajectory_controlled.csv", "trajectory_uncontrolled.csv", "control.csv", "history.csv"):
        assert (out / name).exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["terminal_variance_ratio"] < 1


def test_compare_without_coupling(tmp_path):
    # with kappa = 0 the control is the only contraction mechanism
    text = SMALL + "kappa = 0\nk_max = 30\n"
    code, out = run(tmp_path, "compare", text=text)
    assert code == 0
    _, cmp = read_csv(out / "compare.csv")
    np.testing.assert_allclose(cmp[:, 2], cmp[0, 2], rtol=1e-12)
    assert cmp[-1, 1] < 0.9 * cmp[0, 1]


# -- gradcheck ------------------------------------------------------------------

GRADCHECK = "N = 3\nd = 3\nT = 1\ndt = 0.01\nfd_coords = 200\n"


@pytest.mark.parametrize("order", [1, 2])
def test_gradcheck_passes(tmp_path, order):
    code, out = run(tmp_path, "gradcheck", "--order", str(order), text=GRADCHECK)
    assert code == 0
    rep = json.loads((out / "gradcheck.json").read_text())
    assert rep["passed"] is True
    assert rep["relative_error"] <= 1e-3
    assert rep["n_coordinates"] == len(rep["coordinates"]) == 200


def test_gradcheck_sign_flip_fails(tmp_path):
    code, out = run(tmp_path, "gradcheck", text=GRADCHECK + "gradcheck_flip_sign = true\n")
    assert code != 0
    rep = json.loads((out / "gradcheck.json").read_text())
    assert rep["passed"] is False
    assert rep["relative_error"] == pytest.approx(2.0, abs=1e-2)


def test_gradcheck_oracle_seed_is_separate(tmp_path):
    _, a = run(tmp_path, "gradcheck", text=GRADCHECK + "oracle_seed = 1\n", out="a")
    _, b = run(tmp_path, "gradcheck", text=GRADCHECK + "oracle_seed = 2\n", out="b")
    ca = json.loads((a / "gradcheck.json").read_text())["coordinates"]
    cb = json.loads((b / "gradcheck.json").read_text())["coordinates"]
    assert ca != cb
