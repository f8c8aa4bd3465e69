import subprocess

import numpy as np
import pytest

from epcde.blocks import build_schedule
from epcde.cli import main
from epcde.estimator import SamplePairs
from epcde.io import ParseError, read_dataset, read_grid, write_dataset, write_grid


def _dataset(path, n=500, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    y = np.clip(0.5 + 0.3 * np.cos(2 * np.pi * x) + 0.1 * rng.normal(size=n), 0, 1)
    write_dataset(path, SamplePairs(y, x, "random"))
    return path


def test_estimate_records_schedule(tmp_path):
    out = tmp_path / "grid.csv"
    assert main(["estimate", "--input", str(_dataset(tmp_path / "d.csv")), "--grid", "21", "11",
                 "--output", str(out)]) == 0
    y, x, values, meta = read_grid(out)
    s = build_schedule(500, "square")
    assert int(meta["K"]) == s.K and int(meta["T"]) == s.T
    assert meta["loss"] == "square" and meta["n"] == "500"
    assert values.shape == (21, 11) and np.all(np.isfinite(values))


def test_estimate_project_nonnegative(tmp_path):
    data = _dataset(tmp_path / "d.csv", n=60, seed=3)
    for loss in ("square", "line"):
        out = tmp_path / f"{loss}.csv"
        assert main(["estimate", "--input", str(data), "--loss", loss, "--grid", "41", "9", "--project",
                     "--output", str(out)]) == 0
        assert np.all(read_grid(out)[2] >= 0)


def test_estimate_bad_row_cites_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("y,x\n0.1,0.2\n0.3,1.2\n")
    assert main(["estimate", "--input", str(path), "--output", str(tmp_path / "o.csv")]) == 2
    assert "line 3" in capsys.readouterr().err
    with pytest.raises(ParseError, match="line 3"):
        read_dataset(path)


@pytest.mark.parametrize("body", ["y,x\nnan,0.5\n", "y,x\n0.1\n", "a,b\n0.1,0.2\n", "y,x\n", "y,x\n0.1,inf\n"])
def test_read_dataset_rejects(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ParseError):
        read_dataset(path)


def test_estimate_too_small_exits_3(tmp_path):
    data = _dataset(tmp_path / "d.csv", n=10)
    assert main(["estimate", "--input", str(data), "--output", str(tmp_path / "o.csv")]) == 3


def test_estimate_bad_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--input", "x.csv", "--loss", "huber", "--output", "o.csv"])
    assert exc.value.code == 2


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    data = SamplePairs(rng.normal(size=50), rng.random(50), "fixed")
    write_dataset(tmp_path / "d.csv", data)
    back = read_dataset(tmp_path / "d.csv")
    assert np.array_equal(back.y, data.y) and np.array_equal(back.x, data.x) and back.kind == "fixed"


def test_grid_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(2)
    y, x = np.linspace(-1, 1, 7), np.linspace(0, 1, 5)
    values = rng.normal(size=(7, 5)) * 1e-3 + np.pi
    write_grid(tmp_path / "g.csv", y, x, values, {"loss": "line", "n": 100})
    y2, x2, v2, meta = read_grid(tmp_path / "g.csv")
    assert np.array_equal(y, y2) and np.array_equal(x, x2) and np.array_equal(values, v2)
    assert meta == {"loss": "line", "n": "100"}
    lines = (tmp_path / "g.csv").read_text().splitlines()
    (tmp_path / "h.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError):
        read_grid(tmp_path / "h.csv")


def test_risk_outputs(capsys, tmp_path):
    assert main(["risk", "--class", "sobolev", "1", "1", "--Q", "1", "--n", "10000", "--loss", "line",
                 "--design", "uniform"]) == 0
    out = capsys.readouterr().out
    risk = float(next(l for l in out.splitlines() if l.startswith("risk:")).split(":")[1])
    assert risk == pytest.approx(2.3033e-3, abs=1e-7)
    assert "risk_series" in out and "residual" in out
    assert main(["risk", "--class", "analytic", "1", "1", "--n", "22027", "--output", str(tmp_path / "r.csv")]) == 0
    out = capsys.readouterr().out
    risk = float(next(l for l in out.splitlines() if l.startswith("risk:")).split(":")[1])
    assert risk == pytest.approx(1.4451e-3, abs=1e-7)
    assert (tmp_path / "r.csv").read_text().startswith("class,loss,n,")


def test_risk_errors(tmp_path):
    assert main(["risk", "--class", "sobolev", "1", "1", "--n", "100"]) == 2
    assert main(["risk", "--class", "sobolev", "one", "1", "--Q", "1", "--n", "100"]) == 2
    assert main(["risk", "--class", "besov", "1", "--n", "100"]) == 2


def test_risk_design_file_difficulty(capsys, tmp_path):
    xs = np.linspace(0, 1, 2001)
    path = tmp_path / "p.csv"
    path.write_text("x,p\n" + "".join(f"{a:.17g},{(1 + a) / 1.5:.17g}\n" for a in xs))
    assert main(["risk", "--class", "bounded_spectrum", "3", "--n", "100", "--design", str(path)]) == 0
    out = capsys.readouterr().out
    d = float(next(l for l in out.splitlines() if l.startswith("difficulty:")).split(":")[1])
    assert d == pytest.approx(1.5 * np.log(2), abs=1e-5)


def _design(tmp_path, target, body, capsys):
    path = tmp_path / "in.csv"
    path.write_text(body)
    flag = "--sigma-file" if target == "regression" else "--mass-file"
    out = tmp_path / "design.csv"
    code = main(["design", "--target", target, flag, str(path), "--grid", "201", "--output", str(out)])
    if code:
        return code, None
    arr = np.loadtxt(out, delimiter=",", skiprows=1)
    return code, arr


def test_design_constant_sigma(tmp_path, capsys):
    code, arr = _design(tmp_path, "regression", "x,sigma\n0,2\n0.5,2\n1,2\n", capsys)
    assert code == 0
    assert np.allclose(arr[:, 1], 1.0, atol=1e-12)
    assert np.trapezoid(arr[:, 1], arr[:, 0]) == pytest.approx(1.0, abs=1e-6)


def test_design_mass(tmp_path, capsys):
    xs = np.linspace(0, 1, 1001)
    body = "x,mass\n" + "".join(f"{a:.17g},{(1 + a) ** 2:.17g}\n" for a in xs)
    code, arr = _design(tmp_path, "cdensity", body, capsys)
    assert code == 0
    assert np.allclose(arr[:, 1], (1 + arr[:, 0]) / 1.5, atol=1e-4)
    assert np.trapezoid(arr[:, 1], arr[:, 0]) == pytest.approx(1.0, abs=1e-6)


def test_design_rejects_negative(tmp_path, capsys):
    code, _ = _design(tmp_path, "regression", "x,sigma\n0,1\n0.5,-1\n1,1\n", capsys)
    assert code == 2
    assert main(["design", "--target", "cdensity"]) == 2


def _config(tmp_path, replicates=3):
    path = tmp_path / "study.cfg"
    path.write_text(f"model = independent\nloss = line\nn = 60, 80\nreplicates = {replicates}\nseed = 4\n"
                    "estimators = ep, super, sub\nny = 161\nnx = 17\n")
    return path


def test_simulate_outputs_deterministic(tmp_path):
    cfg = _config(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "b")]) == 0
    for name in ("summary.csv", "replicates.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "summary.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["n", "med_ratio_super", "med_ratio_sub"]
    assert len((tmp_path / "a" / "replicates.csv").read_text().splitlines()) == 1 + 2 * 3


def test_simulate_bad_config(tmp_path):
    assert main(["simulate", "--config", str(_config(tmp_path, 0)), "--output", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg"), "--output", str(tmp_path / "o")]) == 2


def test_shipped_config_parses():
    from pathlib import Path

    from epcde.simlab import load_config

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "independent_normal_line.cfg")
    assert cfg.replicates == 500 and cfg.loss == "line"
    assert set(cfg.n_values) >= {100, 150, 200, 300}


def test_console_script_exit_codes(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x\n0.1,1.2\n")
    proc = subprocess.run(["epcde", "estimate", "--input", str(bad), "--output", str(tmp_path / "o.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "line 2" in proc.stderr
    proc = subprocess.run(["epcde", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
