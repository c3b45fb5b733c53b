import json
import math

import numpy as np
import pytest

from ionwalk.cli import main, read_table

ALPHA = "0.56548667764616278"  # 3 Omega_up eta t for the default trap


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = main(["--out-dir", str(out), "--dim", "100", *argv])
    return code, out


def test_ideal_output_is_deterministic(tmp_path):
    c1, a = run(tmp_path, "ideal", "--steps", "5", sub="a")
    c2, b = run(tmp_path, "--threads", "2", "ideal", "--steps", "5", sub="b")
    assert c1 == c2 == 0
    for name in ("ideal_moments.csv", "ideal_position.csv", "ideal_pn.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    head = json.loads((a / "ideal_moments.csv").read_text().splitlines()[0][2:])
    assert head["program"] == "ionwalk" and head["config"]["steps"] == 5
    cols, data = read_table(a / "ideal_moments.csv")
    assert cols == ["N", "mean_x", "var_x", "var_p", "mean_n"]
    assert np.allclose(data[0], [0, 0, 0.5, 0.5, 0], atol=1e-14)
    assert data.shape == (6, 5)


def test_zero_steps_gives_vacuum_row(tmp_path):
    code, out = run(tmp_path, "ideal", "--steps", "0")
    assert code == 0
    _, data = read_table(out / "ideal_moments.csv")
    assert data.shape == (1, 5)


def test_ion_with_toggles_off_reduces_to_ideal(tmp_path):
    assert run(tmp_path, "ion", "--steps", "6", "--no-B", "--no-Uoff", "--phi", "0.3", sub="ion")[0] == 0
    assert run(tmp_path, "ideal", "--steps", "6", "--alpha", ALPHA, "--phi", "0.3", sub="ideal")[0] == 0
    _, ion = read_table(tmp_path / "ion" / "ion_moments.csv")
    _, ideal = read_table(tmp_path / "ideal" / "ideal_moments.csv")
    assert np.abs(ion - ideal).max() < 1e-10


def test_ion_oracle_writes_fidelities(tmp_path):
    code, out = main(["--out-dir", str(tmp_path), "--dim", "40", "ion", "--steps", "2", "--oracle"]), tmp_path
    assert code == 0
    _, fid = read_table(out / "ion_oracle_fidelity.csv")
    assert fid.shape == (2, 2) and np.all(fid[:, 1] >= 0.999)


def test_sweep_infinite_q_matches_ideal(tmp_path):
    assert run(tmp_path, "sweep", "--q", "inf", "--n-traj", "1", "--steps", "5", sub="s")[0] == 0
    assert run(tmp_path, "ideal", "--steps", "5", "--phi", "0", sub="i")[0] == 0
    cols, sweep = read_table(tmp_path / "s" / "sweep_qinf.csv")
    _, ideal = read_table(tmp_path / "i" / "ideal_moments.csv")
    assert cols[-1] == "spread_x"
    assert np.abs(sweep[:, :5] - ideal).max() < 1e-12
    fcols, _ = read_table_lenient(tmp_path / "s" / "sweep_fits.csv")
    assert fcols[:4] == ["q", "varsigma", "varsigma_err", "xi"]


def read_table_lenient(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return lines[0].split(","), lines[1:]


def test_fit_recovers_exponent(tmp_path):
    table = tmp_path / "sq.csv"
    table.write_text("N,y\n" + "".join(f"{n},{0.5 + 3 * n * n}\n" for n in range(1, 12)))
    code, out = run(tmp_path, "fit", "--input", str(table), "--y-col", "y", "--subtract", "0.5")
    assert code == 0
    lines = [ln for ln in (out / "fit.csv").read_text().splitlines() if not ln.startswith("#")]
    assert float(lines[1].split(",")[1]) == pytest.approx(2.0, abs=1e-12)


def test_wigner_vacuum(tmp_path, capsys):
    code, out = run(tmp_path, "wigner", "--source", "vacuum", "--extent", "6", "--points", "61")
    assert code == 0
    extremes = json.loads(capsys.readouterr().out)
    assert extremes["max"] == pytest.approx(1 / math.pi)
    head = json.loads((out / "wigner.json").read_text())
    assert head["asym_x"] < 1e-12 and head["integral"] == pytest.approx(1.0, abs=1e-6)


def test_readout_round_trip(tmp_path):
    pn = tmp_path / "pn.csv"
    pn.write_text("n,P_n\n" + "".join(f"{n},{1.0 if n == 3 else 0.0}\n" for n in range(25)))
    assert run(tmp_path, "readout", "--mode", "synthesize", "--pn", str(pn))[0] == 0
    sig = tmp_path / "out" / "signal_carrier.csv"
    assert run(tmp_path, "readout", "--mode", "reconstruct", "--signal", str(sig))[0] == 0
    _, data = read_table(tmp_path / "out" / "readout_pn.csv")
    assert np.abs(data[:, 1] - (data[:, 0] == 3)).max() < 1e-6


def test_readout_resolvability_failure_exits_3(tmp_path):
    pn = tmp_path / "pn.csv"
    pn.write_text("n,P_n\n0,1\n")
    assert run(tmp_path, "readout", "--mode", "synthesize", "--pn", str(pn), "--channel", "carrier")[0] == 0
    sig = tmp_path / "out" / "signal_carrier.csv"
    assert run(tmp_path, "readout", "--mode", "reconstruct", "--signal", str(sig), "--n-max", "60")[0] == 3


def test_error_exit_codes(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("N,y\n1,2,3\n")
    assert run(tmp_path, "fit", "--input", str(bad), "--y-col", "y")[0] == 4
    assert run(tmp_path, "fit", "--input", str(tmp_path / "missing.csv"))[0] == 4
    assert main(["--dim", "12", "--out-dir", str(tmp_path), "ideal", "--steps", "10"]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["ideal", "--steps", "many"])
    assert exc.value.code == 2


def test_config_file_and_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# walk settings\nsteps = 3\nphi = 0.0\ndim = 60\n")
    assert main(["--config", str(conf), "--out-dir", str(tmp_path / "c"), "ideal", "--steps", "4"]) == 0
    head = json.loads((tmp_path / "c" / "ideal_moments.csv").read_text().splitlines()[0][2:])
    assert head["config"]["steps"] == 4 and head["config"]["phi"] == 0.0 and head["config"]["dim"] == 60
    conf.write_text("stepz = 3\n")
    assert main(["--config", str(conf), "--out-dir", str(tmp_path), "ideal"]) == 2
