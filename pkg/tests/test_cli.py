import numpy as np
import pytest

from pspin import integrate, parse_config
from pspin.cli import main, read_csv
from pspin.config import ConfigError

HARD = """
[model]
beta = 0.2
h = 0.1
alpha = 0.5
a = 0, 0, 1
[integrator]
dt = 0.05
t_max = 2
[fdt]
dt = 0.01
tau_max = 3
h_grid = 0, 1
[series]
n_max = 3
tau_max = 1
[compare]
mode = fdt
t_waits = 0.5, 1
tau_max = 0.5
[output]
stride = 1
"""

SOFT = """
[model]
beta = 0.3
h = 0.2
alpha = 0.5
a = 0, 1
[confinement]
type = soft
L = 100
[integrator]
dt = 0.01
t_max = 0.5
[mc]
N = 30
dt_sde = 0.001
t_max = 0.5
n_disorder = 3
n_noise = 2
seed = 5
record_times = 0, 0.25, 0.5
[compare]
mode = mc
"""


def run(tmp_path, text, cmd, *extra, name="out"):
    cfg = tmp_path / ("%s.ini" % name)
    cfg.write_text(text)
    out = tmp_path / name
    code = main([cmd, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


# the Gram-eigenvalue invariant needs a fine grid (its error is O(dt^2))
FINE = HARD.replace("dt = 0.05\nt_max = 2", "dt = 0.002\nt_max = 0.5")


def test_integrate_outputs_and_round_trip(tmp_path):
    code, out = run(tmp_path, FINE, "integrate")
    assert code == 0
    h2, rows2 = read_csv(out / "two_time.csv")
    h1, rows1 = read_csv(out / "one_time.csv")
    hi, rowsi = read_csv(out / "invariants.csv")
    assert h2 == ["s", "t", "C", "R", "Q"]
    assert h1 == ["s", "M", "K", "D", "mu"]
    assert hi == ["name", "value", "tolerance", "pass"]
    assert all(r[3] == "true" for r in rowsi)
    cfg = parse_config(FINE)
    b = integrate(cfg.model_params(), cfg.integrator_config())
    assert len(rows2) == b.n * (b.n + 1) // 2
    for s, t, C, R, Q in rows2:
        i, j = int(round(s / b.dt)), int(round(t / b.dt))
        assert (C, R, Q) == (b.C[i, j], b.R[i, j], b.Q[i, j])
    np.testing.assert_array_equal(np.array(rows1)[:, 1], b.M)
    np.testing.assert_array_equal(np.array(rows1)[:, 4], b.mu)


def test_failed_invariant_exit_code(tmp_path):
    code, out = run(tmp_path, HARD, "integrate")
    assert code == 1
    _, rows = read_csv(out / "invariants.csv")
    assert [r[0] for r in rows if r[3] == "false"] == ["min_eigenvalue_Q"]


def test_stride_and_precision(tmp_path):
    text = FINE.replace("stride = 1", "stride = 25\nprecision = 6")
    code, out = run(tmp_path, text, "integrate")
    assert code == 0
    _, rows = read_csv(out / "two_time.csv")
    assert len(rows) == 11 * 12 // 2
    assert len((out / "one_time.csv").read_text().splitlines()[2].split(",")[1]) <= 8


def test_outputs_are_byte_identical(tmp_path):
    _, a = run(tmp_path, SOFT, "simulate", name="a")
    _, b = run(tmp_path, SOFT, "simulate", name="b")
    assert (a / "mc_stats.csv").read_bytes() == (b / "mc_stats.csv").read_bytes()
    lines = (a / "mc_stats.csv").read_text().splitlines()
    assert lines[0] == "# seed=5"
    assert lines[1] == "s,t,observable,estimate,stderr,n"
    _, c = run(tmp_path, SOFT, "simulate", "--seed", "6", name="c")
    assert (c / "mc_stats.csv").read_text().splitlines()[0] == "# seed=6"


def test_simulate_rejects_hard_constraint(tmp_path, capsys):
    code, out = run(tmp_path, HARD.replace("[integrator]", SOFT[SOFT.index("[mc]"):SOFT.index("[compare]")]
                                           + "[integrator]"), "simulate")
    assert code == 2
    assert "SDE requires soft constraint" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("text", [
    HARD.replace("a = 0, 0, 1", "a = 0.5, 0, 1"),        # random field in the stationary analysis
    HARD.replace("[output]", "[output]\ncolour = red"),   # unknown key
    HARD.replace("[output]", "[plot]\nx = 1\n[output]"),  # unknown section
    HARD.replace("dt = 0.01", "dt = fast"),               # unparsable value
    HARD.replace("a = 0, 0, 1\n", ""),                    # missing mixture
])
def test_validation_failures_write_nothing(tmp_path, text):
    code, out = run(tmp_path, text, "fdt")
    assert code == 2
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert main(["integrate", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_blow_up_exit_code(tmp_path):
    text = """
[model]
beta = 3
a = 0, 0, 1
[confinement]
type = soft
L = 0
[integrator]
dt = 0.5
t_max = 200
"""
    code, out = run(tmp_path, text, "integrate")
    assert code == 3
    _, rows = read_csv(out / "invariants.csv")
    assert rows[0][0] == "blow_up_row" and rows[0][3] == "false"
    assert (out / "one_time.csv").exists()


def test_resource_guard_exit_code(tmp_path):
    text = SOFT.replace("N = 30", "N = 5000")
    code, out = run(tmp_path, text, "simulate")
    assert code == 4
    assert not out.exists()


def test_fdt_and_phase(tmp_path):
    code, out = run(tmp_path, HARD, "fdt")
    assert code == 0
    h, rows = read_csv(out / "fdt.csv")
    assert h == ["tau", "C_fdt", "R_fdt"] and len(rows) == 301
    assert rows[0][1] == 1.0
    h, rows = read_csv(out / "phase.csv")
    assert h == ["h", "beta_c", "q", "gamma_ratio", "x_star", "status"]
    assert rows[0][1] == pytest.approx(np.sqrt(2), rel=1e-8)
    gp = (out / "phase.gp").read_text()
    assert "phase.csv" in gp and "predicted" in gp
    code, out2 = run(tmp_path, HARD, "phase", name="p")
    assert code == 0
    assert (out2 / "phase.csv").read_bytes() == (out / "phase.csv").read_bytes()


def test_phase_requires_grid(tmp_path):
    code, _ = run(tmp_path, HARD.replace("h_grid = 0, 1\n", ""), "phase")
    assert code == 2


def test_oracle(tmp_path):
    code, out = run(tmp_path, HARD, "oracle")
    assert code == 0
    h, rows = read_csv(out / "oracle.csv")
    assert h == ["s", "t", "R_series", "R_integrator", "rel_err"]
    assert all(r[4] <= 1e-3 for r in rows)


def test_compare_fdt_writes_gaps(tmp_path):
    code, out = run(tmp_path, HARD, "compare")
    assert code in (0, 1)
    h, rows = read_csv(out / "compare.csv")
    assert h == ["t_wait", "gap_C", "gap_FDT"] and len(rows) == 2


def test_compare_grid_mismatch(tmp_path):
    code, out = run(tmp_path, HARD.replace("t_waits = 0.5, 1", "t_waits = 0.52, 1"), "compare")
    assert code == 2 and not out.exists()
    code, out = run(tmp_path, SOFT.replace("dt_sde = 0.001", "dt_sde = 0.05")
                    .replace("record_times = 0, 0.25, 0.5", "record_times = 0, 0.5"), "compare",
                    name="m")
    assert code == 2 and not out.exists()


def test_compare_mc(tmp_path):
    code, out = run(tmp_path, SOFT, "compare")
    h, rows = read_csv(out / "compare.csv")
    assert h == ["s", "t", "observable", "mc", "reference", "stderr", "z", "pass"]
    assert code == (0 if all(r[7] == "true" for r in rows) else 1)


def test_bad_cli_arguments(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(HARD)
    assert main(["integrate", "--config", str(cfg), "--workers", "0"]) == 2
    assert main(["integrate", "--config", str(cfg), "--seed", "-1"]) == 2
    with pytest.raises(SystemExit):
        main(["bogus", "--config", str(cfg)])


def test_config_builders():
    cfg = parse_config(SOFT)
    p = cfg.model_params()
    assert not p.hard and p.confinement.L == 100.0
    assert cfg.mc_config(7).seed == 7
    with pytest.raises(ConfigError):
        parse_config(SOFT.replace("L = 100", "L = 100\nk_exp = 0")).model_params()
    with pytest.raises(ConfigError):
        parse_config(SOFT.replace("type = soft", "type = squishy")).model_params()
    with pytest.raises(ConfigError):
        parse_config("[output]\nprecision = 30\n").output()
