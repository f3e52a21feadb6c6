from importlib import resources

import numpy as np
import pytest

from subdiff import __version__
from subdiff.cli import main
from subdiff.config import TOLERANCE_DEFAULTS, flatten, load_experiment, load_fode, load_toml
from subdiff.errors import ConfigError
from subdiff.frac_calculus import AlgebraicKernel, ZeroKernel

SMALL = """
seed = 3

[orders]
nu = 0.7
nus = [0.3]

[fdo]
type = "I"

[operators]
rho = 1.0
rho_i = [0.5]
a1 = 1.0
a0 = -3.0
b = [0.0]
b0 = 0.0

[kernel]
kind = "algebraic"
coefficient = 0.1
exponent = 0.2

[nonlinearity]
form = "odd_polynomial"
coefficients = [0.0, 0.0, 0.0, 1.0]

[domain]
lower = [0.0]
upper = [1.0]
bc = "dirichlet"

[grid]
nodes = [21]

[time_mesh]
kind = "graded"
T = 2.0
steps = 40

[[initial_conditions]]
kind = "sine_mode"
amplitude = 1.0

[[initial_conditions]]
kind = "random_smooth"
amplitude = 2.0
n_modes = 4
"""


def shipped(name):
    return str(resources.files("subdiff") / "configs" / name)


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_load_small_config(small):
    cfg = load_experiment(small)
    assert len(cfg.problems) == 2
    assert cfg.seed == 3
    assert cfg.grid.shape == (21,)
    assert cfg.mesh.kind == "graded" and cfg.mesh.grading_exponent == pytest.approx(1.3 / 0.7)
    assert isinstance(cfg.problem.kernel, AlgebraicKernel)
    assert cfg.tolerances == TOLERANCE_DEFAULTS
    assert cfg.problems[1].u0.seed == 3


@pytest.mark.parametrize("name", ["example_1d.toml", "corollary1.toml", "planar_neumann.toml",
                                  "absorbing.toml", "h2_violation.toml"])
def test_shipped_configs_parse(name):
    cfg = load_experiment(shipped(name))
    assert cfg.problems


def test_fode_config():
    cfg = load_fode(shipped("fode.toml"))
    assert cfg.spec.orders.M >= 0
    assert cfg.mesh.M > 0


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[orders]\nnu = 0.7\nnus = [0.3,\n[fdo]\n")
    with pytest.raises(ConfigError, match=r"bad\.toml:\d+:\d+"):
        load_toml(p)


@pytest.mark.parametrize("old, new, match", [
    ("lower = [0.0]", "lower = []", "nonempty"),
    ('kind = "algebraic"', 'kind = "gaussian"', "unknown kind"),
    ("exponent = 0.2", "exponent = 1.2", "exponent"),
    ("nus = [0.3]", "nus = [0.8]", "orders"),
    ('bc = "dirichlet"', 'bc = "periodic"', "bc"),
    ("steps = 40", "steps = 0", "steps"),
    ("seed = 3", "", "seed"),
])
def test_config_errors(tmp_path, old, new, match):
    p = tmp_path / "c.toml"
    p.write_text(SMALL.replace(old, new))
    with pytest.raises(ConfigError, match=match):
        load_experiment(p)


def test_unknown_tolerance_rejected(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL + "\n[tolerances]\nbogus = 1.0\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_experiment(p)


def test_zero_kernel(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL.replace('kind = "algebraic"\ncoefficient = 0.1\nexponent = 0.2', 'kind = "zero"'))
    assert isinstance(load_experiment(p).problem.kernel, ZeroKernel)


def test_flatten_order():
    pairs = flatten({"a": 1, "b": {"c": [1, 2], "d": {"e": "x"}}, "f": [{"g": 1}, {"g": 2}]})
    assert pairs == [("a", 1), ("b.c", [1, 2]), ("b.d.e", "x"), ("f[0].g", 1), ("f[1].g", 2)]


# --- command line ------------------------------------------------------------

def test_run_writes_outputs_and_is_deterministic(small, tmp_path, capsys):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", str(small), "--out", str(out1)]) == 0
    assert main(["run", str(small), "--out", str(out2)]) == 0
    for name in ("trajectory.csv", "energy.csv", "report.txt", "decay.svg"):
        a = (out1 / name).read_bytes()
        b = (out2 / name).read_bytes()
        if name == "report.txt":
            a = a.replace(str(out1).encode(), b"")
            b = b.replace(str(out2).encode(), b"")
        assert a == b, name
    lines = (out1 / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "ic,t,V,sup_norm,mem_norm,newton_iters"
    assert len(lines) == 1 + 2 * 41
    assert (out1 / "energy.csv").read_text().splitlines()[0] == "ic,t,V,F,lhs,margin,g"


def test_report_echoes_every_key(small, tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(small), "--out", str(out)]) == 0
    text = (out / "report.txt").read_text()
    assert f"subdiff {__version__}" in text
    for key, _ in flatten(load_toml(small)):
        assert f"\n{key} = " in text, key
    for key in TOLERANCE_DEFAULTS:
        assert f"tolerances.{key} = " in text
    assert "status.h2 = pass" in text
    assert "monitor_ok = " in text


def test_svg_can_be_disabled(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL + "\n[outputs]\nsvg = false\n")
    out = tmp_path / "o"
    assert main(["run", str(p), "--out", str(out)]) == 0
    assert not (out / "decay.svg").exists()


def test_hypothesis_failure_exit_code(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", shipped("h2_violation.toml"), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "h2" in err
    assert not out.exists()
    assert main(["run", shipped("h2_violation.toml"), "--force", "--out", str(out)]) == 0
    assert (out / "trajectory.csv").exists()


def test_validate_command(small, capsys):
    assert main(["validate", str(small)]) == 0
    assert "status.h1 = pass" in capsys.readouterr().out
    assert main(["validate", shipped("h2_violation.toml")]) == 2


def test_input_errors_exit_one(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 1
    p = tmp_path / "empty.toml"
    p.write_text(SMALL.replace("upper = [1.0]", "upper = [0.0]"))
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_ml_command(capsys):
    assert main(["ml", "0.8", "0.8", "0.4", "--z", "-1", "-0.5"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.19634086128674417, rel=1e-12)
    assert main(["ml", "1", "1", "--z", "1", "2"]) == 1


def test_fode_command(tmp_path, capsys):
    out = tmp_path / "f"
    assert main(["fode", shipped("fode.toml"), "--out", str(out)]) == 0
    data = np.loadtxt(out / "fode.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 3
    gap = np.max(np.abs(data[:, 1] - data[:, 2]) / np.abs(data[:, 2]))
    assert gap <= 1e-4
    assert "max relative gap" in capsys.readouterr().out


def test_unknown_suite(capsys):
    assert main(["reproduce", "nonsense"]) == 1
    assert "unknown suite" in capsys.readouterr().err


def test_quick_suite_passes(capsys):
    assert main(["reproduce", "ml"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 3 and "FAIL" not in out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


@pytest.mark.parametrize("form", ["saturating_power", "paper_example"])
def test_saturating_power_form(tmp_path, form):
    p = tmp_path / "c.toml"
    p.write_text(SMALL.replace('form = "odd_polynomial"\ncoefficients = [0.0, 0.0, 0.0, 1.0]',
                               f'form = "{form}"\na = 0.3\nb = 0.6'))
    f = load_experiment(p).problem.f
    assert f.describe() == {"form": "saturating_power", "a": 0.3, "b": 0.6}
