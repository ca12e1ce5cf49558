import subprocess
import sys

import pytest

# Artifacts are produced through the simulator's public CLI; the plot
# package itself only ever touches the CSV files.

PLAN = """
[experiment]
output_dir = "{out}"
fit_window = [100.0, 1000.0]

[grid]
p = 2.0
r = [1.5, 2.5, 4.0]

[graph]
kind = "lattice"
dim = 1
radius = 280

[absorption]
kind = "constant"
c = 1.0

[time]
t_end = 1000.0
dt_init = 1e-4
rel_step_cap = 0.02

[output]
t_first = 1.0
ratio = 1.333521432163324
count = 25
"""

MODEL = """
[model]
p = 2.0
r = 1.5
N = 1

[absorption]
kind = "constant"
c = 1.0
"""

THEORY_TIMES = "100,177.83,316.23,562.34,1000"


def run_cli(module, args):
    proc = subprocess.run([sys.executable, "-m", module, *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr + proc.stdout
    return proc


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Simulator outputs for the subcritical lattice run and its theory table."""
    root = tmp_path_factory.mktemp("artifacts")
    out = root / "out"
    plan = root / "plan.toml"
    plan.write_text(PLAN.format(out=out))
    model = root / "model.toml"
    model.write_text(MODEL)
    theory = root / "theory.csv"
    run_cli("plapdecay.cli", ["run", str(plan)])
    run_cli("plapdecay.cli", ["theory", str(model), "--t", THEORY_TIMES,
                              "--out", str(theory)])
    series = sorted(out.glob("run*.csv"))
    assert len(series) == 3
    return {
        "out": out,
        "series": series,
        "subcritical": out / "run00_p2_r1.5.csv",
        "summary": out / "summary.csv",
        "theory": theory,
    }
