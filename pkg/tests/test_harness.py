import math

import numpy as np
import pytest

from plapdecay import (AbsorptionProfile, ConfigError, DecaySeries, RateModel,
                       fit_decay_exponent, parse_config, parse_model_file,
                       run_experiment, theory_report)
from plapdecay.cli import main as cli_main
from plapdecay.harness import THEORY_HEADER, ExperimentPlan

MINIMAL_PLAN = """
[experiment]
output_dir = "{out}"

[grid]
p = 2.0
r = {r}

[graph]
kind = "lattice"
dim = 1
radius = 70

[absorption]
kind = "constant"
c = 1.0

[time]
t_end = 64.0
rel_step_cap = 0.05

[output]
t_first = 1.0
ratio = 1.5
count = 11
"""


def write_plan(tmp_path, text, name="plan.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def synthetic_series(fn, t):
    t = np.asarray(t, dtype=float)
    m = np.array([fn(v) for v in t])
    z = np.zeros_like(t)
    return DecaySeries(t=t, mass=m, sup=m.copy(), flux_cum=z,
                       absorbed_cum=z.copy(), dt=z.copy())


class TestParseConfig:
    def test_minimal_single_run(self, tmp_path):
        plan = parse_config(write_plan(
            tmp_path, MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5")))
        assert len(plan.cases) == 1
        case = plan.cases[0]
        assert case.config.p == 2.0
        assert case.config.r == 1.5
        assert case.N == 1

    def test_sweep_cartesian(self, tmp_path):
        plan = parse_config(write_plan(
            tmp_path, MINIMAL_PLAN.format(out=tmp_path / "o",
                                          r="[1.5, 2.5, 4.0]")))
        assert len(plan.cases) == 3
        assert [c.config.r for c in plan.cases] == [1.5, 2.5, 4.0]
        assert len({c.label for c in plan.cases}) == 3

    def test_rejects_parameter_window(self, tmp_path):
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5").replace(
            "p = 2.0", "p = 3.0")
        with pytest.raises(ConfigError, match=r"r\+1-p = -0.5"):
            parse_config(write_plan(tmp_path, text))

    def test_rejects_bad_toml_with_location(self, tmp_path):
        path = write_plan(tmp_path, "[grid\np = 2.0\n")
        with pytest.raises(ConfigError, match="line"):
            parse_config(path)

    def test_rejects_missing_keys(self, tmp_path):
        with pytest.raises(ConfigError, match="t_end"):
            parse_config(write_plan(tmp_path, "[grid]\np = 2.0\nr = 2.0\n"))

    def test_fit_window_validation(self, tmp_path):
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5") + \
            "\n[experiment.extra]\n"
        text = text.replace('output_dir = "', 'fit_window = [30.0, 10.0]\n'
                            'output_dir = "')
        with pytest.raises(ConfigError, match="fit_window"):
            parse_config(write_plan(tmp_path, text))

    def test_fit_window_beyond_t_end(self, tmp_path):
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5").replace(
            'output_dir = "', 'fit_window = [1.0, 100.0]\noutput_dir = "')
        with pytest.raises(ConfigError, match="exceeds t_end"):
            parse_config(write_plan(tmp_path, text))

    def test_auto_radius(self, tmp_path):
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5").replace(
            "radius = 12", 'radius = "auto"')
        plan = parse_config(write_plan(tmp_path, text))
        spec = plan.cases[0].config.graph_source
        assert spec.radius >= math.ceil(8 * math.sqrt(64.0))


class TestFitDecayExponent:
    def test_exact_power_law(self):
        s = synthetic_series(lambda t: t ** -1.5, np.geomspace(1, 100, 12))
        slope, stderr = fit_decay_exponent(s, 1.0, 100.0)
        assert slope == pytest.approx(-1.5, abs=1e-12)
        assert stderr == pytest.approx(0.0, abs=1e-12)

    def test_constant_series(self):
        s = synthetic_series(lambda t: 7.0, np.geomspace(1, 100, 8))
        slope, _ = fit_decay_exponent(s, 1.0, 100.0)
        assert slope == pytest.approx(0.0, abs=1e-14)

    def test_perturbed_power_law(self):
        s = synthetic_series(
            lambda t: t ** -1.0 * (1 + 0.01 * math.sin(math.log(t))),
            np.geomspace(1, 1000, 40))
        slope, _ = fit_decay_exponent(s, 1.0, 1000.0)
        assert abs(slope - (-1.0)) <= 0.02

    def test_window_restriction(self):
        s = synthetic_series(lambda t: t ** -2.0, np.geomspace(1, 100, 20))
        slope, _ = fit_decay_exponent(s, 10.0, 100.0)
        assert slope == pytest.approx(-2.0, abs=1e-12)

    def test_requires_five_records(self):
        s = synthetic_series(lambda t: t ** -1.0, [1, 2, 4, 8])
        with pytest.raises(ValueError, match="at least 5"):
            fit_decay_exponent(s, 1.0, 8.0)

    def test_rejects_nonpositive_mass(self):
        s = synthetic_series(lambda t: t - 3.0, [1, 2, 3, 4, 5, 6])
        with pytest.raises(ValueError, match="mass"):
            fit_decay_exponent(s, 1.0, 6.0)


class TestRunExperiment:
    def test_subcritical_decay_row(self, tmp_path):
        plan = parse_config(write_plan(
            tmp_path, MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5")))
        rows = run_experiment(plan)
        assert len(rows) == 1
        row = rows[0]
        assert row.error == ""
        assert row.verdict == "decay"
        assert row.slope < -0.5
        assert (plan.output_dir / f"{row.label}.csv").exists()
        assert (plan.output_dir / "summary.csv").exists()

    def test_empty_plan(self, tmp_path):
        plan = ExperimentPlan(cases=(), output_dir=tmp_path / "empty")
        assert run_experiment(plan) == []
        header = (tmp_path / "empty" / "summary.csv").read_text().splitlines()
        assert len(header) == 1

    def test_row_failure_isolated(self, tmp_path):
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="[1.5, 2.0]")
        text = text.replace('kind = "delta"', "")
        text += '\n[initial]\nkind = "file"\npath = "missing.txt"\n'
        plan = parse_config(write_plan(tmp_path, text))
        rows = run_experiment(plan)
        assert all(row.error for row in rows)
        assert (plan.output_dir / "summary.csv").exists()

    def test_worker_count_does_not_change_outputs(self, tmp_path):
        outputs = {}
        for workers, sub in ((1, "w1"), (2, "w2")):
            text = MINIMAL_PLAN.format(out=tmp_path / sub, r="[1.5, 4.0]")
            text = text.replace('output_dir = "',
                                f"workers = {workers}\noutput_dir = \"")
            plan = parse_config(write_plan(tmp_path, text, f"{sub}.toml"))
            run_experiment(plan)
            outputs[sub] = {
                p.name: p.read_bytes()
                for p in sorted(plan.output_dir.iterdir())}
        assert outputs["w1"] == outputs["w2"]

    def test_envelope_columns_present(self, tmp_path):
        plan = parse_config(write_plan(
            tmp_path, MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5")))
        row = run_experiment(plan)[0]
        assert np.isfinite(row.env_ratio_max)
        assert row.env_ratio_max >= row.env_ratio_min > 0
        assert row.fitted_C == row.env_ratio_max

    def test_decay_verdict_checked_against_critical_exponent(self, tmp_path):
        # r = 4 >= r* = 3 at (p=2, N=1): a decay verdict (forced here by a
        # permissive threshold) must be flagged as a finding, not accepted.
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="4.0").replace(
            'output_dir = "', 'decay_threshold = 0.999\noutput_dir = "')
        plan = parse_config(write_plan(tmp_path, text))
        row = run_experiment(plan)[0]
        assert row.verdict == "decay"
        assert "r*" in row.finding

    def test_box_initial_data(self, tmp_path):
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5")
        text += '\n[initial]\nkind = "box"\nwidth = 2\nmass = 1.0\n'
        plan = parse_config(write_plan(tmp_path, text))
        row = run_experiment(plan)[0]
        assert row.error == ""
        assert row.mass_initial == pytest.approx(1.0)

    def test_edge_list_plan_without_absorption(self, tmp_path):
        graph_file = tmp_path / "pair.txt"
        graph_file.write_text("root 0\n0 1 1.0\n")
        text = """
[experiment]
output_dir = "{out}"

[grid]
p = 2.0
r = 2.0

[graph]
kind = "edge_list"
path = "{path}"

[absorption]
kind = "constant"
c = 0.0

[time]
t_end = 8.0
rel_step_cap = 0.05

[output]
t_first = 0.5
ratio = 2.0
count = 5
""".format(out=tmp_path / "o", path=graph_file)
        plan = parse_config(write_plan(tmp_path, text))
        row = run_experiment(plan)[0]
        assert row.error == ""
        assert row.verdict == "no-decay"
        assert row.mass_final == pytest.approx(row.mass_initial, rel=1e-12)
        assert "envelope skipped" in row.finding


class TestTheoryReport:
    def test_constant_density_row(self, tmp_path):
        model = RateModel(p=2.0, r=2.0, N=1,
                          profile=AbsorptionProfile.constant(1.0))
        out = tmp_path / "theory.csv"
        rows = theory_report(model, [100.0], out_path=out)
        assert rows[0]["R_tilde"] == pytest.approx(10.0)
        assert rows[0]["mass_rate"] == pytest.approx(100 ** -0.5)
        assert rows[0]["lambda"] == 2.0
        header = out.read_text().splitlines()[0]
        assert header == ",".join(THEORY_HEADER)

    def test_power_log_gamma_column(self):
        p, r, N, alpha, beta = 3.0, 3.0, 2, 1.0, 2.0
        model = RateModel(p=p, r=r, N=N,
                          profile=AbsorptionProfile.power_log(alpha, beta))
        row = theory_report(model, [10.0])[0]
        H = p * (r - 1) - alpha * (p - 2)
        s = r + 1 - p
        assert row["gamma"] == pytest.approx(
            beta * (-(p - 2) * (N + alpha - p) / (H * s) - 1 / s))
        assert row["H"] == pytest.approx(H)

    def test_rstar_columns(self):
        model = RateModel(p=3.0, r=3.0, N=3,
                          profile=AbsorptionProfile.power(1.0))
        row = theory_report(model, [10.0])[0]
        assert row["rstar_fujita_q1"] == pytest.approx(3.0)
        assert row["rstar_fujita_power"] == pytest.approx(2 + 2 / 3)
        assert row["rstar_alpha_eq_r"] == pytest.approx((3 * 2 + 3) / 4)

    def test_rejects_time_below_phi1(self):
        model = RateModel(p=3.0, r=3.0, N=1,
                          profile=AbsorptionProfile.constant(1.0))
        with pytest.raises(ValueError, match="below"):
            theory_report(model, [0.5])


class TestModelFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "model.toml"
        path.write_text(
            "[model]\np = 3.0\nr = 3.0\nN = 2\n"
            "[absorption]\nkind = \"power_log\"\nalpha = 1.0\nbeta = 2.0\n")
        model = parse_model_file(path)
        assert model.p == 3.0
        assert model.profile.kind == "power_log"

    def test_invalid_model_rejected(self, tmp_path):
        path = tmp_path / "model.toml"
        path.write_text("[model]\np = 3.0\nr = 1.5\nN = 1\n")
        with pytest.raises(ConfigError, match=r"r\+1-p"):
            parse_model_file(path)


class TestCli:
    def test_run_and_fit(self, tmp_path, capsys):
        plan_path = write_plan(
            tmp_path, MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5"))
        assert cli_main(["run", str(plan_path)]) == 0
        out = capsys.readouterr().out
        assert "verdict=decay" in out
        series = next((tmp_path / "o").glob("run00*.csv"))
        assert cli_main(["fit", str(series), "--window", "2,64"]) == 0
        assert "slope=" in capsys.readouterr().out

    def test_run_exit_code_on_failure(self, tmp_path):
        text = MINIMAL_PLAN.format(out=tmp_path / "o", r="1.5")
        text += '\n[initial]\nkind = "file"\npath = "missing.txt"\n'
        plan_path = write_plan(tmp_path, text)
        assert cli_main(["run", str(plan_path)]) == 1
        assert cli_main(["run", str(plan_path), "--keep-going"]) == 0

    def test_theory_verb(self, tmp_path, capsys):
        model_path = tmp_path / "model.toml"
        model_path.write_text(
            "[model]\np = 2.0\nr = 2.0\nN = 1\n"
            "[absorption]\nkind = \"constant\"\nc = 1.0\n")
        out = tmp_path / "theory.csv"
        assert cli_main(["theory", str(model_path), "--t", "10,100",
                         "--out", str(out)]) == 0
        assert out.read_text().count("\n") == 3

    def test_c0_verb(self, capsys):
        assert cli_main(["c0", "--p", "2", "--theta", "1",
                         "--samples", "10000", "--seed", "3"]) == 0
        value = float(capsys.readouterr().out.strip())
        assert 0 < value <= 1 + 1e-9

    def test_config_error_exit(self, tmp_path, capsys):
        bad = write_plan(tmp_path, "[grid\n")
        assert cli_main(["run", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err
