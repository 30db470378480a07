"""Config ingestion and the command-line driver: collecting validation,
deterministic outputs, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

import pfcontrol as pfc
import pfcontrol.cli as cli
from pfcontrol.config import build_field, config_digest, load_config, parse_config


def base_config(**overrides):
    cfg = {
        "grid": {"cells": [16], "lengths": [1.0]},
        "time": {"horizon": 0.5, "steps": 8},
        "physics": {"visc": 0.0, "latent": 1.0, "coupling": 1.0},
        "potential": {"kind": "quartic"},
        "initial": {
            "theta": {"kind": "cosine", "amplitude": 0.1, "modes": [1]},
            "phi": {"kind": "cosine", "amplitude": 0.2, "modes": [1], "offset": 0.05},
        },
        "cost": {
            "w_theta": 1.0,
            "w_phi": 1.0,
            "w_theta_final": 0.5,
            "w_phi_final": 0.5,
            "theta_target": 0.1,
            "phi_target": 0.0,
            "theta_final_target": 0.05,
            "phi_final_target": 0.1,
        },
        "box": {"lower": -1.0, "upper": 1.0},
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture
def config_file(tmp_path):
    def write(name="run.json", **overrides):
        path = tmp_path / name
        path.write_text(json.dumps(base_config(**overrides)))
        return str(path)

    return write


def run_cli(argv, capsys):
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


class TestParseConfig:
    def test_happy_path(self):
        cfg = parse_config(base_config())
        assert cfg.spec.grid.cells == (16,)
        assert cfg.spec.tgrid.steps == 8
        assert cfg.spec.potential.kind == "quartic"
        assert cfg.snapshot_stride == 0
        assert len(cfg.digest) == 64

    def test_digest_tracks_content(self):
        a = config_digest(base_config())
        b = config_digest(base_config())
        c = config_digest(base_config(time={"horizon": 0.5, "steps": 9}))
        assert a == b
        assert a != c

    def test_all_violations_reported_together(self):
        raw = base_config(
            potential={"kind": "logarithmic", "eps": 0.0},
            box={"lower": 2.0, "upper": -1.0},
            cost={"w_theta": -1.0},
        )
        raw["initial"] = {"phi": 0.0, "theta": 0.0}
        with pytest.raises(pfc.ValidationError) as err:
            parse_config(raw)
        text = "\n".join(err.value.violations)
        assert "lower > upper" in text
        assert "viscosity" in text
        assert "cost.w_theta" in text

    def test_missing_sections_listed(self):
        with pytest.raises(pfc.ValidationError) as err:
            parse_config({})
        text = "\n".join(err.value.violations)
        for section in ("grid", "time", "initial"):
            assert section in text

    def test_log_potential_carries_eps(self):
        raw = base_config(potential={"kind": "logarithmic", "c": 2.0, "eps": 1.0e-3})
        raw["physics"] = {"visc": 1.0, "latent": 1.0, "coupling": 1.0}
        raw["initial"] = {"theta": 0.0, "phi": 0.1}
        cfg = parse_config(raw)
        assert cfg.spec.potential.is_singular
        assert cfg.spec.potential.yosida_eps == 1.0e-3

    def test_unknown_potential_kind(self):
        with pytest.raises(pfc.ValidationError) as err:
            parse_config(base_config(potential={"kind": "sextic"}))
        assert any("potential.kind" in v for v in err.value.violations)

    def test_root_must_be_object(self):
        with pytest.raises(pfc.ParseError):
            parse_config([1, 2])

    def test_control_kinds(self):
        zeros = parse_config(base_config()).initial_control()
        assert not np.any(zeros)
        const = parse_config(
            base_config(control={"kind": "constant", "value": 0.25})
        ).initial_control()
        assert np.all(const == 0.25)
        rand_cfg = base_config(control={"kind": "random", "seed": 3})
        r1 = parse_config(rand_cfg).initial_control()
        r2 = parse_config(rand_cfg).initial_control()
        assert np.array_equal(r1, r2)
        assert np.all(r1 >= -1.0) and np.all(r1 <= 1.0)

    def test_bad_control_values_shape(self):
        with pytest.raises(pfc.ValidationError) as err:
            parse_config(base_config(control={"kind": "values", "values": [[1.0]]}))
        assert any("control.values" in v for v in err.value.violations)

    def test_snapshot_stride_parsed(self):
        cfg = parse_config(base_config(output={"snapshot_stride": 4}))
        assert cfg.snapshot_stride == 4


class TestBuildField:
    class _Errors:
        def __init__(self):
            self.errors = []

        def add(self, msg):
            self.errors.append(msg)

    def test_scalar_and_list(self):
        grid = pfc.Grid(4)
        errs = self._Errors()
        assert np.array_equal(build_field(0.5, grid, "f", errs), np.full(4, 0.5))
        assert np.array_equal(
            build_field([1.0, 2.0, 3.0, 4.0], grid, "f", errs), [1.0, 2.0, 3.0, 4.0]
        )
        assert errs.errors == []

    def test_cosine_matches_manual(self):
        grid = pfc.Grid(8, 2.0)
        errs = self._Errors()
        values = build_field(
            {"kind": "cosine", "amplitude": 0.3, "modes": [2], "offset": 0.1},
            grid,
            "f",
            errs,
        )
        x = grid.coords()[:, 0]
        assert np.allclose(values, 0.3 * np.cos(2 * np.pi * x / 2.0) + 0.1, atol=1e-15)
        assert errs.errors == []

    def test_wrong_length_recorded(self):
        grid = pfc.Grid(4)
        errs = self._Errors()
        build_field([1.0, 2.0], grid, "initial.phi", errs)
        assert any("initial.phi" in e for e in errs.errors)

    def test_unknown_kind_recorded(self):
        grid = pfc.Grid(4)
        errs = self._Errors()
        build_field({"kind": "sawtooth"}, grid, "f", errs)
        assert any("sawtooth" in e for e in errs.errors)


class TestLoadConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(pfc.ParseError):
            load_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(pfc.ParseError):
            load_config(path)


class TestCliSolve:
    def test_stdout_report(self, config_file, capsys):
        code, out, err = run_cli(["solve", "--config", config_file()], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["command"] == "solve"
        assert len(payload["times"]) == 9
        means = payload["phase_mean"]
        assert max(abs(m - means[0]) for m in means) <= 1.0e-13
        assert "steps" in err

    def test_byte_identical_reruns(self, config_file, tmp_path, capsys):
        cfg = config_file(output={"snapshot_stride": 4})
        for d in ("a", "b"):
            code, _, _ = run_cli(
                ["solve", "--config", cfg, "--out", str(tmp_path / d)], capsys
            )
            assert code == 0
        for name in ("solve_report.json", "solve_timeseries.csv", "solve_snapshots.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_csv_outputs_carry_digest(self, config_file, tmp_path, capsys):
        cfg = config_file(output={"snapshot_stride": 2})
        code, _, _ = run_cli(
            ["solve", "--config", cfg, "--out", str(tmp_path / "r")], capsys
        )
        assert code == 0
        digest = json.loads((tmp_path / "r" / "solve_report.json").read_text())[
            "config_digest"
        ]
        ts = (tmp_path / "r" / "solve_timeseries.csv").read_text().splitlines()
        snaps = (tmp_path / "r" / "solve_snapshots.csv").read_text().splitlines()
        assert ts[0] == f"# config_digest={digest}"
        assert snaps[0] == f"# config_digest={digest}"
        assert ts[1].startswith("level,time,phase_mean,energy")
        assert snaps[1] == "level,time,x,theta,phi"
        # every stored level contributes one row per cell
        assert len(snaps) == 2 + 5 * 16

    def test_invalid_config_exits_2_listing_everything(self, tmp_path, capsys):
        raw = base_config(
            potential={"kind": "logarithmic", "eps": 0.0},
            box={"lower": 2.0, "upper": -1.0},
        )
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(raw))
        code, out, err = run_cli(["solve", "--config", str(path)], capsys)
        assert code == 2
        assert err.count("config error:") >= 2
        assert "lower > upper" in err
        assert "viscosity" in err

    def test_unreadable_config_exits_2(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["solve", "--config", str(tmp_path / "none.json")], capsys
        )
        assert code == 2
        assert "config error:" in err

    def test_solver_failure_exits_1(self, config_file, capsys):
        cfg = config_file(
            solver={"newton_max_iter": 1},
            control={"kind": "random", "seed": 1},
        )
        code, _, err = run_cli(["solve", "--config", cfg], capsys)
        assert code == 1
        assert "solver error:" in err


class TestCliDerivatives:
    def test_tangent_report(self, config_file, capsys):
        code, out, _ = run_cli(
            ["tangent", "--config", config_file(), "--seed", "2"], capsys
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["y_norm"] > 0.0
        assert payload["max_dphi_mean"] <= 1.0e-12

    def test_adjoint_duality_in_report(self, config_file, capsys):
        code, out, _ = run_cli(
            ["adjoint", "--config", config_file(), "--seed", "3"], capsys
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["duality_rel_gap"] <= 1.0e-8
        assert payload["gradient_lq_norm"] > 0.0

    def test_gradcheck_passes(self, config_file, capsys):
        code, out, _ = run_cli(
            ["gradcheck", "--config", config_file(), "--directions", "2"], capsys
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["passed"] is True
        assert payload["measured"]["max_rel_error"] <= 1.0e-6

    def test_gradcheck_unreachable_tol_exits_3(self, config_file, capsys):
        code, out, _ = run_cli(
            [
                "gradcheck",
                "--config",
                config_file(),
                "--directions",
                "1",
                "--tol",
                "1e-16",
            ],
            capsys,
        )
        assert code == 3
        assert json.loads(out)["passed"] is False


class TestCliOptimize:
    def test_zero_cost_zero_iterations(self, config_file, capsys):
        cfg = config_file(cost={})
        code, out, _ = run_cli(["optimize", "--config", cfg], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["termination"] == "stationary"
        assert payload["iterations"] == 0

    def test_iteration_cap_exits_1(self, config_file, capsys):
        cfg = config_file(optimize={"max_iter": 2, "stat_tol": 1.0e-12})
        code, out, _ = run_cli(["optimize", "--config", cfg], capsys)
        assert code == 1
        assert json.loads(out)["termination"] == "max_iterations"

    def test_out_directory_artifacts(self, config_file, tmp_path, capsys):
        cfg = config_file(optimize={"max_iter": 3, "stat_tol": 1.0e-12})
        out_dir = tmp_path / "opt"
        code, _, _ = run_cli(
            ["optimize", "--config", cfg, "--out", str(out_dir)], capsys
        )
        assert code == 1
        history = (out_dir / "optimize_history.csv").read_text().splitlines()
        assert history[0].startswith("# config_digest=")
        assert history[1] == "iteration,j,residual,step,du_norm"
        assert len(history) == 2 + 4
        control = json.loads((out_dir / "control.json").read_text())
        assert control["shape"] == [8, 16]


class TestCliProbe:
    def test_energy_probe(self, config_file, capsys):
        code, out, _ = run_cli(
            ["probe", "--config", config_file(), "--name", "energy", "--steps", "32"],
            capsys,
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["name"] == "energy_decay"
        assert payload["passed"] is True
        assert "config_digest" in payload

    def test_separation_probe_on_log_config(self, config_file, capsys):
        cfg = config_file(
            potential={"kind": "logarithmic", "c": 2.0},
            physics={"visc": 1.0, "latent": 1.0, "coupling": 1.0},
            initial={"theta": 0.0, "phi": {"kind": "cosine", "amplitude": 0.2, "modes": [1]}},
        )
        code, out, _ = run_cli(
            ["probe", "--config", cfg, "--name", "separation", "--samples", "2"],
            capsys,
        )
        assert code == 0
        assert json.loads(out)["measured"]["min_margin"] > 0.0

    def test_unknown_probe_name_exits_2(self, config_file, capsys):
        code, _, err = run_cli(
            ["probe", "--config", config_file(), "--name", "entropy"], capsys
        )
        assert code == 2
        assert "invalid choice" in err


class TestCliMisc:
    def test_unknown_subcommand_exits_2(self, capsys):
        code, _, err = run_cli(["simulate"], capsys)
        assert code == 2
        assert "usage" in err

    def test_version_flag(self, capsys):
        code, out, _ = run_cli(["--version"], capsys)
        assert code == 0
        assert pfc.__version__ in out

    def test_module_entry_point(self, config_file):
        proc = subprocess.run(
            [sys.executable, "-m", "pfcontrol", "--version"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert pfc.__version__ in proc.stdout
