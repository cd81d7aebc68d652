"""Command-line behavior: flags, exit codes, output files, determinism."""

import json

import numpy as np
import pytest

from fountain_dcp.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    build_parser,
    main,
    resolve_manifest,
)
from fountain_dcp.errors import EstimationError
from fountain_dcp.experiments import read_sweep_csv


def tiny_config(tmp_path, name="run.json", **overrides):
    doc = {
        "field": {"parametric": {"g0_amplitude": 0.0, "g2_amplitude": 0.0}},
        "drive": {"n_samples": 300, "seed": 9},
        "sweep": {"parameter": "amplitude_factor", "values": [1.0, 3.0]},
    }
    doc.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestFlagValidation:
    def test_list_scenarios(self, capsys):
        assert main(["--list-scenarios"]) == EXIT_OK
        out = capsys.readouterr().out
        for name in ("fig1b", "fig1c", "fig2a", "fig2b_fig3", "fig2c"):
            assert name in out
        assert "alias of fig2b_fig3" in out

    def test_no_inputs(self, capsys):
        assert main([]) == EXIT_CONFIG
        assert "nothing to run" in capsys.readouterr().err

    def test_unknown_scenario(self, capsys, tmp_path):
        rc = main(["--scenario", "fig9", "--output", str(tmp_path)])
        assert rc == EXIT_CONFIG
        assert "unknown scenario" in capsys.readouterr().err

    def test_missing_config_file(self, capsys, tmp_path):
        rc = main(["--config", str(tmp_path / "absent.json")])
        assert rc == EXIT_CONFIG
        assert "cannot read config" in capsys.readouterr().err

    def test_malformed_json_reports_position(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"field": }')
        assert main(["--config", str(bad)]) == EXIT_CONFIG
        assert "line" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "flags",
        [
            ["--samples", "0"],
            ["--workers", "-1"],
            ["--seed", str(2**63)],
        ],
    )
    def test_rejected_values(self, flags, tmp_path):
        rc = main(["--scenario", "fig2a", "--output", str(tmp_path)] + flags)
        assert rc == EXIT_CONFIG

    def test_manifest_defaults(self):
        args = build_parser().parse_args(["--scenario", "fig2a"])
        m = resolve_manifest(args)
        assert m.output_dir == "."
        assert m.overwrite is False
        assert m.tool_version

    def test_config_without_sweep_needs_scenario(self, capsys, tmp_path):
        path = tmp_path / "nosweep.json"
        path.write_text(json.dumps({"field": {"parametric": {}}}))
        assert main(["--config", str(path)]) == EXIT_CONFIG
        assert "no sweep" in capsys.readouterr().err


class TestRuns:
    def test_custom_config_writes_csv_and_sidecar(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path)
        out = tmp_path / "out"
        rc = main(["--config", str(cfg), "--output", str(out)])
        assert rc == EXIT_OK
        captured = capsys.readouterr()
        assert captured.out == ""  # data goes to files, progress to stderr
        csv_path = out / "custom.csv"
        cols, data = read_sweep_csv(csv_path)
        assert cols[0] == "amplitude_factor"
        assert data.shape[0] == 2
        sidecar = json.loads((out / "custom.json").read_text())
        assert sidecar["seed"] == 9

    def test_basename_and_method_flags(self, tmp_path):
        cfg = tiny_config(tmp_path)
        rc = main([
            "--config", str(cfg), "--output", str(tmp_path / "m"),
            "--method", "effective_phase", "--basename", "alt",
        ])
        assert rc == EXIT_OK
        assert (tmp_path / "m" / "alt.csv").exists()

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = tiny_config(tmp_path)
        out = tmp_path / "s"
        rc = main(["--config", str(cfg), "--output", str(out), "--seed", "13"])
        assert rc == EXIT_OK
        assert json.loads((out / "custom.json").read_text())["seed"] == 13

    def test_same_seed_byte_identical(self, tmp_path):
        cfg = tiny_config(tmp_path)
        argv = ["--config", str(cfg), "--seed", "42"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--output", str(a)]) == EXIT_OK
        assert main(argv + ["--output", str(b)]) == EXIT_OK
        assert (a / "custom.csv").read_bytes() == (b / "custom.csv").read_bytes()

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        cfg = tiny_config(tmp_path, drive={"n_samples": 900, "seed": 4,
                                           "chunk_size": 256})
        argv = ["--config", str(cfg)]
        a, b = tmp_path / "w1", tmp_path / "w3"
        assert main(argv + ["--output", str(a), "--workers", "1"]) == EXIT_OK
        assert main(argv + ["--output", str(b), "--workers", "3"]) == EXIT_OK
        assert (a / "custom.csv").read_bytes() == (b / "custom.csv").read_bytes()

    def test_overwrite_protocol(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path)
        out = tmp_path / "o"
        argv = ["--config", str(cfg), "--output", str(out)]
        assert main(argv) == EXIT_OK
        before = (out / "custom.csv").read_bytes()
        capsys.readouterr()
        assert main(argv) == EXIT_IO
        assert "exists" in capsys.readouterr().err
        assert (out / "custom.csv").read_bytes() == before
        assert main(argv + ["--overwrite"]) == EXIT_OK

    def test_preset_with_null_field_overlay(self, tmp_path):
        """A config overlay that zeroes the field keeps the preset's sweep
        but must produce exactly zero offsets at every drive amplitude."""
        overlay = tmp_path / "null_field.json"
        overlay.write_text(json.dumps({
            "field": {"parametric": {
                "g0_amplitude": 0.0, "g1_amplitude": 0.0,
                "g2_amplitude": 0.0, "g1_sin_amplitude": 0.0,
            }},
        }))
        out = tmp_path / "nf"
        rc = main([
            "--scenario", "fig2a", "--config", str(overlay),
            "--samples", "120", "--output", str(out),
        ])
        assert rc == EXIT_OK
        cols, data = read_sweep_csv(out / "fig2a.csv")
        dp = data[:, cols.index("delta_p")]
        assert data.shape[0] > 10  # the preset's amplitude grid survived
        assert np.all(dp == 0.0)

    def test_numerical_errors_map_to_exit_two(self, monkeypatch, capsys):
        def boom(*a, **k):
            raise EstimationError("diverged")

        monkeypatch.setattr("fountain_dcp.cli.run_manifest", boom)
        assert main(["--scenario", "fig2a"]) == EXIT_NUMERICAL
        assert "numerical error" in capsys.readouterr().err
