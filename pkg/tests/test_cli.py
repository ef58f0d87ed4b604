"""Exit codes, config handling, and artifacts of the command line tool."""

import csv
import math
import os

import numpy as np
import pytest

from weakwave.cli import SCHEMA, build_parser, load_config, run
from weakwave.exact import dalembert_const, eval_exact, sine_data
from weakwave.experiments import read_study_csv

# every key a config file can contain; each must show up in the --help text
# of the config-accepting subcommands
SCHEMA_TOKENS = (
    "coefficient", "lower", "mollifier", "scale", "study",
    "smooth", "const", "poly", "jump", "at", "left", "right",
    "point", "order", "weight", "nonnegative",
    "kind", "friedrichs", "moments", "gevrey", "radius",
    "logpower", "powerlaw", "identity",
    "model", "eps", "nx", "x_lo", "x_hi", "t0", "t1", "jobs",
)

CONFIG_SUBCOMMANDS = ("regularise", "levi", "energy", "solve", "study")


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


class TestUsage:
    def test_no_args_prints_usage_and_exits_2(self, capsys):
        assert run([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand_exits_2(self, capsys):
        assert run(["frobnicate"]) == 2

    def test_top_level_help_exits_0(self, capsys):
        assert run(["--help"]) == 0
        out = capsys.readouterr().out
        for name in CONFIG_SUBCOMMANDS + ("qsym-check", "exact"):
            assert name in out

    @pytest.mark.parametrize("command", CONFIG_SUBCOMMANDS)
    def test_help_documents_every_config_key(self, command, capsys):
        assert run([command, "--help"]) == 0
        out = capsys.readouterr().out
        for token in SCHEMA_TOKENS:
            assert token in out, f"{command} --help does not mention {token!r}"

    def test_schema_text_mentions_every_token(self):
        for token in SCHEMA_TOKENS:
            assert token in SCHEMA

    def test_every_subcommand_has_a_handler(self):
        parser = build_parser()
        actions = [a for a in parser._actions
                   if hasattr(a, "choices") and a.choices]
        names = set(actions[0].choices)
        assert names == {"regularise", "qsym-check", "levi", "energy",
                         "solve", "exact", "study"}


class TestConfigLoading:
    def test_missing_file_exits_2(self, tmp_path, capsys):
        code = run(["solve", "--config", str(tmp_path / "nope.toml")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_table_suggests_nearest(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[mollifer]\nkind = 'friedrichs'\n")
        assert run(["solve", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "mollifer" in err and "mollifier" in err

    def test_unknown_key_inside_table_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[mollifier]\nknd = 'gevrey'\n")
        assert run(["solve", "--config", str(cfg)]) == 2
        assert "knd" in capsys.readouterr().err

    def test_override_types(self):
        cfg = load_config(None, [
            "study.nx=128",
            "study.model=delta",
            "study.eps=[0.5, 0.25]",
            "coefficient.nonnegative=true",
            "mollifier.kind=\"moments\"",
        ])
        assert cfg["study"]["nx"] == 128
        assert cfg["study"]["model"] == "delta"
        assert cfg["study"]["eps"] == [0.5, 0.25]
        assert cfg["coefficient"]["nonnegative"] is True
        assert cfg["mollifier"]["kind"] == "moments"

    def test_override_applies_on_top_of_file(self, tmp_path):
        cfg_file = tmp_path / "c.toml"
        cfg_file.write_text("[mollifier]\nkind = 'friedrichs'\nradius = 1.0\n")
        cfg = load_config(str(cfg_file), ["mollifier.radius=2.0"])
        assert cfg["mollifier"]["kind"] == "friedrichs"
        assert cfg["mollifier"]["radius"] == 2.0

    def test_malformed_override_exits_2(self, tmp_path, capsys):
        # sanity first: exact has no --set and succeeds
        assert run(["exact", "--nx", "64", "--out", str(tmp_path)]) == 0
        assert run(["solve", "--set", "no_equals_sign"]) == 2
        assert "key=value" in capsys.readouterr().err

    def test_override_into_scalar_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[mollifier]\nkind = 'friedrichs'\n")
        code = run(["solve", "--config", str(cfg),
                    "--set", "mollifier.kind.sub=1"])
        assert code == 2


class TestRegularise:
    def test_needs_coefficient_table(self, capsys):
        assert run(["regularise", "--eps", "0.1"]) == 2
        err = capsys.readouterr().err
        assert "[coefficient]" in err
        for token in ("jump", "point", "smooth", "nonnegative"):
            assert token in err

    def test_writes_jump_profile(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(
            "[coefficient]\n"
            "jump = {at = 1.0, left = 0.0, right = 1.0}\n"
            "nonnegative = true\n"
        )
        code = run(["regularise", "--config", str(cfg), "--eps", "0.05",
                    "--n", "81", "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "regularised.csv")
        assert rows[0] == ["t", "a"]
        assert len(rows) == 82
        t = np.array([float(r[0]) for r in rows[1:]])
        a = np.array([float(r[1]) for r in rows[1:]])
        assert t[0] == 0.0 and t[-1] == 2.0
        assert abs(a[0]) < 1e-15
        assert abs(a[-1] - 1.0) < 1e-12
        assert np.all(np.diff(a) >= -1e-12)

    def test_bad_eps_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[coefficient]\njump = {at = 1.0, left = 0.0, right = 1.0}\n")
        assert run(["regularise", "--config", str(cfg), "--eps", "0"]) == 2


class TestQsymCheck:
    def test_pass_exit_0(self, capsys):
        assert run(["qsym-check", "--m", "3", "--trials", "50"]) == 0
        out = capsys.readouterr().out
        assert "determinant identity" in out
        assert "recursion identity" in out
        assert "PASS" in out and "FAIL" not in out

    def test_m2_reports_near_diagonal_constant(self, capsys):
        assert run(["qsym-check", "--m", "2", "--trials", "20"]) == 0
        assert "near-diagonal constant" in capsys.readouterr().out

    def test_seed_repeatable(self, capsys):
        run(["qsym-check", "--m", "3", "--trials", "30", "--seed", "7"])
        first = capsys.readouterr().out
        run(["qsym-check", "--m", "3", "--trials", "30", "--seed", "7"])
        assert capsys.readouterr().out == first


class TestLevi:
    def test_default_model_passes(self, capsys):
        code = run(["levi", "--trials", "2000"])
        assert code == 0
        out = capsys.readouterr().out
        assert "levi: PASS" in out
        for eps in ("0.1", "0.05", "0.025", "0.0125"):
            assert f"eps={eps}" in out

    def test_single_eps_row(self, capsys):
        assert run(["levi", "--eps", "0.1", "--trials", "500"]) == 0
        out = capsys.readouterr().out
        assert out.count("Ceps=") == 1


class TestEnergy:
    def test_default_frequencies_pass(self, capsys):
        assert run(["energy", "--eps", "0.1"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4  # three frequencies plus the summary
        assert "energy: PASS" in out

    def test_trace_csv(self, tmp_path):
        code = run(["energy", "--eps", "0.1", "--xi", "6.0",
                    "--trace-csv", "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "energy_xi6.csv")
        assert rows[0] == ["t", "E"]
        assert len(rows) > 10
        assert float(rows[1][1]) > 0.0


class TestSolve:
    def test_writes_field_csv(self, tmp_path, capsys):
        code = run(["solve", "--model", "heaviside", "--eps", "0.1",
                    "--nx", "128", "--out", str(tmp_path)])
        assert code == 0
        assert "Courant" in capsys.readouterr().out
        rows = read_rows(tmp_path / "field.csv")
        assert rows[0] == ["x", "u", "v", "w"]
        assert len(rows) == 129

    def test_snapshot_files(self, tmp_path):
        code = run(["solve", "--nx", "128", "--snapshot", "1.4",
                    "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "field_t1.4.csv").exists()

    def test_config_coefficient_overrides_model(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[coefficient]\nsmooth = {const = 1.0}\n")
        # dx = 1/128 divides t1 and keeps the Courant number at exactly 1,
        # where the scheme reproduces the constant-coefficient solution
        code = run(["solve", "--config", str(cfg), "--nx", "256",
                    "--eps", "0.1", "--t0", "0", "--t1", "1.0",
                    "--out", str(tmp_path)])
        assert code == 0
        rows = read_rows(tmp_path / "field.csv")
        x = np.array([float(r[0]) for r in rows[1:]])
        u = np.array([float(r[1]) for r in rows[1:]])
        s = sine_data()
        exact = dalembert_const(1.0, s.g0, s.g1, s.G1, 1.0, x)
        err = math.sqrt((x[1] - x[0]) * float(np.sum((u - exact) ** 2)))
        assert err < 1e-10


class TestExact:
    def test_samples_reference_solution(self, tmp_path):
        assert run(["exact", "--t", "1.25", "--nx", "64",
                    "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "exact.csv")
        assert rows[0] == ["x", "u"]
        x = np.array([float(r[0]) for r in rows[1:]])
        u = np.array([float(r[1]) for r in rows[1:]])
        assert np.allclose(u, eval_exact(sine_data(), 1.25, x), atol=1e-14)


class TestStudy:
    def test_needs_model(self, capsys):
        assert run(["study"]) == 2
        assert "model" in capsys.readouterr().err

    def test_flags_run_and_write(self, tmp_path, capsys):
        code = run(["study", "--model", "smooth-consistency",
                    "--coefficient", "constant", "--eps", "0.1",
                    "--eps", "0.05", "--nx", "512", "--format", "both",
                    "--stem", "cons", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "trend" in out and "FAIL" not in out
        assert (tmp_path / "cons.csv").exists()
        assert (tmp_path / "cons.svg").exists()
        rows = read_study_csv(tmp_path / "cons.csv")
        assert {metric for _, metric, _ in rows} == {"l2_error", "mollifier_gap"}

    def test_config_table_drives_study(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(
            "[study]\n"
            "model = 'heaviside'\n"
            "eps = [0.1, 0.05]\n"
            "nx = 2858\n"
            "jobs = 1\n"
        )
        code = run(["study", "--config", str(cfg), "--out", str(tmp_path)])
        assert code == 0
        rows = read_study_csv(tmp_path / "study.csv")
        assert {eps for eps, _, _ in rows} == {0.1, 0.05}

    def test_flag_overrides_config_table(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[study]\nmodel = 'heaviside'\neps = [0.1]\nnx = 256\n")
        code = run(["study", "--config", str(cfg), "--model", "delta",
                    "--out", str(tmp_path)])
        assert code in (0, 1)
        assert "delta" in capsys.readouterr().out
        rows = read_study_csv(tmp_path / "study.csv")
        assert {metric for _, metric, _ in rows} == {"oleinik_ratio"}

    def test_failed_trend_exits_1(self, tmp_path, capsys):
        # a 10 percent eps step cannot triple the concentration ratio
        code = run(["study", "--model", "delta", "--eps", "0.1",
                    "--eps", "0.09", "--nx", "256", "--out", str(tmp_path)])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_study_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[study]\nmodel = 'delta'\nepz = [0.1]\n")
        assert run(["study", "--config", str(cfg)]) == 2
        assert "epz" in capsys.readouterr().err


class TestOutputDir:
    def test_env_var_sets_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv("WEAKWAVE_OUT", str(tmp_path / "env"))
        assert run(["exact", "--nx", "64"]) == 0
        assert (tmp_path / "env" / "exact.csv").exists()

    def test_flag_beats_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("WEAKWAVE_OUT", str(tmp_path / "env"))
        assert run(["exact", "--nx", "64", "--out", str(tmp_path / "flag")]) == 0
        assert (tmp_path / "flag" / "exact.csv").exists()
        assert not (tmp_path / "env" / "exact.csv").exists()

    def test_default_is_working_directory(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.delenv("WEAKWAVE_OUT", raising=False)
        assert run(["exact", "--nx", "64"]) == 0
        assert (tmp_path / "exact.csv").exists()
