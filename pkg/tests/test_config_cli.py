"""Configuration parsing and the command-line front end."""

import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from adas.cli import main, read_csv_table
from adas.config import ConfigError, canonical_text, content_hash, parse_config, parse_text

MINIMAL = """
model:
  nu_viscosity: 1.0
  alpha_length: 0.25
time:
  dt_time: 0.02
  t_end_time: 0.2
assimilation:
  mu_per_time: 10.0
  h_length: 0.25
"""

TWIN = """
seed: 3
grid: {n_points: 16}
model: {preset: Leray-alpha, nu_viscosity: 1.0, alpha_length: 0.25}
forcing: {grashof_target: 10.0}
time: {dt_time: 0.02, t_end_time: 1.0, spin_up_time: 0.5, sample_every_steps: 5}
assimilation: {mu_per_time: 10.0, h_length: 0.25, c0: 1.0}
sweep:
  mu_values_per_time: [0.0, 1.0, 4.0]
  h_values_length: [0.2, 0.25, 0.3]
  converge_decades: 1.0
"""


@pytest.fixture
def cfg_file(tmp_path):
    def make(text, name="cfg.yaml"):
        p = tmp_path / name
        p.write_text(textwrap.dedent(text))
        return p

    return make


class TestParse:
    def test_minimal_defaults(self, cfg_file):
        cfg = parse_config(cfg_file(MINIMAL))
        assert cfg.data["grid"]["n_points"] == 32
        assert cfg.data["model"]["preset"] == "Leray-alpha"
        assert cfg.data["assimilation"]["mask"] == [True, True, False]
        assert cfg.data["sweep"] is None
        text = canonical_text(cfg)
        assert "dealias_fraction: 2/3" in text and "observer: fourier_lowmode" in text

    def test_round_trip(self, cfg_file):
        cfg = parse_config(cfg_file(TWIN))
        assert parse_text(canonical_text(cfg)) == cfg
        assert canonical_text(parse_text(canonical_text(cfg))) == canonical_text(cfg)

    def test_negative_mu_named(self):
        with pytest.raises(ConfigError) as e:
            parse_text(MINIMAL.replace("mu_per_time: 10.0", "mu_per_time: -1.0"))
        assert any("assimilation.mu_per_time" in m for m in e.value.errors)

    def test_all_errors_collected(self):
        text = MINIMAL.replace("nu_viscosity: 1.0", "nu_viscosity_typo: 1.0").replace("dt_time: 0.02", "dt_time: x")
        with pytest.raises(ConfigError) as e:
            parse_text(text + "extra_section: 1\n")
        msgs = " | ".join(e.value.errors)
        assert "unknown key model.nu_viscosity_typo" in msgs
        assert "missing required field model.nu_viscosity" in msgs
        assert "time.dt_time must be a number" in msgs
        assert "unknown key 'extra_section'" in msgs

    def test_inconsistent_h(self):
        with pytest.raises(ConfigError, match="smaller than L"):
            parse_text(MINIMAL.replace("h_length: 0.25", "h_length: 9.0"))

    def test_semantic_errors(self):
        with pytest.raises(ConfigError, match="requires alpha"):
            parse_text(MINIMAL.replace("alpha_length: 0.25", "alpha_length: 0.0\n  preset: NSV"))
        with pytest.raises(ConfigError, match="not both"):
            parse_text(MINIMAL + "forcing: {amplitude_force: 1.0, grashof_target: 2.0}\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config(tmp_path / "nope.yaml")

    def test_yaml_syntax(self):
        with pytest.raises(ConfigError, match="YAML"):
            parse_text("model: [unclosed")

    def test_overrides(self, cfg_file):
        cfg = parse_config(cfg_file(TWIN)).with_overrides(seed=9, out="elsewhere")
        assert cfg.seed == 9 and str(cfg.output_dir) == "elsewhere"
        assert cfg.assimilation().v_star_seed == 10

    def test_content_hash_is_git_blob(self):
        assert content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def run_cli(*args):
    return main([*map(str, args), "--quiet"])


def csv_header(path):
    return [ln for ln in path.read_text().splitlines() if ln.startswith("#")]


class TestCommands:
    def test_twin_synchronized(self, cfg_file, tmp_path):
        p = cfg_file(TWIN.replace("c0: 1.0}", "c0: 1.0, v_star_init: reference}"))
        assert run_cli("twin", "--config", p, "--out", tmp_path / "o") == 0
        rows = read_csv_table(tmp_path / "o" / "series.csv")
        assert len(rows) == 11
        assert max(float(r["err_L2"]) for r in rows) <= 1e-10
        for name in ("reference.snap", "assimilated.snap", "reference.snap.meta", "twin_summary.txt"):
            assert (tmp_path / "o" / name).exists()

    def test_csv_header_contract(self, cfg_file, tmp_path):
        p = cfg_file(TWIN)
        run_cli("twin", "--config", p, "--out", tmp_path / "o")
        head = csv_header(tmp_path / "o" / "series.csv")
        assert head[0] == "# adas twin"
        cfg = parse_config(p).with_overrides(out=tmp_path / "o")
        text = canonical_text(cfg)
        assert head[1] == f"# input-sha1: {content_hash(text)}"
        embedded = "\n".join(ln[4:] for ln in head[3:]) + "\n"
        assert parse_text(embedded) == cfg
        first = (tmp_path / "o" / "series.csv").read_text().splitlines()[len(head)]
        assert first.split(",") == ["t", "err_L2", "err_H1", "err_c1", "err_c2", "err_c3",
                                    "energy_ref", "energy_da", "cond1", "cond2"]

    def test_sweep_grid(self, cfg_file, tmp_path):
        p = cfg_file(TWIN)
        assert run_cli("sweep", "--config", p, "--out", tmp_path / "a") == 0
        rows = read_csv_table(tmp_path / "a" / "sweep.csv")
        assert len(rows) == 9
        assert all(r["verdict"] == "non-converged" for r in rows if float(r["mu"]) == 0)
        run_cli("sweep", "--config", p, "--out", tmp_path / "b")
        # the header embeds the output directory, so compare the tables
        assert read_csv_table(tmp_path / "a" / "sweep.csv") == read_csv_table(tmp_path / "b" / "sweep.csv")

    def test_rerun_is_byte_identical(self, cfg_file, tmp_path):
        p = cfg_file(TWIN)
        outputs = []
        for _ in range(2):
            run_cli("twin", "--config", p, "--out", tmp_path / "same")
            outputs.append((tmp_path / "same" / "series.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_calibrate_reproduces_boundary(self, cfg_file, tmp_path):
        p = cfg_file(TWIN)
        out = tmp_path / "cal"
        run_cli("sweep", "--config", p, "--out", out)
        assert run_cli("calibrate", "--config", p, "--out", out, "--sweep-csv", out / "sweep.csv") == 0
        rep = dict(ln.split(" = ") for ln in (out / "calibration.txt").read_text().splitlines())
        rows = [r for r in read_csv_table(out / "sweep.csv") if r["cond2"] == "1" and float(r["mu"]) > 0]
        mus = sorted({float(r["mu"]) for r in rows})
        ok = {float(r["mu"]) for r in rows if r["verdict"] in ("converged", "floor")}
        bad = {float(r["mu"]) for r in rows if r["verdict"] not in ("converged", "floor")}
        mu_b = float(rep["mu_boundary"])
        assert mu_b in ok
        assert all(m < mu_b for m in bad)
        i = mus.index(mu_b)
        assert i == 0 or mus[i - 1] in bad  # boundary sits within one sampled cell
        nu, alpha, lam, G = 1.0, 0.25, 1.0, float(rep["grashof"])
        assert float(rep["cc_tilde"]) == pytest.approx(mu_b * alpha**4 * lam / (2 * nu * G**4), rel=1e-12)

    def test_run_writes_diagnostics(self, cfg_file, tmp_path):
        p = cfg_file(TWIN)
        assert run_cli("run", "--config", p, "--out", tmp_path / "r") == 0
        rows = read_csv_table(tmp_path / "r" / "diagnostics.csv")
        assert list(rows[0]) == ["t", "energy", "enstrophy", "H1_hom", "H2_hom", "G", "prop2_flag", "prop3_flag"]
        assert (tmp_path / "r" / "final.snap.meta").exists()

    def test_check(self, cfg_file, tmp_path, capsys):
        assert run_cli("check", "--config", cfg_file(TWIN), "--out", tmp_path / "c") == 0
        out = capsys.readouterr().out
        assert "cond2 = 1" in out and "cond1 = 0" in out

    def test_inspect_snapshot(self, cfg_file, tmp_path, capsys):
        run_cli("twin", "--config", cfg_file(TWIN), "--out", tmp_path / "o")
        assert main(["inspect-snapshot", str(tmp_path / "o" / "reference.snap")]) == 0
        out = capsys.readouterr().out
        assert "n = 16" in out and "divergence_residual" in out

    def test_config_error_exit(self, cfg_file, tmp_path, capsys):
        p = cfg_file(MINIMAL.replace("mu_per_time: 10.0", "mu_per_time: -2.0"))
        assert run_cli("twin", "--config", p, "--out", tmp_path / "x") == 2
        assert "assimilation.mu_per_time" in capsys.readouterr().err

    def test_numerical_failure_exit(self, cfg_file, tmp_path, capsys):
        text = TWIN.replace("forcing: {grashof_target: 10.0}", "forcing: {amplitude_force: 1.0e+8}")
        text = text.replace("dt_time: 0.02, t_end_time: 1.0", "dt_time: 0.5, t_end_time: 50.0")
        with pytest.warns(RuntimeWarning):
            with np.errstate(all="ignore"):
                code = run_cli("run", "--config", cfg_file(text), "--out", tmp_path / "bad")
        assert code not in (0, 2)
        assert "numerical failure" in capsys.readouterr().err

    def test_sweep_needs_section(self, cfg_file, tmp_path):
        assert run_cli("sweep", "--config", cfg_file(MINIMAL), "--out", tmp_path / "s") == 2


def test_console_script_and_thread_env(cfg_file, tmp_path):
    p = cfg_file(TWIN)
    env = dict(os.environ, ADAS_THREADS="2")
    res = subprocess.run([sys.executable, "-m", "adas.cli", "check", "--config", str(p), "--out", str(tmp_path / "e")],
                         env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "mu_threshold" in res.stdout
