import json
import math
import os
import stat

import numpy as np
import pytest

from samplebench.errors import ConfigError
from samplebench.harness import (
    ABLATION_KINDS,
    apply_desk_scale,
    emit_results,
    load_config,
    parse_config,
    run_ablation,
    run_experiment,
    running_average,
    select_best,
)
from samplebench.harness.ablate import ablation_cells
from samplebench.harness.emit import render_checkpoint_csv
from samplebench.kernels import AnnealedPath, HmcConfig, MhConfig
from samplebench.metrics import MetricReport
from samplebench.numerics import RngStream
from samplebench.sis import smc_run
from samplebench.targets import DiagonalGaussian, make_mog_target


def tiny_config(**overrides):
    doc = {
        "schema_version": 1,
        "target": {"name": "gaussian", "dim": 1},
        "method": {"name": "mfvi", "iterations": 60, "batch_size": 32,
                   "learning_rate": 0.05, "sigma0": 2.0},
        "protocol": {"n_checkpoints": 6, "running_avg_len": 5, "eval_samples": 64,
                     "ipm_subsample": 0},
        "seeds": [0, 1],
        "output_dir": "unused",
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and key in doc:
            doc[key].update(value)
        else:
            doc[key] = value
    return doc


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        self.t += 0.125
        return self.t


# ------------------------------------------------------------------ validation
def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(tiny_config(extra_field=1))


def test_unknown_method_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(tiny_config(method={"name": "mfvi", "learning_rat": 0.1}))


def test_wrong_schema_version_rejected():
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(tiny_config(schema_version=7))


def test_unknown_names_rejected():
    with pytest.raises(ConfigError, match="unknown target"):
        parse_config(tiny_config(target={"name": "mixture_of_unicorns"}))
    with pytest.raises(ConfigError, match="unknown method"):
        parse_config(tiny_config(method={"name": "quantum"}))


def test_duplicate_seeds_rejected():
    with pytest.raises(ConfigError, match="seeds"):
        parse_config(tiny_config(seeds=[0, 0, 1]))


def test_logistic_requires_existing_csv():
    with pytest.raises(ConfigError, match="csv_path"):
        parse_config(tiny_config(target={"name": "logistic", "csv_path": "/nope.csv"}))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.json")


def test_desk_scale_only_fills_defaults():
    config = parse_config(tiny_config())
    config = apply_desk_scale(config)
    assert config.method_params["iterations"] == 60  # explicit value kept
    assert config.protocol.n_checkpoints <= 25


# ------------------------------------------------------------------- smoothing
def test_running_average_spike():
    series = [0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 0.0]
    out = running_average(series, 5)
    assert out[4] == pytest.approx(2.0)
    assert out[0] == 0.0
    assert out[5] == pytest.approx(2.0)  # spike still inside the trailing window


def test_running_average_short_prefix():
    out = running_average([4.0, 8.0], 5)
    assert out == [4.0, 6.0]


def test_best_selection_tie_breaks_earliest():
    reports = [MetricReport(elbo=v) for v in (1.0, 3.0, 3.0, 2.0)]
    assert select_best(reports) == 1


# ------------------------------------------------------------ experiment runs
def test_protocol_row_counts(tmp_path):
    doc = tiny_config(protocol={"n_checkpoints": 10, "eval_samples": 32,
                                "ipm_subsample": 0},
                      method={"name": "mfvi", "iterations": 50, "batch_size": 16,
                              "learning_rate": 0.05, "sigma0": 2.0},
                      seeds=[0, 1, 2, 3])
    record = run_experiment(parse_config(doc), clock=FakeClock())
    csv_text = render_checkpoint_csv(record)
    rows = csv_text.strip().splitlines()
    assert len(rows) == 1 + 10 * 4  # header + checkpoints x seeds


def test_seed_order_invariance(tmp_path):
    base = parse_config(tiny_config(seeds=[0, 1, 2]))
    swapped = parse_config(tiny_config(seeds=[2, 0, 1]))
    rec_a = run_experiment(base, clock=FakeClock())
    rec_b = run_experiment(swapped, clock=FakeClock())
    assert rec_a.summary == rec_b.summary


def test_deterministic_bytes_with_injected_clock(tmp_path):
    config = parse_config(tiny_config(output_dir=str(tmp_path / "a")))
    rec_a = run_experiment(config, clock=FakeClock())
    paths_a = emit_results(rec_a, tmp_path / "a")
    config_b = parse_config(tiny_config(output_dir=str(tmp_path / "b")))
    rec_b = run_experiment(config_b, clock=FakeClock())
    paths_b = emit_results(rec_b, tmp_path / "b")
    assert paths_a["csv"].read_bytes() == paths_b["csv"].read_bytes()
    assert paths_a["summary"].read_bytes() == paths_b["summary"].read_bytes()


def test_missing_criteria_emit_empty_cells(tmp_path):
    # brownian has no exact sampler: forward/mode/IPM columns must be empty
    doc = tiny_config(target={"name": "brownian"},
                      method={"name": "mfvi", "iterations": 40, "batch_size": 16,
                              "learning_rate": 0.01, "sigma0": 1.0})
    record = run_experiment(parse_config(doc), clock=FakeClock())
    lines = render_checkpoint_csv(record).strip().splitlines()
    header = lines[0].split(",")
    row = lines[1].split(",")
    for col in ("eubo", "log_z_fwd", "ess_fwd", "emc", "ejs", "mmd", "w2"):
        assert row[header.index(col)] == ""
    for col in ("elbo", "log_z_rev", "ess_rev"):
        assert row[header.index(col)] != ""


def test_csv_roundtrip_six_significant_digits(tmp_path):
    config = parse_config(tiny_config())
    record = run_experiment(config, clock=FakeClock())
    paths = emit_results(record, tmp_path)
    lines = paths["csv"].read_text().strip().splitlines()
    header = lines[0].split(",")
    first = lines[1].split(",")
    rep = record.seed_records[0].reports[0]
    for name in ("elbo", "ess_rev", "log_z_rev"):
        emitted = first[header.index(name)]
        assert emitted == f"{getattr(rep, name):.6g}"
        assert float(emitted) == pytest.approx(getattr(rep, name), rel=1e-5)


def test_emit_unwritable_path_leaves_no_partial(tmp_path):
    config = parse_config(tiny_config())
    record = run_experiment(config, clock=FakeClock())
    blocked = tmp_path / "blocked"
    blocked.mkdir()
    os.chmod(blocked, stat.S_IRUSR | stat.S_IXUSR)
    try:
        if os.access(blocked, os.W_OK):  # running as root: permissions are advisory
            pytest.skip("cannot create an unwritable directory as this user")
        with pytest.raises(OSError):
            emit_results(record, blocked)
        assert list(blocked.iterdir()) == []
    finally:
        os.chmod(blocked, stat.S_IRWXU)


def test_nfe_monotone_within_run():
    config = parse_config(tiny_config())
    record = run_experiment(config, clock=FakeClock())
    for seed_rec in record.seed_records:
        nfes = [r.nfe_at_eval for r in seed_rec.reports]
        assert all(a <= b for a, b in zip(nfes, nfes[1:]))


# -------------------------------------------------------------- NFE accounting
def test_smc_nfe_closed_form_hmc():
    target = make_mog_target(2, seed=0)
    target.nfe.reset()
    n, big_t = 20, 8
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2, 60.0), target, big_t)
    smc_run(path, HmcConfig(leapfrog_steps=10, step_size_low=0.5, step_size_high=0.5),
            n, RngStream(1, 0))
    assert target.nfe.value == n * big_t * 11


def test_smc_nfe_closed_form_mh_matches_hmc():
    target = make_mog_target(2, seed=0)
    target.nfe.reset()
    n, big_t = 16, 5
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2, 60.0), target, big_t)
    smc_run(path, MhConfig(n_substeps=10, scale_low=2.0, scale_high=2.0), n,
            RngStream(2, 0))
    assert target.nfe.value == n * big_t * 11


# ------------------------------------------------------------------- ablations
def test_ablation_kind_validation():
    config = parse_config(tiny_config())
    with pytest.raises(ConfigError, match="valid"):
        ablation_cells("nonexistent_kind", config)
    with pytest.raises(ConfigError, match="does not apply"):
        ablation_cells("smc_choices", config)  # mfvi is not smc


def test_ablation_grid_shapes():
    doc = tiny_config(method={"name": "mcd", "iterations": 5, "batch_size": 8})
    config = parse_config(doc)
    assert len(ablation_cells("langevin_choices", config)) == 8
    doc2 = tiny_config(method={"name": "dds", "iterations": 5, "batch_size": 8})
    assert len(ablation_cells("grad_network", parse_config(doc2))) == 2


def test_ablation_runs_and_emits(tmp_path):
    doc = tiny_config(
        target={"name": "gaussian", "dim": 1},
        method={"name": "mfvi", "iterations": 30, "batch_size": 16,
                "learning_rate": 0.05, "sigma0_grid": [1.0, 3.0]},
        seeds=[0],
        protocol={"n_checkpoints": 3, "eval_samples": 32, "ipm_subsample": 0},
    )
    from samplebench.harness import emit_ablation

    record = run_ablation("init_support", parse_config(doc), clock=FakeClock())
    assert len(record.cells) == 2
    paths = emit_ablation(record, tmp_path)
    text = paths["csv"].read_text()
    assert text.startswith("kind,cell,seed,best_checkpoint")
    assert "sigma0=1" in text and "sigma0=3" in text


# ------------------------------------------------------------------------- cli
def test_cli_run_and_exit_codes(tmp_path):
    from samplebench.cli import main

    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_config(output_dir=str(tmp_path / "out"))))
    assert main(["run", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "out" / "mfvi_gaussian_checkpoints.csv").exists()

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(tiny_config(schema_version=99)))
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_cli_metrics_subcommand(tmp_path, capsys):
    from samplebench.cli import main

    target = make_mog_target(2, seed=0)
    rng = RngStream(3, 0)
    x = target.exact_sampler(rng, 200)
    lw = np.zeros(200)
    path = tmp_path / "samples.csv"
    lines = ["x_1,x_2,log_w"] + [f"{a},{b},{w}" for (a, b), w in zip(x, lw)]
    path.write_text("\n".join(lines) + "\n")
    code = main(["metrics", "--samples", str(path), "--target", "mog", "--dim", "2",
                 "--ipm-samples", "64"])
    assert code == 0
    out = capsys.readouterr().out
    report = json.loads(out[out.index("{"):])
    assert report["elbo"] == 0.0
    assert 0.9 < report["emc"] <= 1.0  # exact samples cover the modes
