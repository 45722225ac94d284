"""Config round-trips, experiment drivers, CSV output, and the CLI."""

import numpy as np
import pytest

from fddmimo.cli import main
from fddmimo.config import (
    ExperimentConfig,
    config_hash,
    dumps_config,
    load_config,
    save_config,
)
from fddmimo.errors import ShapeMismatchError
from fddmimo.experiments import (
    EVAL_COLUMNS,
    eval_udct,
    gen_dataset,
    load_dataset,
    rate_sweep,
    save_dataset,
    train_from_config,
    write_csv,
)
from fddmimo.milp import BeamGraph, MilpInstance, write_instance
from fddmimo.mlp import save_checkpoint


def tiny_config(**overrides):
    base = dict(
        num_antennas=4,
        grid_size=8,
        num_samples=6,
        epochs=2,
        batch_size=2,
        learning_rate=0.05,
        methods=["nnls", "l2"],
        n_over_m_sweep=[1, 2],
        num_realizations=2,
        t_dl_sweep=[2],
        num_users=2,
        num_user_draws=1,
        num_channel_trials=2,
        rate_methods=["sparsify_true_cov", "sbf_true_cov"],
        t_total=8,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# config serialization


def test_config_round_trip_identity():
    cfg = tiny_config(p0=3.5, lmmse_full_prior=True, f_dl_mhz=2145.5)
    assert load_config(dumps_config(cfg)) == cfg


def test_config_round_trip_auto_p0(tmp_path):
    cfg = tiny_config()  # p0 stays None
    path = tmp_path / "exp.ini"
    save_config(path, cfg)
    assert "p0 = auto" in path.read_text()
    assert load_config(str(path)) == cfg


def test_config_partial_file_keeps_defaults():
    cfg = load_config("[model]\nnum_antennas = 16\ngrid_size = 64\n")
    assert cfg == ExperimentConfig(num_antennas=16, grid_size=64)


def test_config_hash_tracks_content():
    a, b = ExperimentConfig(), ExperimentConfig(seed=1)
    assert config_hash(a) == config_hash(ExperimentConfig())
    assert config_hash(a) != config_hash(b)
    assert len(config_hash(a)) == 16


def test_config_rejects_empty_sweeps():
    with pytest.raises(ValueError):
        ExperimentConfig(n_over_m_sweep=[])
    with pytest.raises(ValueError):
        ExperimentConfig(methods=[])


# ---------------------------------------------------------------------------
# dataset drivers


def test_gen_dataset_deterministic():
    cfg = tiny_config()
    x1, y1 = gen_dataset(cfg)
    x2, y2 = gen_dataset(cfg)
    assert x1.shape == (6, 8)
    assert y1.shape == (6, 8)
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(y1, y2)
    # labels are densities
    np.testing.assert_allclose(y1.sum(axis=1), 1.0, atol=1e-9)


def test_dataset_file_round_trip(tmp_path):
    cfg = tiny_config()
    x, y = gen_dataset(cfg)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_dataset(p1, x, y)
    save_dataset(p2, x, y)
    assert p1.read_bytes() == p2.read_bytes()
    x2, y2 = load_dataset(p1)
    np.testing.assert_array_equal(x, x2)
    np.testing.assert_array_equal(y, y2)


def test_dataset_file_validation(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(ValueError):
        load_dataset(bad)
    with pytest.raises(ShapeMismatchError):
        save_dataset(tmp_path / "x.bin", np.ones((3, 2)), np.ones((4, 2)))


# ---------------------------------------------------------------------------
# training driver


def test_train_from_config_resume_equals_straight_run(tmp_path):
    cfg = tiny_config()
    dataset = gen_dataset(cfg)

    spec, p3, _, done = train_from_config(tiny_config(epochs=3), dataset)
    ckpt = tmp_path / "mid.ckpt"
    save_checkpoint(ckpt, spec, p3, trained_epochs=done)
    _, resumed, _, total = train_from_config(
        tiny_config(epochs=2), dataset, checkpoint_in=str(ckpt)
    )
    assert total == 5

    _, straight, _, _ = train_from_config(tiny_config(epochs=5), dataset)
    for a, b in zip(resumed.weights, straight.weights):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(resumed.biases, straight.biases):
        np.testing.assert_array_equal(a, b)


def test_train_from_config_rejects_mismatched_checkpoint(tmp_path):
    cfg = tiny_config()
    dataset = gen_dataset(cfg)
    other = ExperimentConfig(num_antennas=8, grid_size=16)
    from fddmimo.mlp import MlpSpec, init_params

    spec = MlpSpec.for_dimensions(other.num_antennas, other.grid_size)
    ckpt = tmp_path / "wrong.ckpt"
    save_checkpoint(ckpt, spec, init_params(spec, rng_seed=0))
    with pytest.raises(ShapeMismatchError):
        train_from_config(cfg, dataset, checkpoint_in=str(ckpt))


# ---------------------------------------------------------------------------
# evaluation drivers


def test_eval_udct_rows_and_determinism():
    cfg = tiny_config()
    rows = eval_udct(cfg)
    assert len(rows) == 2 * 2 * 2  # methods x ratios x realizations
    for row in rows:
        assert row["method"] in ("nnls", "l2")
        assert np.isfinite(row["e_nfd"])
        assert 0.0 <= row["e_ple"] <= 1.0 + 1e-9
    again = eval_udct(cfg)
    for a, b in zip(rows, again):
        for key in ("method", "n_over_m", "realization", "e_nfd", "e_ple"):
            assert a[key] == b[key]


def test_eval_udct_threads_agree():
    cfg = tiny_config()
    serial = eval_udct(cfg, threads=1)
    pooled = eval_udct(cfg, threads=2)
    for a, b in zip(serial, pooled):
        assert a["e_nfd"] == b["e_nfd"]
        assert a["e_ple"] == b["e_ple"]


def test_eval_udct_requires_params_for_mlp():
    with pytest.raises(ValueError):
        eval_udct(tiny_config(methods=["mlp"]))


def test_eval_udct_rejects_unknown_method():
    with pytest.raises(ValueError):
        eval_udct(tiny_config(methods=["bogus"]))


def test_rate_sweep_rows_and_power():
    cfg = tiny_config()
    rows = rate_sweep(cfg)
    assert len(rows) == 2 * 1 * 2  # methods x t_dl x (draws*trials)
    for row in rows:
        assert row["sum_rate_bits_per_symbol"] >= 0.0
        if row["k_served"]:
            assert row["power_residual"] < 1e-9
        else:
            assert np.isnan(row["power_residual"])
    sbf = [r for r in rows if r["method"] == "sbf_true_cov"]
    assert all(r["k_served"] == 2 for r in sbf)


def test_rate_sweep_requires_params_for_estimated():
    with pytest.raises(ValueError):
        rate_sweep(tiny_config(rate_methods=["sparsify_est_cov"]))


def test_write_csv_format(tmp_path):
    cfg = tiny_config()
    rows = eval_udct(cfg)
    path = tmp_path / "metrics.csv"
    write_csv(path, rows, EVAL_COLUMNS, cfg, cfg.seed)
    lines = path.read_text().splitlines()
    assert lines[0] == f"# config_hash={config_hash(cfg)} seed={cfg.seed}"
    assert lines[1] == ",".join(EVAL_COLUMNS)
    assert len(lines) == 2 + len(rows)
    assert "np.float64" not in path.read_text()
    first = lines[2].split(",")
    float(first[3])  # e_nfd parses
    float(first[4])  # e_ple parses


# ---------------------------------------------------------------------------
# command line


@pytest.fixture()
def cli_workspace(tmp_path):
    cfg = tiny_config(
        methods=["nnls", "l2", "mlp"],
        out_dir=str(tmp_path / "out"),
        num_realizations=1,
    )
    path = tmp_path / "exp.ini"
    save_config(path, cfg)
    return cfg, path, tmp_path


def test_cli_pipeline(cli_workspace, capsys):
    cfg, cfg_path, tmp_path = cli_workspace
    out = tmp_path / "out"

    assert main(["gen-dataset", "--config", str(cfg_path)]) == 0
    assert (out / "dataset.bin").exists()

    assert main(["train", "--config", str(cfg_path)]) == 0
    assert (out / "model.ckpt").exists()
    loss_lines = (out / "loss.csv").read_text().splitlines()
    assert len(loss_lines) == 2 + cfg.epochs

    assert main(["eval-udct", "--config", str(cfg_path)]) == 0
    metrics = (out / "udct_metrics.csv").read_text().splitlines()
    assert metrics[1] == ",".join(EVAL_COLUMNS)
    assert len(metrics) == 2 + 3 * 2 * 1  # methods x ratios x realizations

    assert main(["rate-sweep", "--config", str(cfg_path)]) == 0
    assert (out / "rate_sweep.csv").exists()

    capsys.readouterr()  # drop pipeline chatter


def test_cli_seed_override_lands_in_csv(cli_workspace, capsys):
    cfg, cfg_path, tmp_path = cli_workspace
    assert main(["gen-dataset", "--config", str(cfg_path), "--seed", "5"]) == 0
    assert main(["train", "--config", str(cfg_path), "--seed", "5"]) == 0
    first = (tmp_path / "out" / "loss.csv").read_text().splitlines()[0]
    assert first.endswith("seed=5")
    capsys.readouterr()


def test_cli_solve_milp(tmp_path, capsys):
    graph = BeamGraph.from_weights(
        np.array([[1.0, 0.0], [0.0, 2.0], [0.5, 0.6]]), 0.1
    )
    instance = MilpInstance(graph=graph, t_dl=2, p0=0.2)
    inst_path = tmp_path / "beams.milp"
    write_instance(inst_path, instance)
    sol_path = tmp_path / "beams.sol"
    assert main(["solve-milp", str(inst_path), "--solution", str(sol_path)]) == 0
    assert sol_path.exists()
    assert "objective" in capsys.readouterr().out
