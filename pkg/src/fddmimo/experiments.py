"""Experiment drivers shared by the command line and the test suite.

Every driver is a pure function of (config, inputs, seed): sample draws
come from explicitly indexed generator seeds, worker pools reduce in task
order, and reruns are bit-identical except for the wall-time column.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .config import config_hash
from .errors import ShapeMismatchError
from .linksim import run_downlink_trial, run_sbf_trial, statistical_beamformer
from .mlp import MlpSpec, TrainConfig, load_checkpoint, train
from .precoding import design_precoder
from .udct import (UdctEstimate, estimate_l2, estimate_mlp, estimate_nnls,
                   features_from_cov, metric_nfd, metric_power_loss)
from .ula import (DL, UL, GroupSparseAsfSpec, UlaModel, sample_asf,
                  sample_channels, sample_cov, synth_cov, toeplitzify)

__all__ = [
    "SampleRecord",
    "model_from_config",
    "asf_spec_from_config",
    "make_sample",
    "gen_dataset",
    "save_dataset",
    "load_dataset",
    "train_from_config",
    "eval_udct",
    "rate_sweep",
    "write_csv",
    "EVAL_COLUMNS",
    "RATE_COLUMNS",
    "LOSS_COLUMNS",
]

_DSET_MAGIC = b"DSET"
_DSET_VERSION = 1

# leading stream index per draw family, under the master seed
_STREAM_DATASET = 0
_STREAM_EVAL = 1
_STREAM_RATE_ASF = 2
_STREAM_RATE_EST = 3
_STREAM_RATE_TRIAL = 4

LOSS_COLUMNS = ["epoch", "train_loss", "val_loss"]
EVAL_COLUMNS = ["method", "n_over_m", "realization", "e_nfd", "e_ple",
                "wall_time_ms"]
RATE_COLUMNS = ["method", "t_dl", "trial", "sum_rate_bits_per_symbol",
                "k_served"]


def model_from_config(cfg):
    return UlaModel(cfg.num_antennas, cfg.grid_size,
                    cfg.f_ul_mhz * 1e6, cfg.f_dl_mhz * 1e6)


def asf_spec_from_config(cfg):
    return GroupSparseAsfSpec(num_groups=cfg.num_groups,
                              max_width=cfg.max_width)


def _seed_list(rng_seed):
    if np.ndim(rng_seed) == 0:
        return [int(rng_seed)]
    return [int(s) for s in rng_seed]


def _resolve_threads(threads):
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def _map_tasks(fn, tasks, threads):
    """Apply fn over tasks, serially or in a process pool, in task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class SampleRecord:
    """One draw of the estimation pipeline's input and ground truth."""

    asf: object
    ul_true: object
    ul_hat: object
    features: np.ndarray
    label: np.ndarray


def make_sample(model, spec, n_over_m, snr_db, rng_seed):
    """Draw density -> uplink covariance -> snapshots -> toeplitzified estimate."""
    base = _seed_list(rng_seed)
    asf = sample_asf(spec, model, [*base, 0])
    ul_true = synth_cov(model, asf, UL)
    batch = sample_channels(model, ul_true, n_over_m * model.num_antennas,
                            snr_db, [*base, 1])
    ul_hat = toeplitzify(sample_cov(batch))
    return SampleRecord(
        asf=asf,
        ul_true=ul_true,
        ul_hat=ul_hat,
        features=features_from_cov(ul_hat.first_column),
        label=asf.weights.copy(),
    )


def gen_dataset(cfg, seed=None):
    """Labeled training pairs, shape (S, 2M) features and (S, G) labels.

    Snapshot ratios cycle through cfg.n_over_m so the network trains on
    every estimation-noise level it will be evaluated at.
    """
    seed = cfg.seed if seed is None else seed
    model = model_from_config(cfg)
    spec = asf_spec_from_config(cfg)
    mix = cfg.n_over_m
    x = np.empty((cfg.num_samples, 2 * model.num_antennas))
    y = np.empty((cfg.num_samples, model.grid_size))
    for s in range(cfg.num_samples):
        rec = make_sample(model, spec, mix[s % len(mix)], cfg.snr_db,
                          [seed, _STREAM_DATASET, s])
        x[s] = rec.features
        y[s] = rec.label
    return x, y


def save_dataset(path, features, labels):
    """Binary dataset record: magic, version, dims, float64 payloads."""
    x = np.ascontiguousarray(features, dtype="<f8")
    y = np.ascontiguousarray(labels, dtype="<f8")
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeMismatchError("features and labels must pair up row-wise")
    header = np.array([x.shape[0], x.shape[1], y.shape[1]], dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(_DSET_MAGIC)
        fh.write(bytes([_DSET_VERSION]))
        fh.write(header.tobytes())
        fh.write(x.tobytes())
        fh.write(y.tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _DSET_MAGIC:
        raise ValueError(f"bad dataset magic {raw[:4]!r}")
    if raw[4] != _DSET_VERSION:
        raise ValueError(f"unsupported dataset version {raw[4]}")
    n, d_in, d_out = (int(v) for v in np.frombuffer(raw, "<i8", count=3, offset=5))
    offset = 5 + 3 * 8
    x = np.frombuffer(raw, "<f8", count=n * d_in, offset=offset)
    offset += n * d_in * 8
    y = np.frombuffer(raw, "<f8", count=n * d_out, offset=offset)
    return x.reshape(n, d_in).copy(), y.reshape(n, d_out).copy()


def train_from_config(cfg, dataset, checkpoint_in=None):
    """Train (or resume) the density network for this config.

    Returns (spec, params, trace, trained_epochs) where trained_epochs
    counts all epochs including those of the loaded checkpoint.
    """
    spec = MlpSpec.for_dimensions(cfg.num_antennas, cfg.grid_size)
    tc = TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
        train_fraction=cfg.train_fraction,
    )
    init, start = None, 0
    if checkpoint_in is not None:
        ck_spec, init, start = load_checkpoint(checkpoint_in)
        if ck_spec != spec:
            raise ShapeMismatchError(
                "checkpoint network dimensions do not match the config"
            )
    params, trace = train(spec, dataset, tc, init=init, start_epoch=start)
    return spec, params, trace, start + cfg.epochs


def _eval_one(cfg, params, seed, task):
    """All methods' metric rows for one (n_over_m, realization) cell."""
    nm, r = task
    model = model_from_config(cfg)
    spec = asf_spec_from_config(cfg)
    rec = make_sample(model, spec, nm, cfg.snr_db, [seed, _STREAM_EVAL, nm, r])
    dl_true = synth_cov(model, rec.asf, DL)
    col = rec.ul_hat.first_column
    rows = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        if method == "nnls":
            est = estimate_nnls(model, col)
        elif method == "l2":
            est = estimate_l2(model, col)
        elif method == "mlp":
            est = estimate_mlp(model, params, col)
        elif method == "true":
            # injection mode: pass the ground truth through the metrics
            est = UdctEstimate(asf=rec.asf, dl_cov=dl_true, method="true")
        else:
            raise ValueError(f"unknown method {method!r}")
        wall_ms = (time.perf_counter() - t0) * 1e3
        rows.append({
            "method": method,
            "n_over_m": nm,
            "realization": r,
            "e_nfd": metric_nfd(dl_true, est.dl_cov),
            "e_ple": metric_power_loss(dl_true, est.dl_cov),
            "wall_time_ms": wall_ms,
        })
    return rows


def eval_udct(cfg, params=None, seed=None, threads=None):
    """Transformation-quality sweep: methods x sampling ratios x realizations.

    Methods see identical realizations within each cell, so per-method
    metric differences are paired.
    """
    seed = cfg.seed if seed is None else seed
    if "mlp" in cfg.methods and params is None:
        raise ValueError("mlp method requested but no trained network given")
    threads = _resolve_threads(cfg.threads if threads is None else threads)
    tasks = [(nm, r) for nm in cfg.n_over_m_sweep
             for r in range(cfg.num_realizations)]
    chunks = _map_tasks(partial(_eval_one, cfg, params, seed), tasks, threads)
    return [row for chunk in chunks for row in chunk]


def _estimate_ensemble(cfg, model, params, seed, d):
    """MLP-estimated downlink covariances for one draw of the user set."""
    spec = asf_spec_from_config(cfg)
    est = []
    for k in range(cfg.num_users):
        rec = make_sample(model, spec, cfg.rate_n_over_m, cfg.snr_db,
                          [seed, _STREAM_RATE_EST, d, k])
        est.append(estimate_mlp(model, params, rec.ul_hat.first_column).dl_cov)
    return est


def _rate_draw(cfg, params, seed, d):
    """All trials and methods for one draw of the K-user ensemble."""
    model = model_from_config(cfg)
    spec = asf_spec_from_config(cfg)
    asfs = [sample_asf(spec, model, [seed, _STREAM_RATE_ASF, d, k])
            for k in range(cfg.num_users)]
    dl_true = [synth_cov(model, a, DL) for a in asfs]

    need_est = any(m.endswith("est_cov") for m in cfg.rate_methods)
    dl_est = _estimate_ensemble(cfg, model, params, seed, d) if need_est else None

    ensembles = {"true_cov": dl_true, "est_cov": dl_est}
    designs = {}
    sbf_dirs = {}
    for method in cfg.rate_methods:
        kind, _, source = method.partition("_")
        covs = ensembles[source]
        if kind == "sparsify":
            for t_dl in cfg.t_dl_sweep:
                designs[(method, t_dl)] = design_precoder(
                    covs, t_dl, p0=cfg.p0, epsilon=cfg.epsilon,
                    time_limit=cfg.milp_time_limit)
        elif kind == "sbf":
            sbf_dirs[method] = statistical_beamformer(covs, 1.0)
        else:
            raise ValueError(f"unknown rate method {method!r}")

    rows = []
    for t in range(cfg.num_channel_trials):
        trial_seed = [seed, _STREAM_RATE_TRIAL, d, t]
        trial = d * cfg.num_channel_trials + t
        for method in cfg.rate_methods:
            kind, _, source = method.partition("_")
            if kind == "sparsify":
                for t_dl in cfg.t_dl_sweep:
                    real = run_downlink_trial(
                        model, dl_true, ensembles[source], t_dl,
                        t_total=cfg.t_total, p_dl=cfg.p_dl,
                        rng_seed=trial_seed, design=designs[(method, t_dl)],
                        full_prior=cfg.lmmse_full_prior)
                    rows.append(_rate_row(method, t_dl, trial, real, cfg.p_dl))
            else:
                real = run_sbf_trial(model, ensembles[source], dl_true,
                                     t_total=cfg.t_total, p_dl=cfg.p_dl,
                                     rng_seed=trial_seed,
                                     beams=sbf_dirs[method])
                for t_dl in cfg.t_dl_sweep:  # overhead-free: same rate per point
                    rows.append(_rate_row(method, t_dl, trial, real, cfg.p_dl))
    return rows


def _rate_row(method, t_dl, trial, real, p_dl):
    if real.num_served:
        sent = float(np.sum(real.power_alloc
                            * np.linalg.norm(real.tx_matrix, axis=0) ** 2))
        residual = abs(sent - p_dl)
    else:
        residual = float("nan")  # nothing transmitted, constraint vacuous
    return {
        "method": method,
        "t_dl": t_dl,
        "trial": trial,
        "sum_rate_bits_per_symbol": real.sum_rate,
        "k_served": real.num_served,
        "power_residual": residual,
    }


def rate_sweep(cfg, params=None, seed=None, threads=None):
    """Sum-rate comparison rows over methods x T_dl x trials.

    Channel realizations are paired across methods and T_dl points (same
    per-trial stream), so method gaps can be read per trial. Rows carry a
    ``power_residual`` field beyond the CSV schema for invariant checks.
    """
    seed = cfg.seed if seed is None else seed
    need_est = any(m.endswith("est_cov") for m in cfg.rate_methods)
    if need_est and params is None:
        raise ValueError("estimated-covariance methods need a trained network")
    threads = _resolve_threads(cfg.threads if threads is None else threads)
    tasks = list(range(cfg.num_user_draws))
    chunks = _map_tasks(partial(_rate_draw, cfg, params, seed), tasks, threads)
    return [row for chunk in chunks for row in chunk]


def write_csv(path, rows, columns, cfg, seed):
    """CSV with the standard comment line (config hash + seed) and header."""
    with open(path, "w") as fh:
        fh.write(f"# config_hash={config_hash(cfg)} seed={seed}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[c]) for c in columns) + "\n")


def _cell(value):
    if isinstance(value, float):
        return repr(float(value))  # plain repr even for numpy scalars
    return str(value)
