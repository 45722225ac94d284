"""Command line entry points for the experiment pipeline."""

import argparse
import os
import time

from . import experiments as ex
from .config import ExperimentConfig, load_config
from .milp import read_instance, solve_milp, write_solution
from .mlp import save_checkpoint


def _add_common(parser):
    parser.add_argument("--config", metavar="PATH",
                        help="INI config file; defaults apply when omitted")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="override the config seed")
    parser.add_argument("--out", metavar="DIR",
                        help="override the config output directory")
    parser.add_argument("--threads", type=int, metavar="N",
                        help="worker processes, 0 for all cores")


def _setup(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _out(cfg, name):
    return os.path.join(cfg.out_dir, name)


def cmd_gen_dataset(args):
    cfg = _setup(args)
    t0 = time.perf_counter()
    x, y = ex.gen_dataset(cfg)
    path = _out(cfg, "dataset.bin")
    ex.save_dataset(path, x, y)
    print(f"wrote {path}: {x.shape[0]} samples, "
          f"{x.shape[1]}-d features, {y.shape[1]}-d labels "
          f"({time.perf_counter() - t0:.1f} s)")
    return 0


def cmd_train(args):
    cfg = _setup(args)
    dataset_path = args.dataset or _out(cfg, "dataset.bin")
    dataset = ex.load_dataset(dataset_path)
    spec, params, trace, total_epochs = ex.train_from_config(
        cfg, dataset, checkpoint_in=args.resume)
    ckpt = _out(cfg, "model.ckpt")
    save_checkpoint(ckpt, spec, params, trained_epochs=total_epochs)
    rows = [{"epoch": e, "train_loss": tr, "val_loss": va}
            for e, tr, va in trace]
    loss_csv = _out(cfg, "loss.csv")
    ex.write_csv(loss_csv, rows, ex.LOSS_COLUMNS, cfg, cfg.seed)
    last = trace[-1] if trace else (total_epochs - 1, float("nan"), float("nan"))
    print(f"wrote {ckpt} ({total_epochs} epochs total) and {loss_csv}; "
          f"final train loss {last[1]:.4f}, val loss {last[2]:.4f}")
    return 0


def _load_params(args, cfg, needed):
    if not needed:
        return None
    from .mlp import load_checkpoint

    path = args.checkpoint or _out(cfg, "model.ckpt")
    _, params, _ = load_checkpoint(path)
    return params


def cmd_eval_udct(args):
    cfg = _setup(args)
    params = _load_params(args, cfg, "mlp" in cfg.methods)
    rows = ex.eval_udct(cfg, params=params)
    path = _out(cfg, "udct_metrics.csv")
    ex.write_csv(path, rows, ex.EVAL_COLUMNS, cfg, cfg.seed)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_rate_sweep(args):
    cfg = _setup(args)
    needed = any(m.endswith("est_cov") for m in cfg.rate_methods)
    params = _load_params(args, cfg, needed)
    rows = ex.rate_sweep(cfg, params=params)
    path = _out(cfg, "rate_sweep.csv")
    ex.write_csv(path, rows, ex.RATE_COLUMNS, cfg, cfg.seed)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_solve_milp(args):
    instance = read_instance(args.instance)
    solution = solve_milp(instance, time_limit=args.time_limit)
    if args.solution:
        write_solution(args.solution, solution)
    status = "optimal" if solution.proven_optimal else f"gap {solution.gap:.3g}"
    print(f"objective {solution.objective!r} ({status}, "
          f"{solution.nodes} nodes); beams "
          + " ".join(str(i) for i in solution.selected_beams)
          + "; users " + " ".join(str(i) for i in solution.selected_users))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fddmimo",
        description="FDD massive MIMO downlink covariance and precoding "
                    "experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="draw the labeled training set")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_dataset)

    p = sub.add_parser("train", help="train the density network")
    _add_common(p)
    p.add_argument("--dataset", metavar="PATH",
                   help="dataset file (default: <out>/dataset.bin)")
    p.add_argument("--resume", metavar="CKPT",
                   help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval-udct",
                       help="covariance-transformation metric sweep")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="CKPT",
                   help="trained network (default: <out>/model.ckpt)")
    p.set_defaults(fn=cmd_eval_udct)

    p = sub.add_parser("rate-sweep", help="sum-rate comparison sweep")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="CKPT",
                   help="trained network (default: <out>/model.ckpt)")
    p.set_defaults(fn=cmd_rate_sweep)

    p = sub.add_parser("solve-milp", help="solve one beam-selection instance")
    p.add_argument("instance", help="plain-text instance file")
    p.add_argument("--solution", metavar="PATH",
                   help="write the solution file here")
    p.add_argument("--time-limit", type=float, default=60.0, metavar="S")
    p.set_defaults(fn=cmd_solve_milp)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
