"""Command-line entry point: ``kanpnp run | adjoint-check | lipschitz-report | metrics``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import KanPnPError
from .experiment import ExperimentConfig, ExperimentError, Prior, Task, build_operator, run_experiment
from .images import load_image
from .kan import load_network
from .lipschitz import layer_bounds, lipschitz_empirical, lipschitz_upper_bound
from .metrics import psnr, ssim
from .operators import adjoint_check

ADJOINT_TOL = 1e-8


def _add_run_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--ground-truth", help="clean image; y is synthesized from it and metrics are reported")
    p.add_argument("--observation", help="measured image y (measurement space)")
    p.add_argument("--prior", choices=[v.value for v in Prior])
    p.add_argument("--output-dir", help="defaults to $KANPNP_OUTPUT_ROOT/<name>")
    p.add_argument("--name")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, nargs=2, metavar=("WIDTH", "HEIGHT"))
    p.add_argument("--no-resize", action="store_true", help="keep the native size (cropped to the task divisor)")
    p.add_argument("--float64", action="store_true", help="train the network in double precision")
    g = p.add_argument_group("training")
    g.add_argument("--iterations", type=int, dest="train.iterations")
    g.add_argument("--learning-rate", type=float, dest="train.learning_rate")
    g.add_argument("--noise-sigma", type=float, dest="train.noise_sigma")
    g.add_argument("--train-seed", type=int, dest="train.seed")
    g = p.add_argument_group("admm")
    g.add_argument("--admm-iterations", type=int, dest="admm.iterations")
    g.add_argument("--mu-start", type=float, dest="admm.mu_start")
    g.add_argument("--mu-end", type=float, dest="admm.mu_end")
    g.add_argument("--inner-steps", type=int, dest="admm.denoise.inner_steps")
    g.add_argument("--inner-lr", type=float, dest="admm.denoise.inner_lr")
    g = p.add_argument_group("operator")
    g.add_argument("--blur-size", type=int, dest="operator.blur_size")
    g.add_argument("--blur-std", type=float, dest="operator.blur_std")
    g.add_argument("--psf", dest="operator.psf_path", help="plain-text 2-D PSF array")
    g.add_argument("--measurement-noise", type=float, dest="operator.measurement_noise")
    g = p.add_argument_group("TV prior")
    g.add_argument("--tv-weight", type=float)
    g.add_argument("--tv-iters", type=int)


def _set_path(d: dict, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    skip = {"config", "command", "no_resize", "float64", "func"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        _set_path(base, key, list(value) if key == "size" else value)
    if args.no_resize:
        base["size"] = None
    if args.float64:
        base["float32"] = False
    return ExperimentConfig.from_dict(base)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    report = run_experiment(cfg)
    summary = {k: report[k] for k in ("task", "prior", "psnr", "ssim", "residuals") if k in report}
    summary["output_dir"] = str(cfg.resolve_output_dir())
    print(json.dumps(summary, indent=2))
    return 0


def cmd_adjoint_check(args) -> int:
    h, w = args.size[1], args.size[0]
    worst = 0.0
    for task in Task:
        op = build_operator(task, h, w, 3)
        err = adjoint_check(op, seed=args.seed)
        worst = max(worst, err)
        print(f"{task.value:9s} {type(op).__name__:10s} discrepancy={err:.3e}")
    ok = worst < ADJOINT_TOL
    print(f"{'PASS' if ok else 'FAIL'} (tolerance {ADJOINT_TOL:g})")
    return 0 if ok else 1


def cmd_lipschitz(args) -> int:
    net = load_network(args.network)
    out = {
        "dims": net.dims,
        "basis": net.basis.to_dict(),
        "upper_bound_l2": lipschitz_upper_bound(net, "l2"),
        "upper_bound_linf": lipschitz_upper_bound(net, "linf"),
        "layer_bounds_l2": layer_bounds(net, "l2"),
        "empirical": lipschitz_empirical(net, args.pairs, args.seed),
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_metrics(args) -> int:
    a = load_image(args.reference)
    b = load_image(args.test)
    print(json.dumps({"psnr": psnr(a, b), "ssim": ssim(a, b)}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kanpnp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="degrade, pretrain, reconstruct and evaluate one image")
    _add_run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("adjoint-check", help="dot-product test of every task operator")
    p.add_argument("--size", type=int, nargs=2, default=[64, 48], metavar=("WIDTH", "HEIGHT"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_adjoint_check)

    p = sub.add_parser("lipschitz-report", help="certified bound and sampled estimate for a saved network")
    p.add_argument("network", help=".npz file written by a run")
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lipschitz)

    p = sub.add_parser("metrics", help="PSNR and SSIM between two images")
    p.add_argument("reference")
    p.add_argument("test")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"kanpnp: error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 2
    except (KanPnPError, OSError, ValueError) as exc:
        stage = {"run": "config"}.get(args.command, args.command)
        print(f"kanpnp: error in stage {stage}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
