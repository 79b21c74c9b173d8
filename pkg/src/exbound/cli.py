"""Command-line front end: data generation, training, evaluation, reports.

Subcommands: gen-data, train, eval, boundary, verify, bs-price,
crr-price.  Reports are JSON, plottable series are CSV, and a rendered
figure is written next to each report.  Exit codes: 0 success,
1 assertion failure, 2 usage/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .boundary import compare_to_fd
from .config import (RunConfig, TRAINED_STRIKE_MAX, TRAINED_STRIKE_MIN,
                     config_to_ini, load_config)
from .evaluation import evaluate_model
from .fd import ConvergenceFailure, MarketParams, PutPayoff, SingularSystemError
from .figures import boundary_figure, eval_figure, loss_figure
from .neural import DivergenceError
from .operator import (build_dataset, build_model, load_dataset,
                       load_operator, predict_surface, save_dataset,
                       save_operator, train)
from .oracles import BsQuote, bs_put, crr_american_put
from .verify import SUITE_NAMES, run_suite

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


def _resolve(args) -> tuple[RunConfig, Path]:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {exc.filename}") from exc
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.ini").write_text(config_to_ini(cfg))
    return cfg, out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(args) -> int:
    cfg, out = _resolve(args)
    strikes = cfg.strikes.strikes()
    for k in strikes:
        if not (TRAINED_STRIKE_MIN <= k <= TRAINED_STRIKE_MAX):
            print(f"warning: strike {k:g} outside the trained range "
                  f"[{TRAINED_STRIKE_MIN:g}, {TRAINED_STRIKE_MAX:g}]",
                  file=sys.stderr)
    dataset = build_dataset(strikes, cfg.market, cfg.grid(), cfg.method,
                            test_strikes=cfg.strikes.test)
    manifest = save_dataset(dataset, out / "dataset")
    print(f"wrote {len(strikes)} surfaces to {out / 'dataset'}")
    print(f"test strikes: {manifest['test_strikes']}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, out = _resolve(args)
    manifest_path = out / "dataset" / "manifest.json"
    if not manifest_path.exists():
        raise UsageError(
            f"dataset not found; expected manifest at {manifest_path} "
            f"(run gen-data first)")
    dataset = load_dataset(out / "dataset")
    model = build_model(dataset.grid, n_sensors=cfg.arch.n_sensors,
                        latent=cfg.arch.latent,
                        branch_hidden=cfg.arch.branch_hidden,
                        trunk_hidden=cfg.arch.trunk_hidden,
                        seed=cfg.stream_seed("init"))
    report = train(model, dataset, cfg.train_config())
    save_operator(model, out / "operator.ckpt")
    _write_json(out / "train_report.json", report.to_json_dict())
    loss_figure(report.epoch_losses, out / "loss_curve.png")
    print(f"final train MSE (normalized): {report.final_train_loss:.3e}")
    if report.final_test_loss is not None:
        print(f"final test MSE (normalized): {report.final_test_loss:.3e}")
    print(f"checkpoint: {out / 'operator.ckpt'}  "
          f"({report.n_steps} steps, {report.elapsed_seconds:.1f} s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, out = _resolve(args)
    ckpt = out / "operator.ckpt"
    if not ckpt.exists():
        raise UsageError(f"checkpoint not found: {ckpt} (run train first)")
    manifest_path = out / "dataset" / "manifest.json"
    if not manifest_path.exists():
        raise UsageError(f"dataset not found; expected {manifest_path}")
    model = load_operator(ckpt)
    dataset = load_dataset(out / "dataset")
    metrics = evaluate_model(model, dataset)
    _write_json(out / "eval_report.json",
                {"per_strike": [m.to_json_dict() for m in metrics]})
    eval_figure(metrics, out / "eval_errors.png")
    held = [m for m in metrics if m.held_out]
    for m in held:
        print(f"K={m.strike:g} (held out): rel L2 {m.rel_l2_error:.4f}, "
              f"boundary off by <= {m.boundary_max_nodes} nodes")
    return EXIT_OK


def cmd_boundary(args) -> int:
    cfg, out = _resolve(args)
    strike = args.strike
    if strike is None:
        raise UsageError("boundary requires --strike")
    if not (TRAINED_STRIKE_MIN <= strike <= TRAINED_STRIKE_MAX):
        raise UsageError(
            f"strike {strike:g} outside the supported range "
            f"[{TRAINED_STRIKE_MIN:g}, {TRAINED_STRIKE_MAX:g}]")
    ckpt = out / "operator.ckpt"
    if not ckpt.exists():
        raise UsageError(f"checkpoint not found: {ckpt} (run train first)")
    model = load_operator(ckpt)
    payoff = PutPayoff(strike)
    grid = cfg.grid()
    from .fd import price_american

    fd_surface = price_american(cfg.market, grid, payoff, cfg.method)
    pred = predict_surface(model, payoff, grid)
    b_fd, b_model, dist = compare_to_fd(fd_surface, pred, payoff)

    csv_path = out / f"boundary_K{strike:g}.csv"
    lines = ["t,b_fd,b_model,node_distance"]
    for t, bf, bm, d in zip(b_fd.times, b_fd.critical_prices,
                            b_model.critical_prices, dist):
        lines.append(f"{repr(float(t))},{repr(float(bf))},"
                     f"{repr(float(bm))},{d}")
    csv_path.write_text("\n".join(lines) + "\n")
    boundary_figure(strike, b_fd.times, b_fd.critical_prices,
                    b_model.critical_prices, out / f"boundary_K{strike:g}.png")
    print(f"wrote {csv_path}; max node distance {int(dist.max())}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg, out = _resolve(args)
    kwargs = {"seed": cfg.stream_seed(f"verify:{args.suite}"),
              "market": cfg.market}
    if args.suite == "assumptions":
        kwargs["n_paths"] = cfg.verify.assumption_paths
    elif args.suite == "lipschitz":
        kwargs["n_paths"] = cfg.verify.lipschitz_paths
        kwargs["grid"] = cfg.grid()
    elif args.suite == "approximation":
        kwargs["n_paths"] = cfg.verify.path_error_paths
    report = run_suite(args.suite, **kwargs)
    _write_json(out / f"verify_{args.suite}.json", report.to_json_dict())
    for a in report.assertions:
        print(f"[{'PASS' if a.passed else 'FAIL'}] {args.suite}:{a.name}")
    if not report.passed:
        print(f"first failing assertion: {report.first_failure()}",
              file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_bs_price(args) -> int:
    cfg = load_config(args.config)
    rate = args.rate if args.rate is not None else cfg.market.rate
    vol = args.vol if args.vol is not None else cfg.market.volatility
    tau = args.tau if args.tau is not None else cfg.grid_maturity_T
    for spot in args.spot:
        print(bs_put(BsQuote(spot, args.strike, rate, vol, tau)))
    return EXIT_OK


def cmd_crr_price(args) -> int:
    cfg = load_config(args.config)
    rate = args.rate if args.rate is not None else cfg.market.rate
    vol = args.vol if args.vol is not None else cfg.market.volatility
    tau = args.tau if args.tau is not None else cfg.grid_maturity_T
    market = MarketParams(rate, vol)
    for spot in args.spot:
        print(crr_american_put(spot, args.strike, market, tau, args.steps))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exbound",
        description="Learned put-pricing operator with FD ground truth "
                    "and exercise-boundary reports")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config root seed")

    p = sub.add_parser("gen-data", help="price the FD surface family")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the operator on the dataset")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score the checkpoint against FD")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("boundary", help="export FD and model boundaries")
    common(p)
    p.add_argument("--strike", type=float, required=True)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("verify", help="run a verification suite")
    common(p)
    p.add_argument("suite", choices=SUITE_NAMES)
    p.set_defaults(func=cmd_verify)

    for name, fn in (("bs-price", cmd_bs_price), ("crr-price", cmd_crr_price)):
        p = sub.add_parser(name, help=f"{name} oracle, one value per line")
        p.add_argument("--config", default=None)
        p.add_argument("--strike", type=float, required=True)
        p.add_argument("--spot", type=float, nargs="+", required=True)
        p.add_argument("--rate", type=float, default=None)
        p.add_argument("--vol", type=float, default=None)
        p.add_argument("--tau", type=float, default=None)
        if name == "crr-price":
            p.add_argument("--steps", type=int, default=5000)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceFailure, SingularSystemError, DivergenceError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
