"""Command line: ``simulate``, ``grad-check``, ``gain-curve`` and ``rerun``.

Exit codes: 0 success, 1 a checked property failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__, audit, focusing, io
from .losses import LOSS_NAMES, Base, LossSpec, parse_loss
from .simlab import SimConfig, final_report, generate_cases, get_backend, run

log = logging.getLogger("wiou_lab")

SEED_ENV = "WIOU_LAB_SEED"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return value


def _alpha(text: str) -> float:
    value = _positive_float(text)
    if not value > 1:
        raise argparse.ArgumentTypeError(f"alpha must exceed 1, got {text!r}")
    return value


def _count(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return value


def _specs(names: str, args) -> list[LossSpec]:
    specs = []
    for name in filter(None, (n.strip() for n in names.split(","))):
        try:
            specs.append(parse_loss(name, gamma=args.gamma, alpha=args.alpha, delta=args.delta))
        except ValueError as exc:
            raise UsageError(f"{exc} (or <base>-mono, <base>-nonmono)") from None
    if not specs:
        raise UsageError(f"no losses given; valid losses: {', '.join(LOSS_NAMES)}")
    return specs


def _add_fm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=_positive_float, default=0.5, help="monotonic focusing exponent")
    p.add_argument("--alpha", type=_alpha, default=1.9, help="non-monotonic gain alpha (> 1)")
    p.add_argument("--delta", type=_positive_float, default=3.0, help="non-monotonic gain delta")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wiou-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the regression simulation and write curves")
    sim.add_argument("--r", dest="radius", type=_positive_float, default=0.5, help="anchor disc radius")
    sim.add_argument("--losses", default="iou,giou,diou,ciou,eiou,siou,wiou1")
    sim.add_argument("--iters", type=int, default=200)
    sim.add_argument("--lr", type=_positive_float, default=0.01)
    sim.add_argument("--seed", type=int, default=None, help=f"default from ${SEED_ENV}, else 0")
    sim.add_argument("--subsample", type=_positive_float, default=1.0)
    sim.add_argument("--density", type=_count, default=20000, help="anchor points per unit r^2")
    sim.add_argument("--ema-momentum", type=_nonneg_float, default=0.01)
    sim.add_argument("--threshold", type=_positive_float, default=0.2, help="IoU-loss level for the ranking")
    sim.add_argument("--workers", type=_count, default=1)
    sim.add_argument("--backend", choices=("auto", "c", "python"), default="auto")
    sim.add_argument("--dump-cases", action="store_true", help="also write the initial cases CSV")
    sim.add_argument("--out", type=Path, default=Path("sim_out"))
    _add_fm_flags(sim)

    gc = sub.add_parser("grad-check", help="compare gradients with central differences")
    gc.add_argument("--loss", default="all", help="comma-separated names or 'all'")
    gc.add_argument("--cases", type=_count, default=1000)
    gc.add_argument("--seed", type=int, default=None)
    gc.add_argument("--tolerance", type=_nonneg_float, default=1e-5)
    gc.add_argument("--step", type=_positive_float, default=1e-6)
    gc.add_argument("--disjoint-only", action="store_true")
    gc.add_argument("--out", type=Path, default=Path("grad_check.csv"))
    _add_fm_flags(gc)

    gain = sub.add_parser("gain-curve", help="tabulate the non-monotonic gain r(beta)")
    gain.add_argument("--alpha", type=_alpha, default=1.9)
    gain.add_argument("--delta", type=_positive_float, default=3.0)
    gain.add_argument("--beta-max", type=_positive_float, default=10.0)
    gain.add_argument("--steps", type=int, default=1000)
    gain.add_argument("--preset", choices=("table1",), default=None, help="the three (alpha, delta) presets")
    gain.add_argument("--out", type=Path, default=Path("gain_out"))

    rr = sub.add_parser("rerun", help="repeat a run from its manifest")
    rr.add_argument("manifest", type=Path)
    rr.add_argument("--out", type=Path, required=True)
    return parser


def _canonical_argv(args, flags: list[tuple[str, str]]) -> list[str]:
    argv = [args.command]
    for flag, dest in flags:
        value = getattr(args, dest)
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    return argv


def _manifest(args, argv, artifacts, out: Path, **extra) -> dict:
    manifest = {
        "tool": "wiou-lab",
        "version": __version__,
        "command": args.command,
        "argv": argv,
        "seed": args.seed,
        "artifacts": sorted(str(p.relative_to(out)) for p in artifacts),
    }
    manifest.update(extra)
    return manifest


SIM_FLAGS = [
    ("--r", "radius"),
    ("--losses", "losses"),
    ("--iters", "iters"),
    ("--lr", "lr"),
    ("--seed", "seed"),
    ("--subsample", "subsample"),
    ("--density", "density"),
    ("--ema-momentum", "ema_momentum"),
    ("--threshold", "threshold"),
    ("--gamma", "gamma"),
    ("--alpha", "alpha"),
    ("--delta", "delta"),
    ("--dump-cases", "dump_cases"),
]


def cmd_simulate(args) -> int:
    specs = _specs(args.losses, args)
    try:
        config = SimConfig(
            radius=args.radius,
            points_density=args.density,
            lr=args.lr,
            iterations=args.iters,
            seed=args.seed,
            subsample=args.subsample,
            ema_momentum=args.ema_momentum,
        )
        backend = get_backend(args.backend)
    except (ValueError, RuntimeError) as exc:
        raise UsageError(str(exc)) from None
    out: Path = args.out
    cases = generate_cases(config)
    log.info("%d cases, backend %s, %d worker(s)", len(cases), backend.name, args.workers)
    artifacts = []
    if args.dump_cases:
        artifacts.append(io.write_cases(out / "cases.csv", cases))
    runs = []
    for spec in specs:
        result = run(config, spec, cases=cases, workers=args.workers, backend=backend)
        runs.append(result)
        artifacts.append(io.write_curve(out / f"curve_{spec.name}.csv", result.records))
        log.info("%s: final mean IoU loss %.6f", spec.name, result.final_mean_iou_loss)
    report = final_report(runs, args.threshold)
    artifacts.append(io.write_ranking(out / "ranking.csv", report))

    argv = _canonical_argv(args, SIM_FLAGS)
    manifest = _manifest(
        args,
        argv,
        artifacts,
        out,
        backend=backend.name,
        config=config.to_dict(),
        losses=[s.snapshot() for s in specs],
        cases=len(cases),
    )
    io.write_manifest(out / "manifest.json", manifest)

    print(f"{len(cases)} cases, {config.iterations} iterations, lr {config.lr}")
    print(f"{'rank':>4}  {'loss':<14}{'final L_IoU':>14}  iters to {args.threshold:g}")
    for k, row in enumerate(report, 1):
        reached = "-" if row.iterations_to_threshold is None else str(row.iterations_to_threshold)
        print(f"{k:>4}  {row.loss:<14}{row.final_mean_iou_loss:>14.6f}  {reached}")
    return EXIT_OK


GC_FLAGS = [
    ("--loss", "loss"),
    ("--cases", "cases"),
    ("--seed", "seed"),
    ("--tolerance", "tolerance"),
    ("--step", "step"),
    ("--disjoint-only", "disjoint_only"),
    ("--gamma", "gamma"),
    ("--alpha", "alpha"),
    ("--delta", "delta"),
]


def cmd_grad_check(args) -> int:
    names = ",".join(LOSS_NAMES) if args.loss.strip().lower() == "all" else args.loss
    specs = _specs(names, args)
    pairs = audit.random_pairs(args.cases, args.seed, disjoint_only=args.disjoint_only)
    rows, failed = [], False
    for spec in specs:
        res = audit.check_gradients(spec, pairs, step=args.step)
        expect_zero = args.disjoint_only and spec.base is Base.IOU
        if not res.passed(args.tolerance):
            status = "FAIL"
        elif res.all_zero:
            status = "vanishing (expected)" if expect_zero else "FAIL (all-zero gradients)"
        else:
            status = "FAIL (expected vanishing)" if expect_zero else "pass"
        failed |= status.startswith("FAIL")
        rows.append((spec.name, res.cases, io.fmt(res.max_error), io.fmt(res.max_abs_grad), status))
        print(f"{spec.name:<14} max rel err {res.max_error:.3e}  max |grad| {res.max_abs_grad:.3e}  {status}")
    out = io.write_gradcheck(args.out, rows)
    manifest = _manifest(args, _canonical_argv(args, GC_FLAGS), [out], out.parent)
    io.write_manifest(out.with_suffix(".manifest.json"), manifest)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_gain_curve(args) -> int:
    if args.steps < 2:
        raise UsageError("--steps must be at least 2")
    pairs = list(focusing.GAIN_PRESETS) if args.preset else [(args.alpha, args.delta)]
    out: Path = args.out
    artifacts = []
    for alpha, delta in pairs:
        rows = focusing.gain_curve(alpha, delta, args.beta_max, args.steps)
        path = out / f"gain_alpha{alpha:g}_delta{delta:g}.csv"
        artifacts.append(io.write_gain_curve(path, rows))
        peak = max(rows, key=lambda row: row[1])
        print(
            f"alpha={alpha:g} delta={delta:g}: peak r={peak[1]:.6f} at beta={peak[0]:.6f} "
            f"(1/ln alpha = {focusing.peak_outlier_degree(alpha):.6f}); r(delta) = {focusing.gain(delta, alpha, delta):g}"
        )
    flags = [("--alpha", "alpha"), ("--delta", "delta"), ("--beta-max", "beta_max"), ("--steps", "steps"), ("--preset", "preset")]
    args.seed = None
    io.write_manifest(out / "manifest.json", _manifest(args, _canonical_argv(args, flags), artifacts, out))
    return EXIT_OK


def cmd_rerun(args) -> int:
    try:
        manifest = io.read_manifest(args.manifest)
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
    argv += ["--out", str(args.out)]
    if manifest.get("command") == "grad-check":
        argv[-1] = str(args.out / "grad_check.csv")
    if manifest.get("command") == "simulate" and "backend" in manifest:
        argv += ["--backend", manifest["backend"]]
    return main(argv)


COMMANDS = {
    "simulate": cmd_simulate,
    "grad-check": cmd_grad_check,
    "gain-curve": cmd_gain_curve,
    "rerun": cmd_rerun,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if getattr(args, "seed", 0) is None and args.command in ("simulate", "grad-check"):
            args.seed = _default_seed()
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wiou-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
