"""Command-line front end.

Exit codes: 0 verdict/success, 1 usage or I/O error, 2 inconclusive
classification, 3 partial results (simulation overflow).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import liminf_estimate, run_experiment, run_growth, write_json
from .classifier import classify, classify_numeric, classify_symbolic, ProfileNotCertified
from .growth import growth_condition
from .laws import LawSpecError, parse_law
from .quadrature import DEFAULT_PANEL_BUDGET, DEFAULT_REL_TOL
from .simulator import DEFAULT_MAX_EVENTS, QueueConfig, SimulationOverflow, occupation, simulate

OUT_ENV = "MGINF_OUT"
EXIT_OK, EXIT_USAGE, EXIT_INCONCLUSIVE, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(raw: str) -> float:
    x = float(raw)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {raw}")
    return x


def _seed(raw: str) -> int:
    x = int(raw)
    if not 0 <= x < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return x


def _horizon_list(raw: str) -> list[float]:
    try:
        vals = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {raw!r}") from None
    if len(vals) < 3 or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("need at least three positive horizons")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mginf", description=(
        "Transience/recurrence of M/G/inf queue states and exact simulation checks."))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, sim=True):
        p.add_argument("--law", required=True,
                       help='service law, e.g. "strange(b=2.5)", "pareto(alpha=1.0,scale=1.0)", '
                            '"exp(mean=1.0)", "det(value=1.0)"')
        p.add_argument("--lambda", dest="lam", type=_positive_float, required=True,
                       help="arrival rate")
        p.add_argument("--rel-tol", type=_positive_float, default=DEFAULT_REL_TOL,
                       help="relative tolerance for quadrature (default %(default)g)")
        p.add_argument("--panel-budget", type=int, default=DEFAULT_PANEL_BUDGET,
                       help="integrand evaluations allowed per integral (default %(default)d)")
        if sim:
            p.add_argument("--seed", type=_seed, default=0, help="base seed (default 0)")
            p.add_argument("--out", default=None,
                           help=f"output directory (default ${OUT_ENV} or ./mginf-out)")
            p.add_argument("--max-events", type=int, default=DEFAULT_MAX_EVENTS,
                           help="per-replica event cap (default %(default)d)")
            p.add_argument("--workers", type=int, default=1,
                           help="threads for replicas; outputs do not depend on it")
            p.add_argument("--plot", action="store_true", help="also write PNG figures")

    p = sub.add_parser("classify", help="compute k0 and the regime")
    common(p, sim=False)
    p.add_argument("--numeric", action="store_true",
                   help="use the numeric partial-integral diagnostic")
    p.add_argument("--k-max", type=int, default=8, help="largest state examined (default 8)")

    p = sub.add_parser("simulate", help="one trajectory with its occupation record")
    common(p)
    p.add_argument("--horizon", type=_positive_float, required=True, help="simulated time T")
    p.add_argument("--k-max", type=int, default=8, help="largest state tabulated (default 8)")

    p = sub.add_parser("occupancy", help="Monte Carlo occupation times vs quadrature")
    common(p)
    p.add_argument("--horizon", type=_positive_float, required=True, help="simulated time T")
    p.add_argument("--replicas", type=int, default=1000, help="number of seeded replicas (default 1000)")
    p.add_argument("--k-max", type=int, default=8, help="largest state tabulated (default 8)")

    p = sub.add_parser("growth", help="measure of H_q against the Chernoff integral")
    common(p)
    p.add_argument("--horizon", type=_positive_float, required=True, help="simulated time T")
    p.add_argument("--replicas", type=int, default=500, help="number of seeded replicas (default 500)")
    p.add_argument("--q", type=float, default=0.5, help="fraction in (0, 1) (default 0.5)")
    p.add_argument("--t-min", type=float, default=None, help="start of window (default T/10)")

    p = sub.add_parser("liminf", help="late-window minima over several horizons vs k0")
    common(p)
    p.add_argument("--horizons", type=_horizon_list, required=True,
                   help="comma-separated, geometrically spaced, at least three")
    p.add_argument("--replicas", type=int, default=500, help="number of seeded replicas (default 500)")
    p.add_argument("--k-max", type=int, default=8, help="largest state tabulated (default 8)")

    p = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("--out", default=None, help="output directory (default: manifest's own)")
    return parser


# Flags recorded in manifests, in argv form.
_MANIFEST_FLAGS = {
    "law": "--law", "lam": "--lambda", "rel_tol": "--rel-tol", "panel_budget": "--panel-budget",
    "seed": "--seed", "max_events": "--max-events", "horizon": "--horizon",
    "replicas": "--replicas", "k_max": "--k-max", "q": "--q", "t_min": "--t-min",
    "horizons": "--horizons",
}
_MANIFEST_SWITCHES = {"numeric": "--numeric", "plot": "--plot"}


def manifest_for(args) -> dict:
    m = {"tool": "mginf", "version": __version__, "subcommand": args.command}
    for key in _MANIFEST_FLAGS:
        if hasattr(args, key):
            m[key] = getattr(args, key)
    for key in _MANIFEST_SWITCHES:
        if hasattr(args, key):
            m[key] = getattr(args, key)
    return m


def argv_from_manifest(manifest: dict, out: str | None) -> list[str]:
    argv = [manifest["subcommand"]]
    for key, flag in _MANIFEST_FLAGS.items():
        val = manifest.get(key)
        if val is None:
            continue
        if key == "horizons":
            val = ",".join(repr(float(v)) for v in val)
        argv += [flag, repr(val) if isinstance(val, float) else str(val)]
    for key, flag in _MANIFEST_SWITCHES.items():
        if manifest.get(key):
            argv.append(flag)
    if out is not None and manifest["subcommand"] != "classify":
        argv += ["--out", out]
    return argv


def _out_dir(args) -> Path:
    raw = args.out or os.environ.get(OUT_ENV) or "mginf-out"
    path = Path(raw)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {raw!r} is not writable: {exc}") from None
    return path


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _config(args, horizon: float) -> QueueConfig:
    law = parse_law(args.law)
    return QueueConfig(args.lam, law, horizon, args.seed, args.max_events)


def cmd_classify(args) -> int:
    law = parse_law(args.law)
    opts = dict(rel_tol=args.rel_tol, panel_budget=args.panel_budget)
    try:
        if args.numeric:
            result = classify_numeric(law, args.lam, args.k_max, **opts)
        else:
            result = classify(law, args.lam, args.k_max, **opts)
    except ProfileNotCertified as exc:
        payload = {"lambda": args.lam, "law": law.name, "method": "symbolic-profile",
                   "k0": None, "regime": None, "verdicts": [], "warnings": [str(exc)]}
        print(json.dumps(payload, indent=2, sort_keys=True))
        return EXIT_INCONCLUSIVE
    payload = result.to_dict()
    payload["manifest"] = manifest_for(args)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_INCONCLUSIVE if result.inconclusive else EXIT_OK


def cmd_simulate(args) -> int:
    config = _config(args, args.horizon)
    out = _out_dir(args)
    write_json(manifest_for(args), out / "manifest.json")
    try:
        traj = simulate(config)
    except SimulationOverflow as exc:
        print(f"mginf: simulation overflow: {exc}; no trajectory written", file=sys.stderr)
        return EXIT_PARTIAL
    _write(out / "trajectory.csv", traj.to_csv())
    _write(out / "occupation.csv", occupation(traj, args.k_max).to_csv())
    if args.plot:
        from .plotting import plot_trajectory
        plot_trajectory(traj, config.law, config.lam, out / "trajectory.png")
    return EXIT_OK


def cmd_occupancy(args) -> int:
    config = _config(args, args.horizon)
    out = _out_dir(args)
    write_json(manifest_for(args), out / "manifest.json")
    summary = run_experiment(config, args.replicas, args.k_max, args.workers, args.rel_tol)
    _write(out / "occupancy.csv", summary.to_csv())
    write_json(summary.to_dict(), out / "occupancy.json")
    if args.plot:
        from .plotting import plot_occupancy
        plot_occupancy(summary, out / "occupancy.png")
    if summary.failed:
        print(f"mginf: {summary.failed} replica(s) overflowed; results are partial", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_growth(args) -> int:
    if not 0 < args.q < 1:
        raise UsageError("--q must lie in (0, 1)")
    config = _config(args, args.horizon)
    out = _out_dir(args)
    write_json(manifest_for(args), out / "manifest.json")
    summary = run_growth(config, args.replicas, args.q, args.t_min, args.workers, args.rel_tol)
    cond = growth_condition(config.law, config.lam, args.q, args.rel_tol)
    payload = summary.to_dict()
    payload["condition_integral"] = {"value": cond.value, "status": cond.status}
    write_json(payload, out / "growth.json")
    if args.plot:
        from .plotting import plot_growth, plot_trajectory
        plot_growth(summary, out / "growth.png")
        first = simulate(config)
        plot_trajectory(first, config.law, config.lam, out / "growth_path.png", q=args.q)
    if summary.failed:
        print(f"mginf: {summary.failed} replica(s) overflowed; results are partial", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_liminf(args) -> int:
    law = parse_law(args.law)
    out = _out_dir(args)
    write_json(manifest_for(args), out / "manifest.json")
    try:
        cls = classify_symbolic(law.profile, args.lam) if law.profile else None
    except ProfileNotCertified:
        cls = None
    if cls is None:
        cls = classify_numeric(law, args.lam, args.k_max, args.rel_tol, args.panel_budget)
    summaries = [
        run_experiment(QueueConfig(args.lam, law, T, args.seed, args.max_events), args.replicas,
                       args.k_max, args.workers, args.rel_tol)
        for T in args.horizons
    ]
    report = liminf_estimate(summaries, cls)
    payload = report.to_dict()
    payload["late_min_histograms"] = {
        repr(s.horizon): {str(k): v for k, v in s.late_min_histogram.items()} for s in summaries}
    write_json(payload, out / "liminf.json")
    if args.plot:
        from .plotting import plot_liminf
        plot_liminf(summaries, out / "liminf.png")
    if any(s.failed for s in summaries):
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_rerun(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from None
    out = args.out if args.out is not None else str(path.parent)
    return main(argv_from_manifest(manifest, out))


COMMANDS = {
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "occupancy": cmd_occupancy,
    "growth": cmd_growth,
    "liminf": cmd_liminf,
    "rerun": cmd_rerun,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("replicas",):
        if getattr(args, name, 2) < 2:
            print("mginf: error: --replicas must be >= 2", file=sys.stderr)
            return EXIT_USAGE
    if getattr(args, "k_max", 0) < 0:
        print("mginf: error: --k-max must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except LawSpecError as exc:
        print(f"mginf: error: bad --law: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"mginf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
