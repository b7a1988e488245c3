"""Command-line interface.

Exit status: 0 on success, 1 on usage or validation errors, 2 when a
verification check fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import exact, harness, interchange, io, spectral
from .interchange import InterchangeState
from .model import Configuration, ModelParams

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    g.add_argument("--config", type=Path, default=None, help="JSON experiment config")
    g.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
    g.add_argument("--format", choices=["csv", "json"], default=None)

    model = _Parser(add_help=False)
    m = model.add_argument_group("model")
    m.add_argument("--n", type=int, default=None, help="number of sites N")
    m.add_argument("--p", type=float, default=None, help="left reservoir density")
    m.add_argument("--q", type=float, default=None, help="right reservoir density")
    m.add_argument("--no-accelerate", action="store_true", help="unit rates instead of N^2")

    parser = _Parser(prog="ssep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("exact", parents=[common, model], help="exact d(t) curve and mixing times")
    p.add_argument("--times", type=_floats, default=None, help="time grid (default t* + {-3..3})")
    p.add_argument("--eps", type=_floats, default=[0.25], help="mixing-time levels")

    p = sub.add_parser("simulate", parents=[common, model], help="Monte-Carlo samples and trajectories")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--start", default=None, help="initial configuration, e.g. 1101 (default all ones)")
    p.add_argument("--method", choices=["ssep", "coupled", "interchange"], default="ssep",
                   help="direct simulation, pushforward coupling, or one interchange trajectory")

    p = sub.add_parser("tstar", parents=[common], help="t* table")
    p.add_argument("--n", type=_ints, required=True, help="one or more N")
    p.add_argument("--p", type=_floats, required=True, help="one or more p")

    p = sub.add_parser("profile", parents=[common, model], help="cutoff profile around t*")
    p.add_argument("--mode", choices=["exact", "simulate"], default=None)
    p.add_argument("--times", type=_floats, default=None)
    p.add_argument("--alphas", type=_floats, default=None, help="offsets around t*")
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)

    p = sub.add_parser("verify", parents=[common, model], help="ND or lemma verification suites")
    p.add_argument("suite", choices=["nd", "lemma"])
    p.add_argument("--budget", type=int, default=None, help="Monte-Carlo budget per check")
    p.add_argument("--times", type=_floats, default=None, help="t-grid for exact ND checks")
    p.add_argument("--nd-mode", choices=["exact", "conditional", "both"], default="exact")

    p = sub.add_parser("skeleton", parents=[common, model], help="sample or replay a green skeleton")
    p.add_argument("action", choices=["sample", "replay"])
    p.add_argument("--t", type=float, default=None, help="skeleton horizon (sample)")
    p.add_argument("--colors", default=None, help="initial colors, e.g. RRBG (default all red)")
    p.add_argument("--skeleton", type=Path, default=None, help="skeleton JSON (replay)")
    return parser


def _resolve(args) -> harness.ExperimentConfig | None:
    """Fill unset flags from --config and fixed defaults."""
    cfg = None
    if args.config is not None:
        cfg = harness.ExperimentConfig.from_json(args.config)
        model = cfg.model
        for name, value in (("n", model.n_sites), ("p", model.p), ("q", model.q)):
            if getattr(args, name, None) is None and hasattr(args, name):
                setattr(args, name, value)
        if hasattr(args, "no_accelerate") and not args.no_accelerate:
            args.no_accelerate = not model.accelerate
        for name in ("replicas", "epsilon", "mode", "times", "alphas"):
            if hasattr(args, name) and getattr(args, name) is None:
                setattr(args, name, getattr(cfg, name))
        if args.seed is None:
            args.seed = cfg.seed
        if args.format is None:
            args.format = cfg.format
        if args.out is None and cfg.output:
            args.out = Path(cfg.output)
    if args.seed is None:
        args.seed = 0
    if args.format is None:
        args.format = "csv"
    return cfg


def _params(args) -> ModelParams:
    if args.n is None:
        raise ValueError("missing required option --n")
    p = 0.5 if args.p is None else args.p
    q = p if args.q is None else args.q
    return ModelParams(args.n, p, q, accelerate=not args.no_accelerate)


def _emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)


def _cmd_exact(args) -> int:
    params = _params(args)
    gen = exact.build_generator(params)
    if args.times is None:
        cfg = harness.ExperimentConfig(params, mode="exact")
        times = cfg.time_grid()
    else:
        times = args.times
    curve = exact.distance_curve(gen, times)
    meta = {"seed": args.seed, "N": params.n_sites, "p": params.p, "q": params.q,
            "t_mix": {str(e): exact.mixing_time(gen, e) for e in args.eps}}
    rows = [(float(t), float(d), str(c)) for t, d, c in zip(curve.times, curve.distances, curve.argmax)]
    _emit(args, io.render(["t", "d", "argmax_config"], rows, args.format, meta))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    params = _params(args)
    start = Configuration.full(params.n_sites) if args.start is None else Configuration.from_string(args.start)
    if args.method == "interchange":
        colors = tuple("R" * params.n_sites)
        res = interchange.simulate_interchange(InterchangeState(tuple(range(1, params.n_sites + 1)), colors),
                                               params, args.t, args.seed)
        rows = list(res.trajectory_rows())
        meta = {"seed": args.seed, "crossings_final": res.crossings_final}
        _emit(args, io.render(["time", "R", "B", "G", "L"], rows, args.format, meta))
        return EXIT_OK
    replicas = args.replicas or 10_000
    if args.method == "ssep":
        samples = interchange.sample_ssep(start, params, args.t, replicas, args.seed)
    else:
        samples = interchange.sample_pushforward(start, params, args.t, replicas, args.seed)
    freq = interchange.empirical_law(samples)
    counts = np.rint(freq * replicas).astype(int)
    rows = [(str(Configuration.from_index(s, params.n_sites)), int(counts[s]), float(freq[s]))
            for s in range(freq.size) if counts[s] > 0]
    meta = {"seed": args.seed, "replicas": replicas, "method": args.method, "t": args.t, "start": str(start)}
    _emit(args, io.render(["config", "count", "frequency"], rows, args.format, meta))
    return EXIT_OK


def _cmd_tstar(args) -> int:
    cols = ["N", "p", "t_star", "t_star_asymptotic", "gap"]
    rows = []
    for n in args.n:
        for p in args.p:
            r = spectral.t_star_row(n, p)
            rows.append([r[c] for c in cols])
    _emit(args, io.render(cols, rows, args.format, {}))
    return EXIT_OK


def _cmd_profile(args) -> int:
    params = _params(args)
    kw = {"model": params, "seed": args.seed, "format": args.format}
    for name in ("mode", "times", "alphas", "replicas", "epsilon"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    cfg = harness.ExperimentConfig(**kw)
    points, meta = harness.cutoff_profile(cfg)
    cols = ["t", "d_exact", "wilson_lower", "mean_S", "var_S", "ci_halfwidth"]
    rows = [[getattr(pt, c) for c in cols] for pt in points]
    _emit(args, io.render(cols, rows, args.format, meta))
    return EXIT_OK


def _cmd_verify(args) -> int:
    params = _params(args)
    if args.suite == "nd":
        times = args.times or list(np.linspace(0.0, 1.0, 10))
        report = harness.verify_nd_suite(params, times, mode=args.nd_mode, budget=args.budget or 100_000,
                                         seed=args.seed)
    else:
        report = harness.verify_lemma_suite(params, budget=args.budget or 10_000, seed=args.seed)
    if args.format == "json":
        _emit(args, io.dumps_report(report.to_dict()))
    else:
        rows = [(c.name, c.passed, json.dumps(io._jsonable(c.details), sort_keys=True)) for c in report.checks]
        _emit(args, io.to_csv(["check", "passed", "details"], rows))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _start_state(n: int, colors: str | None) -> InterchangeState:
    colors = colors or "R" * n
    if len(colors) != n:
        raise ValueError(f"--colors must have {n} letters")
    return InterchangeState(tuple(range(1, n + 1)), tuple(colors.upper()))


def _cmd_skeleton(args) -> int:
    if args.action == "sample":
        params = _params(args)
        if args.t is None:
            raise ValueError("skeleton sample needs --t")
        x0 = _start_state(params.n_sites, args.colors)
        skel = interchange.sample_green_skeleton(params, args.t, args.seed, green0=x0)
        _emit(args, skel.to_json() + "\n")
        return EXIT_OK
    if args.skeleton is None:
        raise ValueError("skeleton replay needs --skeleton")
    skel = interchange.GreenSkeleton.load(args.skeleton)
    x0 = _start_state(skel.params.n_sites, args.colors)
    res = interchange.resample_given_skeleton(x0, skel, args.seed)
    meta = {"seed": args.seed, "crossings_final": res.crossings_final}
    _emit(args, io.render(["time", "R", "B", "G", "L"], list(res.trajectory_rows()), args.format, meta))
    return EXIT_OK


_COMMANDS = {
    "exact": _cmd_exact, "simulate": _cmd_simulate, "tstar": _cmd_tstar,
    "profile": _cmd_profile, "verify": _cmd_verify, "skeleton": _cmd_skeleton,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _resolve(args)
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"ssep {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
