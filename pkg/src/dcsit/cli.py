"""Command-line front end: config loading, engine dispatch, CSV/JSON reports.

Reports are deterministic by contract: the same config and seed reproduce
byte-identical output files. No timestamps, metadata keys sorted, floats
written with a fixed format. Figures (PNG, same stem as the output file) are
rendered by default; pass --no-plot to skip them.

Exit codes: 0 success, 2 config error, 3 convergence-flagged results,
4 counterexample contract failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, ba, channel, linalg, plots, precoding, psdopt, region, validate
from .errors import ConfigError, DcsitError, DomainError

LN2 = float(np.log(2.0))

DEFAULT_SEED = 0xC0FFEE

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FLAGGED = 3
EXIT_CONTRACT = 4


# ---------------------------------------------------------------------------
# config / report plumbing


def _load_config(path: str | None, defaults: dict) -> dict:
    """Defaults overlaid with the JSON file at `path`; unknown keys rejected."""
    cfg = dict(defaults)
    if path is None:
        return cfg
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg.update(raw)
    return cfg


def _metadata(command: str, cfg: dict, args, tol: float) -> dict:
    return {
        "command": command,
        "config": cfg,
        "rng": channel.RNG_NAME,
        "seed": args.seed,
        "threads": args.threads,
        "tol": tol,
        "tool": "dcsit",
        "version": __version__,
    }


def _fmt(v):
    if isinstance(v, float):
        return format(v + 0.0, ".12g")  # +0.0 folds -0.0 into 0
    return v


def _write_csv(path: Path, meta: dict, header: list[str], rows: list[list]) -> None:
    lines = ["# " + json.dumps(meta, sort_keys=True, separators=(",", ":"))]
    lines.append(",".join(header))
    lines.extend(",".join(str(_fmt(v)) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _pmap(fn, items, threads: int) -> list:
    """Map preserving input order; thread pool only when threads > 1."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _resolve(args, default_tol: float, default_out: str) -> tuple[float, Path]:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    tol = args.tol if args.tol is not None else default_tol
    if not tol > 0:
        raise ConfigError("--tol must be positive")
    return tol, Path(args.out) if args.out else Path(default_out)


# ---------------------------------------------------------------------------
# subcommands


def cmd_discrete(args) -> int:
    cfg = _load_config(args.config, {
        "q": 0.5,
        "eps1": [0.0, 0.1, 0.3, 0.5],
        "eps2": [k / 20 for k in range(11)],
        "channel_file": None,
    })
    tol, out = _resolve(args, 1e-9, "discrete.csv")
    meta = _metadata("discrete", cfg, args, tol)
    header = ["eps1", "eps2", "q", "capacity_bits", "ba_gap", "iterations"]

    if cfg["channel_file"] is not None:
        mac = channel.load_channel(cfg["channel_file"])
        if not isinstance(mac, channel.DiscreteMAC):
            raise ConfigError("channel_file must hold a discrete channel")
        res = ba.discrete_common_capacity(mac, tol=tol)
        # eps/q columns do not apply to an arbitrary channel file
        _write_csv(out, meta, header,
                   [["", "", "", res.capacity_bits, res.gap, res.iterations]])
        print(f"wrote 1 row to {out}")
        return EXIT_OK if res.converged else EXIT_FLAGGED

    q = float(cfg["q"])
    grid = [(float(e1), float(e2)) for e1 in cfg["eps1"] for e2 in cfg["eps2"]]

    def solve(pt):
        mac = channel.binary_additive_mac(q, pt[0], pt[1])
        return ba.discrete_common_capacity(mac, tol=tol)

    results = _pmap(solve, grid, args.threads)
    rows = [[e1, e2, q, r.capacity_bits, r.gap, r.iterations]
            for (e1, e2), r in zip(grid, results)]
    _write_csv(out, meta, header, rows)
    if not args.no_plot:
        pts = [{"eps1": e1, "eps2": e2, "capacity_bits": r.capacity_bits}
               for (e1, e2), r in zip(grid, results)]
        plots.discrete_sweep(pts, str(out.with_suffix(".png")))
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK if all(r.converged for r in results) else EXIT_FLAGGED


def _build_ensemble(cfg: dict, seed: int) -> channel.FadingEnsemble:
    cb1 = channel.generate_quantizer(int(cfg["beta1"]), int(cfg["M"]), seed)
    cb2 = channel.generate_quantizer(int(cfg["beta2"]), int(cfg["M"]), seed + 1)
    return channel.sample_ensemble(int(cfg["L"]), int(cfg["M"]), cb1, cb2, rng_seed=seed + 2)


def _scaled(x, factor: float):
    return None if x is None else [m * factor for m in x]


def cmd_mimo(args) -> int:
    cfg = _load_config(args.config, {
        "beta1": 4,
        "beta2": 3,
        "L": 1000,
        "M": 2,
        "snr_db": [-10, -5, 0, 5, 10, 15, 20],
    })
    tol, out = _resolve(args, 1e-8, "mimo.csv")
    ens = _build_ensemble(cfg, args.seed)
    snrs = [float(s) for s in cfg["snr_db"]]
    opts = psdopt.SolveOptions(tol=tol)

    if args.threads > 1:
        def one(snr):
            p = 10.0 ** (snr / 10.0)
            return (precoding.common_message_capacity(ens, p, p, opts=opts),
                    region.perfect_csit_capacity(ens, p, p, opts=opts, full=True),
                    region.no_csit_capacity(ens, p, p, opts=opts, full=True))
        reports = _pmap(one, snrs, args.threads)
    else:
        # sequential pass reuses the previous solution, rescaled to the new
        # power, as a feasible warm start
        reports = []
        xd = xp = xn = None
        prev = None
        for snr in snrs:
            p = 10.0 ** (snr / 10.0)
            f = 1.0 if prev is None else p / prev
            d = precoding.common_message_capacity(
                ens, p, p, opts=opts, x0=None if xd is None else xd[0] * f)
            pf = region.perfect_csit_capacity(ens, p, p, opts=opts, x0=_scaled(xp, f), full=True)
            nc = region.no_csit_capacity(ens, p, p, opts=opts, x0=_scaled(xn, f), full=True)
            xd, xp, xn, prev = d.solution, pf.solution, nc.solution, p
            reports.append((d, pf, nc))

    rows = [[snr, d.objective_nats / LN2, pf.objective_nats / LN2, nc.objective_nats / LN2]
            for snr, (d, pf, nc) in zip(snrs, reports)]
    header = ["snr_db", "c_distributed", "c_perfect", "c_nocsit"]
    _write_csv(out, _metadata("mimo", cfg, args, tol), header, rows)
    if not args.no_plot:
        pts = [dict(zip(header, row)) for row in rows]
        plots.mimo_curves(pts, str(out.with_suffix(".png")))
    print(f"wrote {len(rows)} rows to {out}")
    ok = all(d.converged and pf.converged and nc.converged for d, pf, nc in reports)
    return EXIT_OK if ok else EXIT_FLAGGED


def cmd_counterexample(args) -> int:
    cfg = _load_config(args.config, {
        "nu_star": 2.0,
        "restarts": 100,
        "d_prime": 2,
    })
    tol, out = _resolve(args, 1e-8, "counterexample.json")
    ens, sigma_star = precoding.build_counterexample(float(cfg["nu_star"]))
    opts = psdopt.SolveOptions(tol=tol)

    rep = precoding.common_message_capacity(ens, 1.0, 1.0, opts=opts)
    q = rep.solution[0]
    pre = precoding.extract_precoders(q, ens, power=(1.0, 1.0))
    err = float(np.abs(precoding.reconstruct_covariance(pre) - sigma_star).max())
    red = precoding.rank_reduce(q, ens.ns1)
    rate_nats, _ = precoding.rank_constrained_search(
        ens, 1.0, 1.0, int(cfg["d_prime"]),
        restarts=int(cfg["restarts"]), seed=args.seed)

    report = {
        "objective": rep.objective_nats / LN2,
        "sigma_star_error": err,
        "rank_full": linalg.numerical_rank(q),
        "rank_reduced": red.rank_after,
        "rate_d2": rate_nats / LN2,
        "gap": (rep.objective_nats - rate_nats) / LN2,
    }
    meta = _metadata("counterexample", cfg, args, tol)
    out.write_text(json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n"
                   + json.dumps(report, sort_keys=True) + "\n")
    print(f"wrote report to {out}")
    for k, v in report.items():
        print(f"  {k}: {_fmt(v)}")
    if err > 1e-3 or report["gap"] <= 0:
        return EXIT_CONTRACT
    return EXIT_OK if rep.converged else EXIT_FLAGGED


def cmd_region(args) -> int:
    cfg = _load_config(args.config, {
        "beta1": 4,
        "beta2": 3,
        "L": 1000,
        "M": 2,
        "channel_file": None,
        "p1": None,
        "p2": None,
        "snr_db": 10.0,
        "weights": None,
        "n_weights": 33,
    })
    tol, out = _resolve(args, 1e-8, "region.csv")
    if cfg["channel_file"] is not None:
        ens = channel.load_channel(cfg["channel_file"])
        if not isinstance(ens, channel.FadingEnsemble):
            raise ConfigError("channel_file must hold a fading ensemble")
    else:
        ens = _build_ensemble(cfg, args.seed)
    p_snr = 10.0 ** (float(cfg["snr_db"]) / 10.0)
    p1 = float(cfg["p1"]) if cfg["p1"] is not None else p_snr
    p2 = float(cfg["p2"]) if cfg["p2"] is not None else p_snr
    if cfg["weights"] is not None:
        grid = [tuple(float(a) for a in w) for w in cfg["weights"]]
        if any(len(w) != 3 for w in grid):
            raise ConfigError("weights must be triples")
    else:
        grid = region.default_weight_grid(int(cfg["n_weights"]))
    opts = region.RegionOptions(polish_tol=tol)

    sols = _pmap(lambda a: region.weighted_sum_rate(ens, p1, p2, a, opts=opts),
                 grid, args.threads)
    rows = []
    for a, s in zip(grid, sols):
        b1, b2, b12, b012 = s.bounds_bits
        rows.append([a[0], a[1], a[2], s.rates.r0, s.rates.r1, s.rates.r2,
                     b1, b2, b12, b012, int(s.converged)])
    header = ["alpha0", "alpha1", "alpha2", "R0_bits", "R1_bits", "R2_bits",
              "b1", "b2", "b12", "b012", "converged"]
    _write_csv(out, _metadata("region", cfg, args, tol), header, rows)
    if not args.no_plot:
        pts = [dict(zip(header, row)) for row in rows]
        plots.region_boundary(pts, str(out.with_suffix(".png")))
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK if all(s.converged for s in sols) else EXIT_FLAGGED


def cmd_validate(args) -> int:
    tol = args.tol if args.tol is not None else 1e-9
    checks = validate.run_all(seed=args.seed, tol=tol)
    width = max(len(name) for name, _, _ in checks)
    for name, ok, detail in checks:
        print(f"{'ok' if ok else 'FAIL':4s} {name:{width}s} {detail}")
    failed = sum(not ok for _, ok, _ in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    if args.out:
        meta = _metadata("validate", {}, args, tol)
        rows = [[name, int(ok), detail] for name, ok, detail in checks]
        _write_csv(Path(args.out), meta, ["check", "ok", "detail"], rows)
    return EXIT_FLAGGED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcsit",
        description="Capacities of two-TX channels with distributed causal CSIT",
    )
    parser.add_argument("--version", action="version", version=f"dcsit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = [
        ("discrete", "binary adder capacity sweep via Shannon strategies + BA", cmd_discrete),
        ("mimo", "fading capacity vs SNR: distributed / perfect / no CSIT", cmd_mimo),
        ("counterexample", "two-stream suboptimality certificate", cmd_counterexample),
        ("region", "rate-region boundary over a weight grid", cmd_region),
        ("validate", "run the built-in invariant suites", cmd_validate),
    ]
    for name, help_text, fn in handlers:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", metavar="PATH", default=None,
                        help="JSON config file (defaults used when omitted)")
        sp.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED,
                        help="PRNG seed (default 0xC0FFEE)")
        sp.add_argument("--out", metavar="PATH", default=None,
                        help="output file (default per command)")
        sp.add_argument("--tol", type=float, default=None,
                        help="solver tolerance (engine default when omitted)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent grid points")
        sp.add_argument("--no-plot", action="store_true",
                        help="skip PNG rendering next to the output file")
        sp.set_defaults(handler=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DcsitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGGED


if __name__ == "__main__":
    sys.exit(main())
