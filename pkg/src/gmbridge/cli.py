"""Command-line entry point: config parsing, experiment orchestration, CSV/JSON artifacts.

One JSON config drives every subcommand:

    {
      "distribution": {"values": [1,2,3], "probs": [0.55,0.35,0.10]},
      "market": {"deltas": [0.4,0.2,0.1,0.05], "endEpsilon": 1e-4, "maxEvents": 1000000},
      "mc": {"paths": 10000, "seed": 20260823, "workers": 1},
      "outputs": {"dir": "out", "timestamp": true}
    }

All sections are optional; the defaults above apply.  CSV files always carry
a header row, floats with 17 significant digits, and (unless suppressed) a
leading ``# generated <utc time>`` comment line.  Failures print a one-line
machine-readable JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys

import numpy as np

from .convergence import (
    loss_convergence,
    occupation_convergence,
    occupation_until,
    strategy_convergence,
)
from .kernel import PricingKernel
from .kyle import brownian_local_time_mean, simulate_kyle_batch
from .profit import (
    L_estimate,
    US_gap,
    U_of,
    ell_for_record,
    loss_bound,
    mean_se,
    realized_stats,
)
from .quantizer import (
    INF_IDX,
    AssetDistribution,
    QuantizationError,
    gaussian_boundaries,
    quantize,
)
from .simulate import MarketParams, RngPolicy, SimulationError, generate_paths

__all__ = ["main", "load_config", "ConfigError"]

_FMT = "%.17g"

DEFAULT_CONFIG = {
    "distribution": {"values": [1.0, 2.0, 3.0], "probs": [0.55, 0.35, 0.10]},
    "market": {"deltas": [0.4, 0.2, 0.1, 0.05], "endEpsilon": 1e-4, "maxEvents": 10**6},
    "mc": {"paths": 10000, "seed": 20260823, "workers": 1},
    "outputs": {"dir": "out", "timestamp": True},
}


class ConfigError(ValueError):
    """Raised when the config file violates the documented schema."""


def load_config(path: str | None) -> dict:
    cfg = {k: dict(v) for k, v in DEFAULT_CONFIG.items()}
    if path is not None:
        try:
            with open(path) as f:
                user = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        for section, values in user.items():
            if section not in cfg:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"config section {section!r} must be an object")
            for key, val in values.items():
                if key not in cfg[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                cfg[section][key] = val
    try:
        AssetDistribution(
            tuple(cfg["distribution"]["values"]), tuple(cfg["distribution"]["probs"])
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid distribution: {exc}") from exc
    deltas = cfg["market"]["deltas"]
    if not deltas or any(not (0.0 < float(d)) for d in deltas):
        raise ConfigError("market.deltas must be a nonempty list of positive reals")
    if not 0.0 < float(cfg["market"]["endEpsilon"]) <= 0.01:
        raise ConfigError("market.endEpsilon must lie in (0, 0.01]")
    if int(cfg["mc"]["paths"]) < 1:
        raise ConfigError("mc.paths must be positive")
    if not 0 <= int(cfg["mc"]["seed"]) < 2**64:
        raise ConfigError("mc.seed must be an unsigned 64-bit integer")
    return cfg


def _dist(cfg) -> AssetDistribution:
    d = cfg["distribution"]
    return AssetDistribution(tuple(d["values"]), tuple(d["probs"]))


def _workers(cfg) -> int:
    env = os.environ.get("GM_BRIDGE_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(cfg["mc"]["workers"]))


def _fmt(x) -> str:
    if isinstance(x, float):
        return _FMT % x
    return str(x)


def _write_csv(path, header, rows, timestamp: bool):
    with open(path, "w") as f:
        if timestamp:
            stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
            f.write(f"# generated {stamp}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[h]) for h in header) + "\n")


def _params(cfg, delta, dist, seed_offset: int = 0) -> MarketParams:
    kernel = PricingKernel(quantize(dist, float(delta)), dist.values)
    return MarketParams(
        kernel=kernel,
        rng=RngPolicy(int(cfg["mc"]["seed"]) + seed_offset),
        end_epsilon=float(cfg["market"]["endEpsilon"]),
        max_events=int(cfg["market"]["maxEvents"]),
    )


def _check_runaways(records):
    bad = sum(1 for r in records if r.runaway or r.terminal_miss)
    rate = bad / max(1, len(records))
    if rate > 0.01:
        raise SimulationError(
            f"runaway/miss rate {rate:.4f} exceeds 1% ({bad}/{len(records)} paths)"
        )
    return rate


def _cmd_quantize(cfg, out_dir, args):
    dist = _dist(cfg)
    payload = {}
    for delta in cfg["market"]["deltas"]:
        payload[_FMT % float(delta)] = quantize(dist, float(delta)).to_dict()
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_price(cfg, out_dir, args):
    dist = _dist(cfg)
    rows = []
    for delta in cfg["market"]["deltas"]:
        kernel = PricingKernel(quantize(dist, float(delta)), dist.values)
        q = kernel.quant
        finite = [b for b in q.boundary_indices if abs(b) < INF_IDX]
        k_lo = (min(finite) if finite else 0) - 8
        k_hi = (max(finite) if finite else 0) + 8
        for t in np.linspace(0.0, 1.0, 11):
            for k in range(k_lo, k_hi + 1):
                rows.append(
                    {
                        "delta": float(delta),
                        "k": k,
                        "y": k * float(delta),
                        "t": float(t),
                        "price": kernel.price_idx(k, float(t)),
                    }
                )
    _write_csv(
        os.path.join(out_dir, "price.csv"),
        ["delta", "k", "y", "t", "price"],
        rows,
        cfg["outputs"]["timestamp"],
    )
    return 0


def _cmd_simulate(cfg, out_dir, args):
    dist = _dist(cfg)
    n_paths = int(cfg["mc"]["paths"])
    workers = _workers(cfg)
    rows = []
    diagnostics = {}
    for delta in cfg["market"]["deltas"]:
        params = _params(cfg, delta, dist)
        records = list(
            generate_paths(params, "constructive", n_paths, workers=workers)
        )
        rate = _check_runaways(records)
        for i, r in enumerate(records):
            rows.append(
                {
                    "delta": float(delta),
                    "path": i,
                    "bin": r.bin_index,
                    "events": int(r.times.size),
                    "attempts": r.attempts,
                    "terminalY": r.y_terminal * float(delta),
                    "profit": r.realized_profit,
                    "runaway": int(r.runaway),
                    "miss": int(r.terminal_miss),
                }
            )
        m, se = realized_stats(records)
        diagnostics[_FMT % float(delta)] = {
            "paths": n_paths,
            "runawayMissRate": rate,
            "profitMean": m,
            "profitSE": se,
        }
    _write_csv(
        os.path.join(out_dir, "simulate.csv"),
        ["delta", "path", "bin", "events", "attempts", "terminalY", "profit", "runaway", "miss"],
        rows,
        cfg["outputs"]["timestamp"],
    )
    print(json.dumps(diagnostics, indent=2))
    return 0


def _cmd_loss_bound(cfg, out_dir, args):
    dist = _dist(cfg)
    n_paths = int(cfg["mc"]["paths"])
    workers = _workers(cfg)
    rows = []
    for delta in cfg["market"]["deltas"]:
        params = _params(cfg, delta, dist)
        q = params.quant
        for n in range(1, q.n_bins + 1):
            if q.mid_lower_idx[n - 1] in (-INF_IDX, INF_IDX):
                summary = loss_bound(params.kernel, n, 0.0, 0.0, 0)
            else:
                recs = list(
                    generate_paths(
                        params, "constructive", n_paths, bin_index=n, workers=workers
                    )
                )
                _check_runaways(recs)
                l_hat, l_se = L_estimate(params.kernel, n, recs)
                r_m, r_se = realized_stats(recs)
                summary = loss_bound(
                    params.kernel, n, l_hat, l_se, n_paths, r_m, r_se
                )
            rows.append(
                {
                    "delta": summary.delta,
                    "bin": summary.bin_index,
                    "U0": summary.u0,
                    "USgap": summary.us_gap,
                    "Lhat": summary.l_hat,
                    "Lhat_se": summary.l_hat_se,
                    "realized": summary.realized_mean,
                    "realized_se": summary.realized_se,
                    "lossBound": summary.loss_bound,
                    "paths": summary.path_count,
                }
            )
    _write_csv(
        os.path.join(out_dir, "profit.csv"),
        ["delta", "bin", "U0", "USgap", "Lhat", "Lhat_se", "realized", "realized_se", "lossBound", "paths"],
        rows,
        cfg["outputs"]["timestamp"],
    )
    return 0


def _cmd_kyle(cfg, out_dir, args):
    dist = _dist(cfg)
    n_paths = int(cfg["mc"]["paths"])
    dt = 1e-3
    b = gaussian_boundaries(dist)
    seed = int(cfg["mc"]["seed"])
    rows = []
    all_profits = []
    probs = np.asarray(dist.probs)
    for n in range(1, len(dist.values) + 1):
        rng = np.random.default_rng(np.random.SeedSequence((seed, n)))
        bins = np.full(n_paths, n)
        profits, hits, _, _ = simulate_kyle_batch(
            b, dist.values, bins, dt, rng, float(cfg["market"]["endEpsilon"])
        )
        m, se = mean_se(profits)
        rows.append(
            {
                "bin": str(n),
                "deltaT": dt,
                "profitMean": m,
                "profitSE": se,
                "hitRate": float(np.mean(hits)),
                "paths": n_paths,
            }
        )
        all_profits.append((m, se, float(np.mean(hits))))
    mix_m = float(np.dot(probs, [p[0] for p in all_profits]))
    mix_se = float(math.sqrt(np.dot(probs**2, [p[1] ** 2 for p in all_profits])))
    rows.append(
        {
            "bin": "mixture",
            "deltaT": dt,
            "profitMean": mix_m,
            "profitSE": mix_se,
            "hitRate": float(np.dot(probs, [p[2] for p in all_profits])),
            "paths": n_paths * len(dist.values),
        }
    )
    _write_csv(
        os.path.join(out_dir, "kyle.csv"),
        ["bin", "deltaT", "profitMean", "profitSE", "hitRate", "paths"],
        rows,
        cfg["outputs"]["timestamp"],
    )
    return 0


def _render_figure1(csv_path, png_path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:  # pragma: no cover - matplotlib is an optional extra
        print("matplotlib unavailable; skipped figure rendering", file=sys.stderr)
        return
    deltas, bounds, ses = [], [], []
    with open(csv_path) as f:
        header = None
        for line in f:
            if line.startswith("#"):
                continue
            parts = line.strip().split(",")
            if header is None:
                header = {h: i for i, h in enumerate(parts)}
                continue
            if parts[header["bin"]] == "mixture":
                deltas.append(float(parts[header["delta"]]))
                bounds.append(float(parts[header["mixtureBound"]]))
                ses.append(float(parts[header["mixtureBound_se"]]))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(deltas, bounds, yerr=ses, marker="o", capsize=3)
    ax.set_xlabel("order size $\\delta$")
    ax.set_ylabel("profit-loss bound (mixture)")
    ax.set_title("Insider optimality-gap bound vs order size")
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)


def _cmd_converge(cfg, out_dir, args):
    dist = _dist(cfg)
    n_paths = int(cfg["mc"]["paths"])
    seed = int(cfg["mc"]["seed"])
    workers = _workers(cfg)
    deltas = [float(d) for d in cfg["market"]["deltas"]]
    stamp = cfg["outputs"]["timestamp"]
    fig_rows = loss_convergence(
        dist,
        deltas,
        n_paths,
        seed,
        workers=workers,
        end_epsilon=float(cfg["market"]["endEpsilon"]),
    )
    _write_csv(
        os.path.join(out_dir, "figure1.csv"),
        ["delta", "bin", "lossBound", "lossBound_se", "mixtureBound", "mixtureBound_se"],
        fig_rows,
        stamp,
    )
    occ_rows = occupation_convergence(dist, deltas, 1.0, n_paths, seed, workers=workers)
    _write_csv(
        os.path.join(out_dir, "occupation.csv"),
        ["delta", "t", "occMean", "occSE", "localTimeRef", "identityGap", "identitySE", "paths"],
        occ_rows,
        stamp,
    )
    interior = [
        n
        for n in range(1, len(dist.values) + 1)
        if quantize(dist, deltas[0]).mid_lower_idx[n - 1] not in (-INF_IDX, INF_IDX)
    ]
    ks_rows = []
    for n in interior:
        ks_rows.extend(
            strategy_convergence(
                dist, deltas, n, min(n_paths, 10000), (0.0, 0.25, 0.5, 0.75, 1.0), seed
            )
        )
    _write_csv(
        os.path.join(out_dir, "ks.csv"),
        ["delta", "t", "bin", "ks", "ksCritical1pct", "paths"],
        ks_rows,
        stamp,
    )
    _render_figure1(
        os.path.join(out_dir, "figure1.csv"), os.path.join(out_dir, "figure1.png")
    )
    return 0


def _cmd_selftest(cfg, out_dir, args):
    dist = _dist(cfg)
    delta = 0.5
    n_paths = 1000
    checks = []
    params = _params(cfg, delta, dist)
    kernel, q = params.kernel, params.quant
    checks.append(("quantizer probability mass", abs(sum(q.bin_probs) - 1.0) < 1e-10))
    parity_ok = all(
        (a - b) % 2 == 0
        for a, b in zip(q.boundary_indices[1:-1], q.boundary_indices[2:-1])
    )
    checks.append(("boundary parity", parity_ok))
    checks.append(
        (
            "kernel partition of unity",
            abs(float(np.sum(kernel.h_all_idx(0, 0.3))) - 1.0) < 1e-10,
        )
    )
    p00 = kernel.price_idx(0, 0.0)
    checks.append(
        ("rational price at origin", abs(p00 - float(np.dot(kernel.values, q.bin_probs))) < 1e-10)
    )
    records = list(
        generate_paths(params, "constructive", n_paths, workers=_workers(cfg))
    )
    miss = sum(1 for r in records if r.runaway or r.terminal_miss)
    checks.append(("runaway/miss rate below 1%", miss / n_paths <= 0.01))
    occ_ok = all(
        abs(sum(r.occupation.values()) - 1.0) < 1e-9 for r in records[:50]
    )
    checks.append(("occupation partitions time", occ_ok))
    diffs = [
        r.realized_profit
        + ell_for_record(kernel, r.bin_index, r)
        - U_of(kernel, r.bin_index, 0.0, 0.0)
        for r in records
    ]
    m, se = mean_se(diffs)
    checks.append(("profit identity within 4 SE", abs(m) <= 4.0 * se))
    noise = list(generate_paths(params, "noise", n_paths))
    occ = [occupation_until(r, 0, 1.0) / (2.0 * delta) for r in noise]
    yabs = [abs(r.y_terminal) * delta for r in noise]
    gm, gse = mean_se([2.0 * o - y for o, y in zip(occ, yabs)])
    checks.append(("occupation/|Y| identity within 4 SE", abs(gm) <= 4.0 * gse))
    checks.append(
        (
            "local-time closed form",
            abs(brownian_local_time_mean(0.0, 1.0) - math.sqrt(2.0 / math.pi) / 2.0)
            < 1e-12,
        )
    )
    failed = [name for name, ok in checks if not ok]
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 1 if failed else 0


_COMMANDS = {
    "quantize": _cmd_quantize,
    "price": _cmd_price,
    "simulate": _cmd_simulate,
    "loss-bound": _cmd_loss_bound,
    "kyle": _cmd_kyle,
    "converge": _cmd_converge,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gmbridge",
        description="Lattice market-making equilibrium: quantize, simulate, bound, converge.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None, help="override mc.seed")
    parser.add_argument("--paths", type=int, default=None, help="override mc.paths")
    parser.add_argument("--out", default=None, help="override outputs.dir")
    parser.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit the generated-at comment line from CSV outputs",
    )
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["mc"]["seed"] = args.seed
        if args.paths is not None:
            if args.paths < 1:
                raise ConfigError("--paths must be positive")
            cfg["mc"]["paths"] = args.paths
        if args.out is not None:
            cfg["outputs"]["dir"] = args.out
        if args.no_timestamp:
            cfg["outputs"]["timestamp"] = False
        out_dir = cfg["outputs"]["dir"]
        os.makedirs(out_dir, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir, args)
    except (ConfigError, QuantizationError, SimulationError, ValueError, OSError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
