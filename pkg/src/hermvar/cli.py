"""Command-line experiment runner.

Usage::

    hermvar [COMMAND] [--config FILE] [--seed N] [--threads N] [--out DIR] [--set key=value ...]

The config is a JSON document; command-line values override its top-level
fields. Each run writes ``<out>/<command>.csv`` (headed by the config, its
hash and the seed) and ``<out>/summary.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import chaos, kernel, malliavin, special, variation
from .chaos import CapExceeded
from .grid import make_dyadic_grid
from .kernel import HermiteParams
from .randomness import SeedSpec, map_replicates, mc_mean, noise_batch, sample_noise

COMMANDS = ("simulate", "variation", "skorokhod", "converge-z", "converge-integral", "estimate-c", "check-identities")
U64_MAX = 2**64 - 1

DEFAULTS = {
    "H": 0.75,
    "k": 1,
    "T": 1.0,
    "n_max": 8,
    "replicates": 1000,
    "seed": 12345,
}
KNOWN_KEYS = frozenset(DEFAULTS) | {"command", "levels", "power", "window", "level", "integrand", "replicate"}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the field path."""


def _num(cfg, key, lo=None, hi=None, open_lo=False, open_hi=False, interval=None):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key}: expected a finite number, got {v!r}")
    bad = (lo is not None and (v <= lo if open_lo else v < lo)) or (hi is not None and (v >= hi if open_hi else v > hi))
    if bad:
        raise ConfigError(f"{key}: {v} is outside the valid interval {interval}")
    return v


def _int(cfg, key, lo, hi):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    if not lo <= v <= hi:
        raise ConfigError(f"{key}: {v} is outside the valid range {lo}..{hi}")
    return v


def validate(cfg: dict) -> dict:
    """Check every field before any computation; returns the effective config."""
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = sorted(set(cfg) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    cfg = {**DEFAULTS, **cfg}
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {cfg.get('command')!r}")
    _num(cfg, "H", 0.5, 1.0, open_lo=True, open_hi=True, interval="(1/2,1)")
    _int(cfg, "k", 1, 3)
    _num(cfg, "T", 0.0, open_lo=True, interval="(0,inf)")
    _int(cfg, "n_max", 1, 24)
    _int(cfg, "replicates", 1, 10**7)
    _int(cfg, "seed", 0, U64_MAX)
    levels = cfg.setdefault("levels", list(range(1, cfg["n_max"] + 1)))
    if not isinstance(levels, list) or not levels or not all(isinstance(n, int) and not isinstance(n, bool) for n in levels):
        raise ConfigError("levels: expected a non-empty list of integers")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels: must be strictly increasing")
    if levels[0] < 0 or levels[-1] > cfg["n_max"]:
        raise ConfigError(f"levels: must lie in 0..n_max = {cfg['n_max']}")
    if "power" in cfg:
        _num(cfg, "power", 1.0, interval="[1,inf)")
    if "window" in cfg:
        w = cfg["window"]
        if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, (int, float)) for x in w)):
            raise ConfigError("window: expected [t0, t1]")
        try:
            malliavin.window_indices(make_dyadic_grid(float(cfg["T"]), cfg["n_max"]), (float(w[0]), float(w[1])))
        except ValueError as exc:
            raise ConfigError(f"window: {exc}") from None
    if "replicate" in cfg:
        _int(cfg, "replicate", 0, U64_MAX)
    if "level" in cfg:
        _int(cfg, "level", 0, cfg["n_max"])
    if cfg["command"] in ("skorokhod", "converge-integral") and "integrand" not in cfg:
        cfg["integrand"] = {"partition": [0.0, cfg["T"]], "segments": [{"kind": "const", "value": 1.0}]}
    if "integrand" in cfg:
        grid = make_dyadic_grid(float(cfg["T"]), cfg["n_max"])
        try:
            malliavin.parse_integrand(cfg["integrand"], grid, path="integrand")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _header(cfg, raw_text):
    lines = [f"command: {cfg['command']}"]
    if raw_text is not None:
        lines += [f"config_file: {line}" for line in raw_text.splitlines()]
    lines += [
        f"effective_config: {json.dumps(cfg, sort_keys=True, separators=(',', ':'))}",
        f"config_hash: {config_hash(cfg)}",
        f"seed: {cfg['seed']}",
    ]
    return lines


def _csv(header, columns, rows):
    out = [f"# {h}" for h in header] + [",".join(columns)]
    for row in rows:
        out.append(",".join(variation.fmt(v) if not isinstance(v, str) else v for v in row))
    return "\n".join(out) + "\n"


def _setup(cfg):
    p = HermiteParams(float(cfg["H"]), int(cfg["k"]))
    grid = make_dyadic_grid(float(cfg["T"]), int(cfg["n_max"]))
    return p, grid


def run_simulate(cfg, header, threads):
    p, grid = _setup(cfg)
    path = chaos.simulate_hermite_path(p, grid, sample_noise(SeedSpec(cfg["seed"], int(cfg.get("replicate", 0))), grid))
    return path.to_csv(header_lines=header), True, {}


def run_variation(cfg, header, threads):
    p, grid = _setup(cfg)
    rep = variation.converge_z(p, grid, cfg["levels"], cfg["replicates"], cfg["seed"], threads,
                               power=cfg.get("power"), experiment="variation")
    suite = variation.inequality_suite(p, grid, cfg.get("level", cfg["levels"][-1]), cfg["replicates"], cfg["seed"],
                                       threads=threads)
    text = rep.to_csv(header) + suite.to_csv()
    ok = suite.passed and rep.triangle_violations == 0
    return text, ok, {"inequalities": {c.name: c.passed for c in suite.checks}}


def run_skorokhod(cfg, header, threads):
    p, grid = _setup(cfg)
    g = malliavin.parse_integrand(cfg["integrand"], grid)
    t0, t1 = cfg.get("window", [0.0, grid.horizon])
    lo, hi = malliavin.window_indices(grid, (float(t0), float(t1)))
    vals = map_replicates(
        lambda idx: malliavin.skorokhod_cell_terms(p, g, grid, noise_batch(cfg["seed"], idx, grid))[:, lo:hi].sum(axis=1),
        cfg["replicates"], threads)
    mean, se = mc_mean(vals)
    rows = [(i, v) for i, v in enumerate(vals)]
    text = _csv(header + [f"mean: {variation.fmt(mean)}", f"stderr: {variation.fmt(se)}"], ("replicate", "value"), rows)
    return text, True, {"mean": mean, "stderr": se}


def run_converge_z(cfg, header, threads):
    p, grid = _setup(cfg)
    rep = variation.converge_z(p, grid, cfg["levels"], cfg["replicates"], cfg["seed"], threads, power=cfg.get("power"))
    return rep.to_csv(header), rep.triangle_violations == 0, {"triangle_violations": rep.triangle_violations}


def run_converge_integral(cfg, header, threads):
    p, grid = _setup(cfg)
    g = malliavin.parse_integrand(cfg["integrand"], grid)
    rep = variation.converge_integral(p, g, grid, cfg["levels"], cfg["replicates"], cfg["seed"], threads)
    return rep.to_csv(header), rep.triangle_violations == 0, {"triangle_violations": rep.triangle_violations}


def run_estimate_c(cfg, header, threads):
    p, grid = _setup(cfg)
    value, se = variation.estimate_C(p, grid, cfg["replicates"], cfg["seed"], threads)
    row = (p.H, p.k, value, se if not math.isnan(se) else "NA", cfg["replicates"], cfg["seed"])
    return _csv(header, ("H", "k", "value", "stderr", "replicates", "seed"), [row]), True, {}


def identity_checks(seed: int, H: float = 0.75, k: int = 1) -> list[tuple[str, float, float]]:
    """``(name, max gap, tolerance)`` for the closed-form identities."""
    rng = np.random.default_rng(seed)
    out = []
    gaps = []
    cases = [HermiteParams(*Hk) for Hk in ((0.75, 1), (0.7, 2), (0.7, 3), (H, k))]
    for i in range(50):
        pk = cases[i % len(cases)]
        u, v = rng.uniform(0.05, 1.0, 2)
        exact = kernel.k_closed_form(pk, u, v)
        gaps.append(abs(kernel.k_quadrature_form(pk, u, v) - exact) / abs(exact))
    out.append(("kernel_closed_form", max(gaps), 1e-6))
    gaps = []
    for _ in range(100):
        u, v = rng.uniform(0.0, 1.0, 2)
        alpha = rng.uniform(0.05, 0.45)
        lhs, rhs = special.beta_substitution_identity(u, v, alpha)
        gaps.append(abs(lhs - rhs) / abs(rhs))
    out.append(("beta_substitution", max(gaps), 1e-6))
    gaps = []
    for Hk in ((0.75, 1), (0.7, 2), (0.7, 3), (H, k)):
        Hh, kk = Hk
        a = 0.5 - (1 - Hh) / kk
        logb = math.lgamma(a) + math.lgamma(2 * (1 - Hh) / kk) - math.lgamma(a + 2 * (1 - Hh) / kk)
        recomputed = math.sqrt(Hh * (2 * Hh - 1) / math.factorial(kk)) * math.exp(-0.5 * kk * logb)
        gaps.append(abs(recomputed - kernel.c_constant(Hh, kk)) / recomputed)
    out.append(("c_constant", max(gaps), 1e-10))
    gaps = []
    lattice = (0.25, 0.5, 0.75, 1.0)
    for Hk in ((0.75, 1), (0.7, 2)):
        pk = HermiteParams(*Hk)
        for s in lattice:
            for t in lattice:
                r = kernel.fbm_covariance(pk.H, s, t)
                gaps.append(abs(math.factorial(pk.k) * kernel.kernel_inner_product(pk, s, t) - r) / r)
    out.append(("covariance", max(gaps), 5e-3))
    return out


def run_check_identities(cfg, header, threads):
    checks = identity_checks(cfg["seed"], float(cfg["H"]), int(cfg["k"]))
    rows = [(name, gap, tol, "pass" if gap <= tol else "fail") for name, gap, tol in checks]
    ok = all(r[3] == "pass" for r in rows)
    return _csv(header, ("check", "max_gap", "tolerance", "status"), rows), ok, {r[0]: r[3] for r in rows}


RUNNERS = {
    "simulate": run_simulate,
    "variation": run_variation,
    "skorokhod": run_skorokhod,
    "converge-z": run_converge_z,
    "converge-integral": run_converge_integral,
    "estimate-c": run_estimate_c,
    "check-identities": run_check_identities,
}


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, value = text.split("=", 1)
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hermvar", description="Hermite process variation experiments.")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the config's command")
    ap.add_argument("--config", type=Path, help="JSON experiment config")
    ap.add_argument("--seed", type=int, help="master seed (u64)")
    ap.add_argument("--threads", type=int, help="worker threads; never changes results")
    ap.add_argument("--out", type=Path, help="output directory (default: config field out, else results)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a top-level field")
    return ap


def run(cfg: dict, raw_text: str | None, out: Path, threads: int = 1) -> tuple[int, dict]:
    start = time.perf_counter()
    cfg = validate(cfg)
    header = _header(cfg, raw_text)
    text, ok, extra = RUNNERS[cfg["command"]](cfg, header, threads)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg['command']}.csv").write_text(text)
    summary = {
        "command": cfg["command"],
        "config_hash": config_hash(cfg),
        "pass_fail": "pass" if ok else "fail",
        "wall_time": time.perf_counter() - start,
        **({"details": extra} if extra else {}),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return (0 if ok else 1), summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw_text = None
        cfg = {}
        if args.config is not None:
            try:
                raw_text = args.config.read_text()
            except OSError as exc:
                raise ConfigError(f"config: cannot read {args.config}: {exc.strerror}") from None
            try:
                cfg = json.loads(raw_text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
            if not isinstance(cfg, dict):
                raise ConfigError("config: expected a JSON object")
        for item in args.set:
            key, value = _parse_override(item)
            cfg[key] = value
        # neither the thread count nor the output directory changes results, so they stay out of the echoed config and hash
        threads = cfg.pop("threads", 1)
        out = cfg.pop("out", "results")
        if not isinstance(out, str) or not out:
            raise ConfigError(f"out: expected a directory path, got {out!r}")
        out = args.out if args.out is not None else Path(out)
        if args.threads is not None:
            threads = args.threads
        if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
            raise ConfigError(f"threads: expected a positive integer, got {threads!r}")
        if args.command:
            cfg["command"] = args.command
        if args.seed is not None:
            cfg["seed"] = args.seed
        status, summary = run(cfg, raw_text, out, threads)
    except (ConfigError, CapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({k: summary[k] for k in ("command", "config_hash", "pass_fail")}))
    return status


if __name__ == "__main__":
    sys.exit(main())
