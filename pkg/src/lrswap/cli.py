"""Command-line entry point.

Every subcommand reads an optional JSON config, applies flag overrides,
echoes the resolved config into its report and exits with 0 (pass),
1 (a check failed) or 2 (bad usage or config).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from gmpy2 import mpq

from . import master, process, reduction, scattering
from .algebra import sector_blocks
from .local_ops import tampered_pair, verify_structure_lemmas
from .params import ModelParams, rational, render_scalar

__all__ = ["RunConfig", "ConfigError", "main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    N: int = 2
    mu: list = field(default_factory=lambda: ["1/3", "2/5"])
    p: object = "1"
    n: int = 3
    seed: int = 0
    trials: int = 100_000
    t_max: float = 1.0
    window: list | None = None
    out: str | None = None
    mode: str = "exact"
    tolerance: float = 0.005
    points: int = 50
    draws: int = 0
    n_values: list = field(default_factory=lambda: [2, 3, 4])
    word: list | None = None
    positions: list | None = None
    workers: int = 1
    tamper: bool = False
    force_pole: bool = False

    def params(self) -> ModelParams:
        exact = self.mode == "exact"
        try:
            return ModelParams(int(self.N), tuple(self.mu), self.p, exact=exact)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self) -> "RunConfig":
        if self.mode not in ("exact", "float"):
            raise ConfigError(f"mode must be 'exact' or 'float', got {self.mode!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name in ("n", "trials", "points", "workers"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 0:
                raise ConfigError(f"{name} must be a non-negative integer")
        if self.t_max < 0:
            raise ConfigError("t_max must be non-negative")
        self.params()
        return self

    def resolved(self) -> dict:
        out = asdict(self)
        out["mu"] = [render_scalar(m) for m in self.params().mu] if self.mode == "exact" else [float(m) for m in self.mu]
        out["p"] = render_scalar(self.params().p)
        return out


# ------------------------------------------------------------------ utilities


def _emit_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_csv(header, rows, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _random_mu(rng: np.random.Generator, N: int, exact: bool, max_den: int = 24):
    if not exact:
        return tuple(float(rng.uniform(1e-6, 1 - 1e-6)) for _ in range(N))
    out = []
    for _ in range(N):
        den = int(rng.integers(2, max_den + 1))
        out.append(mpq(int(rng.integers(1, den)), den))
    return tuple(out)


def _initial(cfg: RunConfig) -> process.Configuration:
    word = cfg.word or [(k % cfg.N) + 1 for k in range(cfg.n)]
    positions = cfg.positions or list(range(len(word)))
    return process.Configuration(tuple(positions), tuple(word))


# ------------------------------------------------------------------- commands


def cmd_verify_operators(cfg: RunConfig) -> int:
    params = cfg.params()
    if not params.exact:
        raise ConfigError("verify-operators runs in exact mode only")
    pair = tampered_pair(params) if cfg.tamper else None
    report = verify_structure_lemmas(params, pair)
    if params.is_binary():
        ch = reduction.chain(max(cfg.n, 3), None, params)
        report["binary_chain"] = reduction.binary_chain_inverse(ch)
        report["passed"] = report["passed"] and report["binary_chain"]["passed"]
    report["config"] = cfg.resolved()
    _emit_json(report, cfg.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _pole_candidate(params: ModelParams) -> tuple:
    """A point whose ``(alpha, beta)`` pair sits on a genuine pole."""
    for i in range(1, params.N + 1):
        mu, lam = params.mu_of(i), params.lam_of(i)
        if mu == 0:
            continue
        for xa in (mpq(2), mpq(3), mpq(5), mpq(7)):
            if lam * xa != 1:
                xb = -mu / (lam * xa - 1)
                if xb != xa:
                    return (xa, xb, xa + abs(xb) + 11)
    # every mu is zero: the pole sits at xi_alpha = 1
    return (mpq(1), mpq(2), mpq(3))


def cmd_verify_ybe(cfg: RunConfig) -> int:
    params = cfg.params()
    if not params.exact:
        raise ConfigError("verify-ybe runs in exact mode only")
    forced = [_pole_candidate(params)] if cfg.force_pole else None
    rep = scattering.verify_ybe_batch(params, cfg.points, cfg.seed, workers=cfg.workers, forced=forced)
    out = rep.as_dict()
    out["config"] = cfg.resolved()
    _emit_json(out, cfg.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_scan_invertibility(cfg: RunConfig) -> int:
    base = cfg.params()
    if base.exact and (cfg.n > 4 or cfg.N > 4):
        raise ConfigError("exact scans are limited to N, n <= 4")
    rng = np.random.default_rng(cfg.seed)
    draws = [base.mu] if cfg.draws == 0 else [_random_mu(rng, cfg.N, base.exact) for _ in range(cfg.draws)]
    rows, ok = [], True
    for d, mu in enumerate(draws):
        params = base.with_species(cfg.N, mu)
        mu_txt = " ".join(render_scalar(m) for m in params.mu)
        for ms in sector_blocks(cfg.n, cfg.N).blocks:
            scan = reduction.sector_invertibility_scan(ms, params)
            for r in scan.rows:
                rho = r["spectral_radius"]
                ok = ok and r["invertible"] and (rho is None or rho < 1)
                rows.append(
                    [d, mu_txt, "".join(map(str, ms)), scan.case, r["k"], str(r["invertible"]).lower(), "" if rho is None else repr(rho)]
                )
    _emit_csv(["draw", "mu", "multiset", "case", "k", "invertible", "spectral_radius"], rows, cfg.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_rates(cfg: RunConfig) -> int:
    params = cfg.params()
    exact = params if params.exact else ModelParams(params.N, params.mu, params.p)
    rows, ok = [], True
    for n in cfg.n_values:
        for i in range(1, params.N + 1):
            formula = reduction.effective_shift_rate(n, i, exact)
            word = (i,) * n
            oracle = reduction.transition_coefficient(word, word, n, exact) if n >= 2 else formula
            est = process.estimate_shift_rate(n, i, params, cfg.trials, cfg.seed + 1000 * n + i, workers=cfg.workers)
            ok = ok and formula == oracle and est.brackets(formula)
            rows.append([n, i, render_scalar(formula), render_scalar(oracle), repr(est.estimate), repr(est.ci_low), repr(est.ci_high)])
    _emit_csv(["n", "i", "formula_rate", "oracle_rate", "mc_estimate", "ci_low", "ci_high"], rows, cfg.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.params()
    init = _initial(cfg)
    traj = process.simulate(init, cfg.t_max, params, cfg.seed)
    if cfg.out:
        process.write_trajectory_csv(traj, cfg.out)
    pos, word = traj.final.render()
    _emit_json(
        {"config": cfg.resolved(), "events": len(traj.events), "final_positions": pos, "final_word": word, "seed": cfg.seed},
        None,
    )
    return EXIT_OK


def cmd_master_compare(cfg: RunConfig) -> int:
    params = cfg.params()
    n = cfg.n
    if not 1 <= n <= 3:
        raise ConfigError("master-compare needs 1 <= n <= 3")
    window = tuple(cfg.window) if cfg.window else (0, n + 3)
    rules = master.build_generator_from_rules(n, window, params)
    report = {"config": cfg.resolved(), "window": list(window), "states": rules.size}
    bx = master.build_generator_bethe(n, window, params, route="X")
    if params.exact:
        report["rules_vs_elimination"] = master.compare_generators(rules, bx)
    else:
        diff = abs(rules.to_csr() - bx.to_csr()).max()
        report["rules_vs_elimination"] = {"equal": bool(diff <= 1e-12), "max_abs_difference": float(diff)}
    equal = report["rules_vs_elimination"]["equal"]
    if n == 3:
        by = master.build_generator_bethe(n, window, params, route="Y")
        cmp = master.compare_generators(bx, by) if params.exact else {"equal": bool(abs(bx.to_csr() - by.to_csr()).max() <= 1e-12)}
        report["elimination_orders"] = cmp
        equal = equal and cmp["equal"]
    if n == 2:
        direct = master.build_generator_pair_direct(window, params)
        cmp = master.compare_generators(direct, bx) if params.exact else {"equal": bool(abs(direct.to_csr() - bx.to_csr()).max() <= 1e-12)}
        report["pair_boundary_identity"] = cmp
        equal = equal and cmp["equal"]
    init = _initial(cfg)
    _, dist = master.evolve_with_window(init, cfg.t_max, params)
    counts = process.sample_final_configurations(init, cfg.t_max, params, cfg.trials, cfg.seed, workers=cfg.workers)
    tv = master.total_variation(dist, master.empirical_distribution(counts))
    report["monte_carlo"] = {"samples": cfg.trials, "t": cfg.t_max, "tv": tv, "leaked": dist.leaked, "tolerance": cfg.tolerance}
    report["passed"] = bool(equal and tv < cfg.tolerance)
    _emit_json(report, cfg.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


COMMANDS = {
    "verify-operators": cmd_verify_operators,
    "verify-ybe": cmd_verify_ybe,
    "scan-invertibility": cmd_scan_invertibility,
    "rates": cmd_rates,
    "simulate": cmd_simulate,
    "master-compare": cmd_master_compare,
}


# ---------------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> list:
    return [int(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrswap", description="Verification suites and simulations for the long-range swap process.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--mode", choices=["exact", "float"])
        s.add_argument("--out")
        s.add_argument("--trials", type=int)
        s.add_argument("--tolerance", type=float)
        s.add_argument("--N", type=int, dest="N")
        s.add_argument("--mu", help="comma-separated values, e.g. 1/3,2/5")
        s.add_argument("--p")
        s.add_argument("--n", type=int, dest="n")
        s.add_argument("--t-max", type=float, dest="t_max")
        s.add_argument("--points", type=int)
        s.add_argument("--draws", type=int)
        s.add_argument("--n-values", type=_int_list, dest="n_values")
        s.add_argument("--window", type=_int_list)
        s.add_argument("--word", type=_int_list)
        s.add_argument("--positions", type=_int_list)
        s.add_argument("--workers", type=int)
        s.add_argument("--tamper", action="store_true", default=None, help="inject a wrong B as a negative control")
        s.add_argument("--force-pole", action="store_true", default=None, dest="force_pole", help="offer a pole point first")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    for name in known:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    if isinstance(data.get("mu"), str):
        data["mu"] = [x for x in data["mu"].replace(",", " ").split()]
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.mode == "exact":
        try:
            cfg.mu = [render_scalar(rational(m)) for m in cfg.mu]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid mu: {exc}") from exc
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        sys.stderr.write(f"lrswap: config error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
