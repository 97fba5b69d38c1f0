"""Command-line experiments.

Every run writes ``<out>/<experiment>-<timestamp>.csv`` (header plus data rows,
floats at 17 significant digits) and a companion ``.json`` with the version,
resolved config, seed, wall-clock and the in-run assertions.  Exit status is 0
when every assertion holds, 1 otherwise (the first failing name goes to
stderr) and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import datetime as _dt
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

SUBCOMMANDS = ("constants", "sbeta", "kernel", "fk2", "fkN", "bessel-validate", "exponent-identity",
               "phib-asymptotics", "series", "convergence", "selftest")


class ConfigError(ValueError):
    """Bad config file, flag value or unknown key."""


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _points(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(tuple(float(c) for c in p) for p in text)
    pts = []
    for chunk in filter(None, str(text).replace(" ", "").split(";")):
        xy = _floats(chunk)
        if len(xy) != 2:
            raise ConfigError(f"point {chunk!r} needs two coordinates")
        pts.append(xy)
    return tuple(pts)


def _ints(text) -> tuple:
    return tuple(int(v) for v in _floats(text))


@dataclass
class ExperimentConfig:
    experiment: str = "selftest"
    mollifier: str = "bump:k=2,R=1"
    lam: float = 0.0
    beta: str = "derive"
    eps_grid: tuple = (0.2, 0.1, 0.05)
    t_grid: tuple = (1.0,)
    q_grid: tuple = (2.0, math.e, 5.0, 10.0)
    b_grid: tuple = (0.5, 1.0)
    x_points: tuple = ((1.0, 0.0),)
    z_points: tuple = ((-1.0, 0.0),)
    n_paths: int = 100_000
    n_streams: int = 8
    dt_factor: float = 0.1
    importance: str = "ground-state"
    m_max: int = 2
    skip: tuple = ()
    out: str = "."
    seed: int = 0
    threads: int | None = None

    def resolved_beta(self, phi=None) -> float:
        from .mollifier import compute_beta, mollifier_from_spec
        if self.beta != "derive":
            return float(self.beta)
        return compute_beta(phi if phi is not None else mollifier_from_spec(self.mollifier), self.lam)

    def mc(self):
        from .stochastics import McConfig
        return McConfig(n_paths=self.n_paths, seed=self.seed, n_streams=self.n_streams,
                        dt_factor=self.dt_factor, threads=self.threads)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# config-file layout: section -> {key: (field, parser)}
CONFIG_KEYS = {
    "experiment": {"name": ("experiment", str), "seed": ("seed", int), "out": ("out", str),
                   "threads": ("threads", int), "skip": ("skip", _ints)},
    "mollifier": {"spec": ("mollifier", str), "lambda": ("lam", float), "beta": ("beta", str)},
    "grids": {"eps": ("eps_grid", _floats), "t": ("t_grid", _floats), "q": ("q_grid", _floats),
              "b": ("b_grid", _floats), "x": ("x_points", _points), "z": ("z_points", _points),
              "m_max": ("m_max", int)},
    "mc": {"n_paths": ("n_paths", int), "n_streams": ("n_streams", int), "dt_factor": ("dt_factor", float),
           "importance": ("importance", str)},
}


def load_config(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in CONFIG_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_KEYS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            name, conv = CONFIG_KEYS[section][key]
            try:
                values[name] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return values


# ---------------------------------------------------------------- experiments

@dataclass
class Outcome:
    header: list
    rows: list
    extra: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)  # (name, passed)


def _schedule(phi, eps, cfg, beta):
    from .mollifier import CouplingSchedule
    return CouplingSchedule.build(phi, eps, cfg.lam, strict=False, beta=beta)


def exp_constants(cfg: ExperimentConfig) -> Outcome:
    from .mollifier import mollifier_from_spec, window_conditions
    phi = mollifier_from_spec(cfg.mollifier)
    beta = cfg.resolved_beta(phi)
    rows = []
    for eps in cfg.eps_grid:
        w = window_conditions(eps, cfg.lam)
        rows.append([eps, w["lambda_eps"], int(w["lambda_eps_in_unit_interval"] and w["ratio_in_(0,2]"])])
    return Outcome(["eps", "lambda_eps", "in_window"], rows, {"beta": beta, "lambda_eps": {str(r[0]): r[1] for r in rows}},
                   [("beta-positive", math.isfinite(beta) and beta > 0)])


def exp_sbeta(cfg: ExperimentConfig) -> Outcome:
    from .kernels import FOUR_PI, SBetaDensity
    beta = cfg.resolved_beta()
    sb = SBetaDensity(beta)
    rows = []
    for q in cfg.q_grid:
        rhs = FOUR_PI / math.log(q / beta)
        lhs = sb.laplace(q)
        rows.append([q, lhs, rhs, abs(lhs - rhs) / abs(rhs)])
    return Outcome(["q", "lhs_quadrature", "four_pi_over_log", "rel_err"], rows, {"beta": beta},
                   [("sbeta-laplace", all(r[3] <= 1e-6 for r in rows))])


def exp_kernel(cfg: ExperimentConfig) -> Outcome:
    from .kernels import ResolventKernel, laplace_of_limit_kernel
    beta = cfg.resolved_beta()
    rows = []
    # an empty q grid means q in {2 beta, 4 beta}
    for q in cfg.q_grid or (2.0 * beta, 4.0 * beta):
        R = ResolventKernel(beta, q)
        for x, z in zip(cfg.x_points, cfg.z_points):
            ref = R(x, z)
            num = laplace_of_limit_kernel(q, x, z, beta)
            rows.append([q, x[0], x[1], z[0], z[1], num, ref, abs(num - ref) / abs(ref)])
    return Outcome(["q", "x1", "x2", "z1", "z2", "laplace_time_kernel", "resolvent", "rel_err"], rows,
                   {"beta": beta}, [("resolvent-vs-time-kernel", all(r[-1] <= 1e-4 for r in rows))])


def exp_fk2(cfg: ExperimentConfig) -> Outcome:
    from .kernels import limit_semigroup_one
    from .mollifier import mollifier_from_spec
    from .stochastics import simulate_fk_two_particle
    phi = mollifier_from_spec(cfg.mollifier)
    beta = cfg.resolved_beta(phi)
    mc = cfg.mc()
    importance = None if cfg.importance in ("", "none") else cfg.importance
    rows = []
    for x in cfg.x_points:
        for t in cfg.t_grid:
            limit = limit_semigroup_one(t, x, beta)
            for eps in cfg.eps_grid:
                est = simulate_fk_two_particle(x, t, _schedule(phi, eps, cfg, beta), phi, mc, importance=importance)
                rows.append([x[0], x[1], t, eps, est.mean, est.std_error, limit])
    finite = all(math.isfinite(r[4]) for r in rows)
    return Outcome(["x1", "x2", "t", "eps", "fk_mean", "fk_se", "limit"], rows, {"beta": beta},
                   [("fk2-finite", finite)])


def exp_fkN(cfg: ExperimentConfig) -> Outcome:
    from .mollifier import mollifier_from_spec
    from .stochastics import simulate_fk_nbody
    phi = mollifier_from_spec(cfg.mollifier)
    beta = cfg.resolved_beta(phi)
    mc = cfg.mc()
    x0 = np.asarray(cfg.x_points, dtype=float)
    rows = []
    for t in cfg.t_grid:
        for eps in cfg.eps_grid:
            est = simulate_fk_nbody(x0, t, _schedule(phi, eps, cfg, beta), phi, mc)
            rows.append([len(x0), t, eps, est.mean, est.std_error, int(est.heavy_tail)])
    return Outcome(["N", "t", "eps", "fk_mean", "fk_se", "heavy_tail"], rows, {"beta": beta},
                   [("fkN-finite", all(math.isfinite(r[3]) for r in rows))])


def exp_bessel_validate(cfg: ExperimentConfig) -> Outcome:
    from .acceptance import criterion_5
    chk = criterion_5(n_paths=cfg.n_paths, seed=cfg.seed)
    rows = [[k, v["exact"], v["mc"], v["se"], v["z"]] for k, v in chk.data.items() if k != "representations"]
    return Outcome(["case", "closed_form", "mc_mean", "mc_se", "z"], rows,
                   {"representation_error": chk.data.get("representations")}, [(chk.name, chk.passed)])


def exp_exponent_identity(cfg: ExperimentConfig) -> Outcome:
    from .kernels import exponent_identity_I
    from .mollifier import compute_beta, mollifier_from_spec
    phi = mollifier_from_spec(cfg.mollifier)
    beta = compute_beta(phi, cfg.lam)
    rows = []
    for mult in (1.0, 2.0, 4.0):
        for b in cfg.b_grid:
            val = exponent_identity_I(mult * beta, b, phi, cfg.lam)
            rows.append([mult, b, val, 0.5 * math.log(mult), abs(val - 0.5 * math.log(mult))])
    spread = max((abs(r1[2] - r0[2]) for r0 in rows for r1 in rows if r0[0] == r1[0]), default=0.0)
    return Outcome(["q_over_beta", "b", "I", "half_log_q_over_beta", "abs_err"], rows,
                   {"beta": beta, "b_spread": spread},
                   [("exponent-identity", all(r[4] <= 1e-5 for r in rows)), ("b-independence", spread <= 1e-5)])


def exp_phib(cfg: ExperimentConfig) -> Outcome:
    from .kernels import phi_b_remainder
    q = cfg.q_grid[0]
    rows = [[b, eps, phi_b_remainder(eps, b, q)] for b in cfg.b_grid for eps in cfg.eps_grid]
    ok = True
    for b in cfg.b_grid:
        rem = [r[2] for r in rows if r[0] == b]
        ok &= all(r1 < r0 for r0, r1 in zip(rem, rem[1:]))
    return Outcome(["b", "eps", "remainder_over_b"], rows, {"q": q}, [("phib-remainder-decreasing", ok)])


def exp_series(cfg: ExperimentConfig) -> Outcome:
    from .multiparticle import SeriesBoundViolation, limit_series_terms
    beta = cfg.resolved_beta()
    x0 = np.asarray(cfg.x_points, dtype=float)
    t = cfg.t_grid[0]
    try:
        res = limit_series_terms(len(x0), x0, t, beta, m_max=cfg.m_max)
        ok = True
    except SeriesBoundViolation:
        res = limit_series_terms(len(x0), x0, t, beta, m_max=cfg.m_max, check_bounds=False)
        ok = False
    rows = [[m, term, err, bound] for m, (term, err, bound) in enumerate(zip(res.terms, res.errors, res.bounds))]
    return Outcome(["m", "term", "error", "bound"], rows,
                   {"beta": beta, "partial_sum": res.partial_sum, "log_tail_bound": res.log_tail_bound,
                    "tail": res.tail_label}, [("series-term-bounds", ok)])


def exp_convergence(cfg: ExperimentConfig) -> Outcome:
    from .kernels import limit_semigroup_one
    from .mollifier import mollifier_from_spec
    from .stochastics import simulate_fk_two_particle
    phi = mollifier_from_spec(cfg.mollifier)
    beta = cfg.resolved_beta(phi)
    x, t = cfg.x_points[0], cfg.t_grid[0]
    limit = limit_semigroup_one(t, x, beta)
    mc = cfg.mc()
    rows = []
    for eps in cfg.eps_grid:
        est = simulate_fk_two_particle(x, t, _schedule(phi, eps, cfg, beta), phi, mc, importance="ground-state")
        rows.append([eps, est.mean, est.std_error, limit, abs(est.mean - limit)])
    ok = all(b[4] <= a[4] + 3.0 * math.hypot(a[2], b[2]) for a, b in zip(rows, rows[1:]))
    return Outcome(["eps", "fk_mean", "fk_se", "limit", "distance"], rows, {"beta": beta},
                   [("convergence-trend", ok)])


def exp_selftest(cfg: ExperimentConfig) -> Outcome:
    from .acceptance import run_all
    checks = run_all(skip=cfg.skip, report=lambda line: print(line, file=sys.stderr, flush=True))
    rows = [[c.name, int(c.passed), c.runtime, c.budget, c.detail] for c in checks]
    return Outcome(["criterion", "passed", "runtime_s", "budget_s", "detail"], rows, {},
                   [(c.name, c.passed) for c in checks])


EXPERIMENTS = {
    "constants": exp_constants, "sbeta": exp_sbeta, "kernel": exp_kernel, "fk2": exp_fk2, "fkN": exp_fkN,
    "bessel-validate": exp_bessel_validate, "exponent-identity": exp_exponent_identity,
    "phib-asymptotics": exp_phib, "series": exp_series, "convergence": exp_convergence, "selftest": exp_selftest,
}

# per-experiment defaults that differ from the global ones
EXPERIMENT_DEFAULTS = {
    "kernel": {"q_grid": (), "x_points": ((1.0, 0.0), (0.5, 0.5)), "z_points": ((-1.0, 0.0), (0.3, -0.8))},
    "fkN": {"x_points": ((0.0, 0.0), (1.0, 0.0), (0.0, 1.5))},
    "series": {"x_points": ((0.0, 0.0), (1.0, 0.0), (0.0, 1.5)), "lam": -1.0},
    "phib-asymptotics": {"eps_grid": (1e-2, 1e-3, 1e-4), "q_grid": (1.0,)},
    "constants": {"eps_grid": (0.2, 0.1, 0.05, 0.02, 1e-2, 1e-3, 1e-4)},
}


# ---------------------------------------------------------------- output

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def write_outputs(out_dir: str, name: str, csv_text: str, meta: dict) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    stem = f"{name}-{stamp}"
    k = 1
    while (out / f"{stem}.csv").exists() or (out / f"{stem}.json").exists():
        stem = f"{name}-{stamp}-{k}"
        k += 1
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    csv_path.write_text(csv_text)
    meta = dict(meta, csv=csv_path.name)
    json_path.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bosekit", description="Numerical experiments for critical 2D delta-Bose gas semigroups.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="config file with [experiment], [mollifier], [grids] and [mc] sections")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--mollifier", help="e.g. bump:k=2,R=1 or twobump:k=2,R=1,offset=0.3")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--beta", help='number or "derive"')
    p.add_argument("--eps", dest="eps_grid", type=_floats)
    p.add_argument("--t", dest="t_grid", type=_floats)
    p.add_argument("--q", dest="q_grid", type=_floats)
    p.add_argument("--b", dest="b_grid", type=_floats)
    p.add_argument("--x", dest="x_points", type=_points, help="points as x1,x2;y1,y2")
    p.add_argument("--z", dest="z_points", type=_points)
    p.add_argument("--paths", dest="n_paths", type=int)
    p.add_argument("--streams", dest="n_streams", type=int)
    p.add_argument("--dt-factor", dest="dt_factor", type=float)
    p.add_argument("--importance")
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--skip", type=_ints, help="selftest: criteria numbers to skip")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = dict(EXPERIMENT_DEFAULTS.get(args.subcommand, {}))
    if args.config:
        values.update(load_config(args.config))
    flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config") and v is not None}
    values.update(flags)
    values["experiment"] = args.subcommand
    cfg = ExperimentConfig(**values)
    from .mollifier import mollifier_from_spec
    try:
        mollifier_from_spec(cfg.mollifier)
        if cfg.beta != "derive":
            float(cfg.beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.n_paths < 1 or cfg.n_streams < 1:
        raise ConfigError("paths and streams must be positive")
    if len(cfg.x_points) == 0:
        raise ConfigError("need at least one x point")
    return cfg


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = resolve_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    t0 = time.perf_counter()
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        outcome = EXPERIMENTS[cfg.experiment](cfg)
    except ValueError as exc:
        # domain errors from bad parameter combinations are configuration problems
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - t0
    meta = {"version": __version__, "experiment": cfg.experiment, "config": cfg.as_dict(), "seed": cfg.seed,
            "started_utc": started, "wall_clock_s": elapsed, "header": outcome.header,
            "assertions": {name: bool(ok) for name, ok in outcome.assertions}, **outcome.extra}
    csv_path, json_path = write_outputs(cfg.out, cfg.experiment, render_csv(outcome.header, outcome.rows), meta)
    print(csv_path)
    print(json_path)
    for name, ok in outcome.assertions:
        if not ok:
            print(f"assertion failed: {name}", file=sys.stderr)
            return 1
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))
