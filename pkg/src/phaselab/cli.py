"""Command-line experiments: flat key = value configs, seeded runs, CSV output.

    phaselab recover --set sparse --n 64 --k 3 --N 200 --seed 7
    phaselab stability --config curve.cfg --threads 4 --out curve.csv

Every CSV starts with ``# phaselab <version> config=<hash> seed=<seed>``; the
hash covers every setting except ``threads`` and ``out``, neither of which can
change the numbers.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import math
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .complexity import complexity_report, kappa_T
from .ensemble import Ensemble, EnsembleKind, fourth_moment_mc, isotropy_check, random_directions
from .forward import NoiseSpec, generate_instance
from .recovery import SolverSpec, error_sweep, recover
from .signal_set import SET_KINDS, make_set
from .stability import constants_grid, linear_compare, stability_curve
from .streams import make_rng

COMMANDS = ("ensemble-check", "complexity", "kappa", "stability", "recover", "sweep", "linear-compare")
CERTIFIERS = ("quadratic", "linear")
UNHASHED = ("threads", "out")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _grid(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    text = str(text).replace(" ", "")
    if text.lower() in ("", "none"):
        return ()
    return tuple(int(v) for v in text.split(","))


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


def _opt_str(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return str(text).strip()


@dataclass
class ExperimentConfig:
    command: str = "complexity"
    seed: int = 0
    set: str = "sparse"
    n: int = 64
    k: int = 4
    d: int = 1
    points: str | None = None
    ensemble: str = "gaussian"
    noise: str = "none"
    N: int = 1024
    N_grid: tuple[int, ...] = ()
    pairs: int = 100
    trials: int = 20
    samples: int = 100_000
    directions: int = 50
    tol: float = 0.02
    u: float = 1.0
    p: float | None = None
    solver: str = "pg"
    restarts: int = 20
    threshold: float | None = None
    certifier: str = "quadratic"
    calibration_N: int = 8192
    threads: int = 1
    out: str | None = None

    def to_text(self, hashed_only: bool = False) -> str:
        lines = []
        for f in fields(self):
            if hashed_only and f.name in UNHASHED:
                continue
            v = getattr(self, f.name)
            if v is None or v == ():
                text = "none"
            elif isinstance(v, tuple):
                text = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text(hashed_only=True).encode()).hexdigest()[:16]

    def grid(self) -> tuple[int, ...]:
        return self.N_grid if self.N_grid else (self.N,)

    # typed views, validated by validate()
    def signal_set(self):
        return make_set(self.set, self.n, self.k, self.d, self.points)

    def ensemble_obj(self) -> Ensemble:
        return Ensemble(EnsembleKind.parse(self.ensemble), self.n)

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec.parse(self.noise)

    def solver_spec(self) -> SolverSpec:
        return SolverSpec(method=self.solver, max_restarts=self.restarts)


CONVERTERS = {
    "command": str,
    "seed": int,
    "set": str,
    "n": int,
    "k": int,
    "d": int,
    "points": _opt_str,
    "ensemble": str,
    "noise": str,
    "N": int,
    "N_grid": _grid,
    "pairs": int,
    "trials": int,
    "samples": int,
    "directions": int,
    "tol": float,
    "u": float,
    "p": _opt_float,
    "solver": str,
    "restarts": int,
    "threshold": _opt_float,
    "certifier": str,
    "calibration_N": int,
    "threads": int,
    "out": _opt_str,
}
KEY_ALIASES = {"subcommand": "command", "n_grid": "N_grid", "calibration_n": "calibration_N"}


def _canonical_key(key: str) -> str:
    key = key.strip().replace("-", "_")
    if key in CONVERTERS:
        return key
    return KEY_ALIASES.get(key.lower(), key)


def parse_config_pairs(text: str) -> dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key = _canonical_key(key)
        if key not in CONVERTERS:
            raise ConfigError(key, "unknown key")
        out[key] = value.strip()
    return out


def build_config(values: dict, names: dict | None = None) -> ExperimentConfig:
    """Typed, validated config; ``names`` maps keys to how the user spelled them (e.g. --N-grid)."""
    names = names or {}
    if "seed" not in values or values["seed"] is None:
        raise ConfigError(names.get("seed", "seed"), "missing required key (seed fixes every output)")
    kwargs = {}
    for key, value in values.items():
        try:
            kwargs[key] = CONVERTERS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(names.get(key, key), f"cannot parse {value!r}: {exc}") from None
    cfg = ExperimentConfig(**kwargs)
    validate(cfg, names)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    return build_config(parse_config_pairs(text))


def validate(cfg: ExperimentConfig, names: dict | None = None) -> None:
    names = names or {}

    def fail(key, msg):
        raise ConfigError(names.get(key, key), msg)

    if cfg.command not in COMMANDS:
        fail("command", f"unknown subcommand {cfg.command!r} (expected {'|'.join(COMMANDS)})")
    if cfg.set not in SET_KINDS:
        fail("set", f"unknown set {cfg.set!r} (expected {'|'.join(SET_KINDS)})")
    try:
        cfg.ensemble_obj()
    except ValueError as exc:
        fail("ensemble", str(exc))
    try:
        cfg.noise_spec()
    except ValueError as exc:
        fail("noise", str(exc))
    try:
        cfg.solver_spec()
    except ValueError as exc:
        fail("solver" if "solver" in str(exc) else "restarts", str(exc))
    try:
        s = cfg.signal_set()
    except (ValueError, OSError) as exc:
        key = {"finite": "points", "block": "d"}.get(cfg.set, "k") if cfg.set != "sphere" else "n"
        fail(key, str(exc))
    if s.n != cfg.n:
        fail("n", f"points have dimension {s.n}, n is {cfg.n}")
    if cfg.seed < 0:
        fail("seed", "must be >= 0")
    for key in ("N", "pairs", "trials", "samples", "directions", "threads", "calibration_N"):
        if getattr(cfg, key) < 1:
            fail(key, "must be >= 1")
    if any(N < 2 for N in cfg.grid()):
        fail("N_grid" if cfg.N_grid else "N", "every N must be >= 2")
    if cfg.u < 1:
        fail("u", "must be >= 1")
    if cfg.p is not None and not 1 < cfg.p <= 2:
        fail("p", "must lie in (1, 2]")
    if cfg.certifier not in CERTIFIERS:
        fail("certifier", f"expected {'|'.join(CERTIFIERS)}")
    if not cfg.tol > 0:
        fail("tol", "must be positive")


# -- CSV ---------------------------------------------------------------------------

def _cell(key: str, v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ArithmeticError(f"non-finite value in column {key}")
        return repr(float(v))
    return str(v)


def render_csv(cfg: ExperimentConfig, columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# phaselab {__version__} config={cfg.digest()} seed={cfg.seed}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_cell(c, row[c]) for c in columns) + "\n")
    return buf.getvalue()


# -- subcommands ------------------------------------------------------------------

def _ensemble_check(cfg, rng):
    ens = cfg.ensemble_obj()
    dir_rng, iso_rng, m4_rng = rng.spawn(3)
    rep = isotropy_check(ens, random_directions(cfg.n, cfg.directions, dir_rng), cfg.samples, cfg.tol, iso_rng)
    m4, se = fourth_moment_mc(ens, cfg.samples, m4_rng)
    cols = ["ensemble", "n", "samples", "directions", "tol", "max_deviation", "passed",
            "fourth_moment", "fourth_moment_mc", "fourth_moment_se"]
    return cols, [{
        "ensemble": ens.kind.value, "n": cfg.n, "samples": cfg.samples, "directions": cfg.directions,
        "tol": cfg.tol, "max_deviation": rep.max_deviation, "passed": rep.passed,
        "fourth_moment": ens.fourth_moment, "fourth_moment_mc": m4, "fourth_moment_se": se,
    }]


def _complexity(cfg, rng):
    s, noise = cfg.signal_set(), cfg.noise_spec()
    cols = ["n", "k", "d", "N", "ell", "E", "rho", "Q", "QW", "betaN", "p", "source"]
    rows = []
    for N in cfg.grid():
        r = complexity_report(s, N, noise, p=cfg.p)
        rows.append({"n": cfg.n, "k": cfg.k, "d": cfg.d, "N": N, "ell": r.ell, "E": r.E, "rho": r.rho,
                     "Q": r.Q, "QW": r.QW, "betaN": r.betaN, "p": r.p, "source": r.source["ell"]})
    return cols, rows


def _kappa(cfg, rng):
    r = kappa_T(cfg.signal_set(), cfg.ensemble_obj(), cfg.pairs, cfg.samples, rng)
    cols = ["pairs", "samples", "mc_estimate", "se", "pz_lower", "second_moment", "small_ball_c", "argmin_index"]
    return cols, [{"pairs": r.pairs, "samples": cfg.samples, "mc_estimate": r.mc_estimate, "se": r.se,
                   "pz_lower": r.pz_lower, "second_moment": r.second_moment,
                   "small_ball_c": r.small_ball_c, "argmin_index": r.argmin_index}]


def _stability(cfg, rng):
    s, ens = cfg.signal_set(), cfg.ensemble_obj()
    cal_rng, grid_rng = rng.spawn(2)
    thr = cfg.threshold
    if thr is None:
        # half the mean constant at the calibration size
        col = CERTIFIERS.index(cfg.certifier)
        cal = constants_grid(s, ens, [cfg.calibration_N], cfg.trials, cfg.pairs, cal_rng, cfg.threads)
        thr = float(cal[cfg.calibration_N][:, col].mean() / 2.0)
    rows = stability_curve(s, ens, cfg.grid(), cfg.trials, cfg.pairs, thr, grid_rng, cfg.certifier, cfg.threads)
    cols = ["N", "rho", "mean_const", "min_const", "success_frac"]
    return cols, [vars(r) for r in rows]


def _recover(cfg, rng):
    s, ens, noise = cfg.signal_set(), cfg.ensemble_obj(), cfg.noise_spec()
    inst_rng, solve_rng = rng.spawn(2)
    inst = generate_instance(s, ens, noise, cfg.N, inst_rng)
    r = recover(inst, s, noise, cfg.u, cfg.solver_spec(), solve_rng, p=cfg.p)
    cols = ["N", "p", "threshold", "risk", "accepted", "restarts", "error"]
    return cols, [{"N": cfg.N, "p": r.p, "threshold": r.threshold, "risk": r.risk,
                   "accepted": r.accepted, "restarts": r.restarts_used, "error": r.error}]


def _sweep(cfg, rng):
    res = error_sweep(cfg.signal_set(), cfg.ensemble_obj(), cfg.noise_spec(), cfg.grid(), cfg.trials,
                      cfg.u, cfg.solver_spec(), rng, cfg.threads)
    cols = ["N", "median_error", "q25", "q75", "accept_rate", "n_accepted", "slope"]
    return cols, [dict(vars(r), slope=res.slope) for r in res.rows]


def _linear_compare(cfg, rng):
    res = linear_compare(cfg.signal_set(), cfg.ensemble_obj(), cfg.grid(), cfg.trials, cfg.pairs,
                         cfg.calibration_N, rng, threads=cfg.threads)
    cols = ["N", "rho", "quad_mean", "quad_success", "lin_mean", "lin_success",
            "quad_threshold", "lin_threshold", "quad_first", "lin_first"]
    rows = []
    for q, l in zip(res.quadratic, res.linear):
        rows.append({"N": q.N, "rho": q.rho, "quad_mean": q.mean_const, "quad_success": q.success_frac,
                     "lin_mean": l.mean_const, "lin_success": l.success_frac,
                     "quad_threshold": res.quad_threshold, "lin_threshold": res.lin_threshold,
                     "quad_first": res.quad_first if res.quad_first is not None else "-",
                     "lin_first": res.lin_first if res.lin_first is not None else "-"})
    return cols, rows


HANDLERS = {
    "ensemble-check": _ensemble_check,
    "complexity": _complexity,
    "kappa": _kappa,
    "stability": _stability,
    "recover": _recover,
    "sweep": _sweep,
    "linear-compare": _linear_compare,
}


def run(cfg: ExperimentConfig) -> str:
    """CSV text for a validated config; a pure function of everything but threads and out."""
    cols, rows = HANDLERS[cfg.command](cfg, make_rng(cfg.seed))
    return render_csv(cfg, cols, rows)


# -- argument parsing --------------------------------------------------------------

FLAGS = {
    "seed": "--seed", "threads": "--threads", "out": "--out",
    "set": "--set", "n": "--n", "k": "--k", "d": "--d", "points": "--points",
    "ensemble": "--ensemble", "noise": "--noise", "N": "--N", "N_grid": "--N-grid",
    "pairs": "--pairs", "trials": "--trials", "samples": "--samples", "directions": "--directions",
    "tol": "--tol", "u": "--u", "p": "--p", "solver": "--solver", "restarts": "--restarts",
    "threshold": "--threshold", "certifier": "--certifier", "calibration_N": "--calibration-N",
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phaselab", description="Phase retrieval experiments with seeded CSV output.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="FILE", help="flat key = value file; flags override it")
    for key, flag in FLAGS.items():
        ap.add_argument(flag, dest=key, default=argparse.SUPPRESS, metavar=key.upper())
    return ap


def config_from_args(argv=None) -> ExperimentConfig:
    args = vars(make_parser().parse_args(argv))
    values: dict = {}
    names: dict = {}
    path = args.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                values.update(parse_config_pairs(fh.read()))
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
    values["command"] = args.pop("command")
    for key, value in args.items():
        values[key] = value
        names[key] = FLAGS[key]
    return build_config(values, names)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        text = run(cfg)
    except ConfigError as exc:
        print(f"phaselab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"phaselab: {exc}", file=sys.stderr)
        return 3
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
