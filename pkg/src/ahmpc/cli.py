"""Command-line front end: build terminal pairs, run the double-pendulum
experiments, emit CSV logs and a run summary.

CSV contract (bit-exact): `#`-prefixed resolved-config comments, then the
header ``t,th1,th2,om1,om2,u1,u2,N,resolves,status,Vf_end`` and one row per
time step with floats at 17 significant digits.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import albrekht, controller, ocp, plant, sos
from .poly import dump_bundle, quadratic_form

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CSV_HEADER = "t,th1,th2,om1,om2,u1,u2,N,resolves,status,Vf_end"


@dataclass(frozen=True)
class RunConfig:
    degree: int = 5
    steps: int = 150
    noise_seed: int | None = None
    N_init: int = 50
    M: int = 5
    L: int = 5
    retry_cap: int = 3
    alpha_scale: float = 10.0
    u_max: float = 5.0
    g: float = 9.8
    relative_damping: bool = False
    out: str = "run.csv"

    def validate(self) -> None:
        if self.degree not in (1, 3, 5):
            raise ConfigError(f"degree must be 1, 3 or 5, got {self.degree}")
        if self.steps < 0:
            raise ConfigError("steps must be nonnegative")
        if min(self.N_init, self.M, self.L, self.retry_cap) < 1:
            raise ConfigError("N_init, M, L, retry_cap must be positive")
        if self.alpha_scale <= 0 or self.u_max <= 0 or self.g <= 0:
            raise ConfigError("alpha_scale, u_max, g must be positive")


class ConfigError(ValueError):
    pass


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def parse_config_file(path) -> dict:
    """Flat `key = value` file; `#` comments; unknown keys rejected."""
    known = {f.name: f.type for f in fields(RunConfig)}
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def _parse_value(key: str, value: str):
    if key == "noise_seed":
        return None if value.lower() == "off" else int(value)
    if key == "relative_damping":
        try:
            return _BOOL[value.lower()]
        except KeyError:
            raise ConfigError(f"bad boolean for {key}: {value!r}") from None
    if key == "out":
        return value
    if key in ("degree", "steps", "N_init", "M", "L", "retry_cap"):
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"bad integer for {key}: {value!r}") from None
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"bad number for {key}: {value!r}") from None


def pendulum_params(cfg: RunConfig) -> plant.PendulumParams:
    return plant.PendulumParams(g=cfg.g, relative_damping=cfg.relative_damping)


def _series_and_completion(d: int, params: plant.PendulumParams):
    lag = quadratic_form(0.1 * np.eye(plant.STATE_DIM + plant.CONTROL_DIM)).truncate(2, d + 1)
    series = albrekht.albrekht(plant.taylor_dynamics(d, params), lag, d)
    completion = sos.complete_squares(series.V) if d > 1 else None
    return series, completion


def build_terminal(d: int, params: plant.PendulumParams | None = None) -> controller.TerminalPair:
    """d=1: LQR quadratic cost and linear feedback.  d=3/5: cost and feedback
    series to degrees (d+1, d), with the cost completed to a degree-2d sum of
    squares so the terminal cost is nonnegative everywhere."""
    if d not in (1, 3, 5):
        raise ConfigError(f"degree must be 1, 3 or 5, got {d}")
    params = params or plant.PendulumParams()
    series, completion = _series_and_completion(d, params)
    if d == 1:
        P = series.P
        return controller.TerminalPair(
            v=lambda x: 0.5 * x @ P @ x, v_grad=lambda x: P @ x,
            kappa=series.kappa_eval, degree=1, K=series.K)
    return controller.TerminalPair(
        v=completion.value, v_grad=completion.grad,
        kappa=series.kappa_eval, degree=d, K=series.K)


def dump_series(d: int, params: plant.PendulumParams, outdir) -> list[Path]:
    """Write the coefficient files (V, kappa_1..kappa_m, and W for d>1)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    series, completion = _series_and_completion(d, params)
    written = []
    path = outdir / f"V_d{d}.txt"
    dump_bundle(series.V, path)
    written.append(path)
    for s, kap in enumerate(series.kappa, start=1):
        path = outdir / f"kappa{s}_d{d}.txt"
        dump_bundle(kap, path)
        written.append(path)
    if completion is not None:
        path = outdir / f"W_d{d}.txt"
        sos.dump_completion(completion, path)
        written.append(path)
    return written


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class RunSummary:
    stabilized_step: int | None
    max_horizon: int
    kappa_only_steps: int

    def line(self) -> str:
        stab = "never" if self.stabilized_step is None else str(self.stabilized_step)
        return (f"stabilized_step={stab} max_horizon={self.max_horizon} "
                f"kappa_only_steps={self.kappa_only_steps}")


def run(cfg: RunConfig, out_path=None, echo=print) -> int:
    """Execute one experiment; returns the process exit code.  Rows are
    flushed as they are produced so a numerical failure leaves a usable
    partial log."""
    try:
        cfg.validate()
    except ConfigError as exc:
        echo(f"config error: {exc}")
        return EXIT_CONFIG

    params = pendulum_params(cfg)
    pair = build_terminal(cfg.degree, params)
    ctrl_cfg = controller.ControllerConfig(
        N_init=cfg.N_init, M=cfg.M, L=cfg.L, retry_cap=cfg.retry_cap,
        alpha=lambda s: s * s / cfg.alpha_scale, u_max=cfg.u_max)
    dynamics = ocp.Dynamics(f=lambda x, u: plant.discrete_dynamics(x, u, params),
                            jacobians=lambda x, u: plant.discrete_jacobians(x, u, params))
    lagrangian = ocp.quadratic_lagrangian(0.1 * np.eye(4), 0.1 * np.eye(2))
    u_max_vec = np.full(plant.CONTROL_DIM, cfg.u_max)

    def solve_fn(x, N, u_init):
        problem = ocp.OCPProblem(dynamics=dynamics, lagrangian=lagrangian,
                                 terminal=pair.terminal_cost(), N=N, x0=x,
                                 u_max=u_max_vec)
        return ocp.solve(problem, u_init)

    rng = np.random.default_rng(cfg.noise_seed) if cfg.noise_seed is not None else None
    x = np.array([0.9 * np.pi, 0.9 * np.pi, 0.0, 0.0])
    state = controller.ControllerState.fresh(ctrl_cfg)

    out_path = Path(out_path if out_path is not None else cfg.out)
    code = EXIT_OK
    rows = []
    with open(out_path, "w") as fh:
        for key in sorted(f.name for f in fields(RunConfig)):
            value = getattr(cfg, key)
            if key == "noise_seed" and value is None:
                value = "off"
            fh.write(f"# {key} = {value}\n")
        fh.write(CSV_HEADER + "\n")
        try:
            for t in range(cfg.steps):
                u, state, report = controller.controller_step(
                    x, state, solve_fn, pair, dynamics.f, lagrangian=lagrangian)
                vf_end = report.vf_trace[-1] if report.vf_trace else float("nan")
                row = (f"{t},{_fmt(x[0])},{_fmt(x[1])},{_fmt(x[2])},{_fmt(x[3])},"
                       f"{_fmt(u[0])},{_fmt(u[1])},{report.horizon},{report.resolves},"
                       f"{report.outcome},{_fmt(vf_end)}")
                fh.write(row + "\n")
                fh.flush()
                rows.append((x.copy(), report))
                x = plant.discrete_dynamics(x, u, params)
                if rng is not None:
                    x = plant.add_noise(x, rng)
                if not np.all(np.isfinite(x)):
                    raise FloatingPointError(f"state diverged at step {t}")
        except (FloatingPointError, ocp.RolloutError, albrekht.RiccatiError) as exc:
            echo(f"numerical failure: {exc}")
            code = EXIT_NUMERIC

    states = np.array([r[0] for r in rows]) if rows else np.zeros((0, 4))
    horizons = np.array([r[1].horizon for r in rows], dtype=int)
    log = controller.SimulationLog(states=states,
                                   controls=np.zeros((len(rows), 2)),
                                   horizons=horizons,
                                   reports=[r[1] for r in rows], events=state.events)
    summary = RunSummary(stabilized_step=log.stabilized_step(band=0.1),
                         max_horizon=log.max_horizon(),
                         kappa_only_steps=log.kappa_only_steps())
    echo(f"{out_path}: {summary.line()}")
    return code


def _parse_sweep(text: str) -> range:
    if not text.startswith("seeds="):
        raise ConfigError("sweep must look like seeds=A..B")
    lo, sep, hi = text[len("seeds="):].partition("..")
    if not sep:
        raise ConfigError("sweep must look like seeds=A..B")
    return range(int(lo), int(hi) + 1)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ahmpc",
                                 description="Adaptive-horizon MPC double-pendulum runner")
    ap.add_argument("--config", help="flat key=value config file")
    ap.add_argument("--degree", type=int, help="terminal pair degree: 1, 3 or 5")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--noise-seed", help="integer seed or 'off'")
    ap.add_argument("--out", help="CSV output path")
    ap.add_argument("--sweep", help="seeds=A..B: one run per seed, concurrent")
    ap.add_argument("--dump-series", help="directory for coefficient dumps")
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK

    try:
        values = parse_config_file(ns.config) if ns.config else {}
        if ns.degree is not None:
            values["degree"] = ns.degree
        if ns.steps is not None:
            values["steps"] = ns.steps
        if ns.noise_seed is not None:
            values["noise_seed"] = _parse_value("noise_seed", ns.noise_seed)
        if ns.out is not None:
            values["out"] = ns.out
        cfg = RunConfig(**values)
        cfg.validate()

        if ns.dump_series:
            for path in dump_series(cfg.degree, pendulum_params(cfg), ns.dump_series):
                print(f"wrote {path}")
            if not ns.sweep and ns.steps is None and ns.config is None:
                return EXIT_OK

        if ns.sweep:
            seeds = _parse_sweep(ns.sweep)
            base = Path(cfg.out)
            def one(seed):
                out = base.with_name(f"{base.stem}_seed{seed}{base.suffix}")
                return run(replace(cfg, noise_seed=seed), out_path=out)
            with ThreadPoolExecutor(max_workers=min(4, len(seeds))) as pool:
                codes = list(pool.map(one, seeds))
            return max(codes)
        return run(cfg)
    except (ConfigError, FileNotFoundError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
