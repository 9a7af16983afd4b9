"""Experiment orchestration: synthetic data, configs, logging, references.

Two experiment families are wired up:

* exp1 recovers a single reaction coefficient c (ground truth c = 1.0,
  started from c = 4.0, no TV term);
* exp2 recovers a nodal diffusion field a plus scalar c (piecewise-constant
  phantom on background 1.0, started from a = 1, c = 2, isotropic TV).

Configs are flat key-value text files; logs are CSV with one row per
logged iteration. Both round-trip exactly.
"""

from __future__ import annotations

import dataclasses
import os
import time
import warnings
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, boundary_data
from .pde import (
    DIFFUSION_REACTION,
    SCALAR_REACTION,
    ControlParam,
    assemble,
    solve_exact,
)
from .prox import RegConfig, estimate_K_norm
from .solver import (
    ConstantRule,
    InverseProblem,
    SolverState,
    initialize,
    iterate,
    make_problem,
    objective,
    relative_error,
    residuals_at,
)
from .splitting import Splitting

__all__ = [
    "ExperimentConfig",
    "MeasurementSet",
    "ReferenceSolution",
    "IterationLog",
    "table_config",
    "parse_config",
    "format_config",
    "load_config",
    "save_config",
    "validate_config",
    "grid_spec",
    "family_of",
    "reg_of",
    "splitting_of",
    "initial_control",
    "ground_truth",
    "phantom",
    "generate_data",
    "run_experiment",
    "compute_reference",
    "save_reference",
    "load_reference",
    "write_log",
    "read_log",
    "thread_limit",
]

LOG_COLUMNS = ("k", "t_sec", "c", "relerr", "J_exact", "J_inexact",
               "res_pde", "res_adj", "res_x", "res_y")


@dataclass
class ExperimentConfig:
    experiment: str          # "exp1" | "exp2"
    grid: str                # "coarse" | "fine" | node count as digits
    splitting: str           # full | jacobi | gauss_seidel | sor | quasi_cg
    iterations: int
    seed: int = 0
    alpha: float = 0.0
    beta: float = 1e2
    gamma: float = 0.0
    tau: float = 2.5e-2
    sigma: float = 1.0
    omega: float = 1.0
    lam: float = 0.1
    m: int = 6
    log_every: int = 100
    sor_relax: float = 1.0
    sor_base: str = "gauss_seidel"
    noise: float = 0.01
    timing: bool = True
    output: str = ""


@dataclass
class MeasurementSet:
    """Synthetic measurements z_i with the per-condition noise levels used."""

    z: np.ndarray          # (m, n^2)
    noise_std: np.ndarray  # (m,)
    seed: int


@dataclass
class ReferenceSolution:
    """Long-run full-inversion iterate standing in for the unknown optimum."""

    x: ControlParam
    iterations: int
    splitting: str = "full"


@dataclass
class IterationLog:
    k: int
    t_sec: float
    c: float
    relerr: float
    J_exact: float
    J_inexact: float
    res_pde: float
    res_adj: float
    res_x: float
    res_y: float


_TABLE = {
    # experiment, grid -> (alpha, gamma, tau, m, iterations)
    ("exp1", "coarse"): (1e-5, 0.0, 2.5e-2, 6, 20_000),
    ("exp1", "fine"): (1e-5, 0.0, 2.0e-3, 6, 125_000),
    ("exp2", "coarse"): (0.0, 1e-2, 2.5e-2, 10, 200_000),
    ("exp2", "fine"): (0.0, 1e-2, 1.0e-2, 10, 500_000),
}


def table_config(experiment: str, grid: str = "coarse",
                 splitting: str = "full", **overrides) -> ExperimentConfig:
    """Published parameter choices; custom grids inherit the coarse column."""
    column = grid if grid in ("coarse", "fine") else "coarse"
    alpha, gamma, tau, m, iters = _TABLE[(experiment, column)]
    cfg = ExperimentConfig(
        experiment=experiment, grid=str(grid), splitting=splitting,
        iterations=iters, alpha=alpha, beta=1e2, gamma=gamma, tau=tau,
        sigma=1.0, omega=1.0, lam=0.1, m=m,
    )
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def grid_spec(cfg: ExperimentConfig) -> GridSpec:
    sizes = {"coarse": 51, "fine": 101}
    n = sizes.get(cfg.grid)
    return GridSpec(n if n is not None else int(cfg.grid))


def family_of(cfg: ExperimentConfig) -> str:
    if cfg.experiment == "exp1":
        return SCALAR_REACTION
    if cfg.experiment == "exp2":
        return DIFFUSION_REACTION
    raise ValueError(f"unknown experiment {cfg.experiment!r}")


def reg_of(cfg: ExperimentConfig) -> RegConfig:
    return RegConfig(alpha=cfg.alpha, lam=cfg.lam, gamma=cfg.gamma)


def splitting_of(cfg: ExperimentConfig) -> Splitting:
    if cfg.splitting == "sor":
        return Splitting("sor", relax=cfg.sor_relax, base=cfg.sor_base)
    return Splitting(cfg.splitting)


def validate_config(cfg: ExperimentConfig) -> None:
    """Raise on inconsistent parameters; check the step-size condition."""
    family_of(cfg)
    grid = grid_spec(cfg)
    reg_of(cfg)
    splitting_of(cfg)
    if cfg.iterations < 0 or cfg.m <= 0 or cfg.m % 2 != 0:
        raise ValueError("need iterations >= 0 and an even, positive m")
    if cfg.log_every <= 0 or cfg.tau <= 0 or cfg.sigma <= 0:
        raise ValueError("log_every, tau and sigma must be positive")
    if not 0 < cfg.omega <= 1:
        raise ValueError("omega must lie in (0, 1]")
    if cfg.gamma > 0.0:
        knorm2 = estimate_K_norm(grid) ** 2
        if cfg.tau * cfg.sigma * knorm2 >= 1.0:
            raise ValueError(
                f"step-size condition violated: tau*sigma*||K||^2 = "
                f"{cfg.tau * cfg.sigma * knorm2:.3f} >= 1")
    elif cfg.tau * cfg.sigma * 8.0 >= 1.0:
        warnings.warn("tau*sigma*8 >= 1; the dual step condition would fail "
                      "if the TV term were enabled", stacklevel=2)


_BOOL = {"true": True, "false": False}


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    fields = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        raw[key] = value
    kwargs = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name not in raw:
            continue
        v = raw[f.name]
        if f.type == "int":
            kwargs[f.name] = int(v)
        elif f.type == "float":
            kwargs[f.name] = float(v)
        elif f.type == "bool":
            kwargs[f.name] = _BOOL[v.lower()]
        else:
            kwargs[f.name] = v
    missing = {"experiment", "grid", "splitting", "iterations"} - set(kwargs)
    if missing:
        raise ValueError(f"config is missing required keys: {sorted(missing)}")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_config(cfg))


def phantom(grid: GridSpec) -> np.ndarray:
    """Piecewise-constant diffusion phantom: background 1.0, a disk of value
    2.0 (radius 0.2, center (0.35, 0.65)) and a rectangle of value 0.5 over
    [0.55, 0.85] x [0.15, 0.4]."""
    coords = np.linspace(0.0, 1.0, grid.n)
    xg, yg = np.meshgrid(coords, coords)  # row i -> y, column j -> x
    a = np.ones((grid.n, grid.n))
    a[(xg - 0.35) ** 2 + (yg - 0.65) ** 2 <= 0.2**2] = 2.0
    a[(xg >= 0.55) & (xg <= 0.85) & (yg >= 0.15) & (yg <= 0.4)] = 0.5
    return a.ravel()


def ground_truth(cfg: ExperimentConfig, grid: GridSpec) -> ControlParam:
    if cfg.experiment == "exp1":
        return ControlParam(None, 1.0)
    return ControlParam(phantom(grid), 1.0)


def initial_control(cfg: ExperimentConfig, grid: GridSpec) -> ControlParam:
    if cfg.experiment == "exp1":
        return ControlParam(None, 4.0)
    return ControlParam(np.ones(grid.n_nodes), 2.0)


def generate_data(family: str, grid: GridSpec, x_hat: ControlParam, m: int,
                  seed: int, noise: float = 0.01) -> MeasurementSet:
    """Exact solves at the ground truth plus seeded Gaussian noise.

    The per-entry standard deviation is noise*||u_i||_2/sqrt(node count),
    so the noise vector's norm is ~ noise*||u_i||_2.
    """
    boundary = np.stack([boundary_data(grid, i + 1) for i in range(m)])
    u_hat = solve_exact(grid, assemble(family, grid, x_hat, boundary))
    rng = np.random.default_rng(seed)
    std = noise * np.linalg.norm(u_hat, axis=1) / np.sqrt(grid.n_nodes)
    z = u_hat.copy()
    if noise > 0.0:
        for i in range(m):
            z[i] += rng.normal(0.0, std[i], grid.n_nodes)
    return MeasurementSet(z=z, noise_std=std, seed=seed)


def build_problem(cfg: ExperimentConfig) -> InverseProblem:
    validate_config(cfg)
    grid = grid_spec(cfg)
    family = family_of(cfg)
    data = generate_data(family, grid, ground_truth(cfg, grid), cfg.m,
                         cfg.seed, cfg.noise)
    return make_problem(family, grid, data.z, cfg.beta, reg_of(cfg))


def thread_limit():
    """Context manager honoring the PDPAP_THREADS cap (best effort)."""
    value = os.environ.get("PDPAP_THREADS")
    if not value:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=int(value))


def _fmt(v: float) -> str:
    return repr(float(v))


def _log_row(problem: InverseProblem, state: SolverState, t_sec: float,
             reference: ControlParam | None) -> IterationLog:
    relerr = (float("nan") if reference is None
              else relative_error(problem.family, state.x, reference))
    res = residuals_at(problem, state)
    return IterationLog(
        k=state.k, t_sec=t_sec, c=state.x.c, relerr=relerr,
        J_exact=objective(problem, state.x),
        J_inexact=objective(problem, state.x, u=state.u_full(problem)),
        res_pde=res.pde, res_adj=res.adjoint, res_x=res.control,
        res_y=res.dual,
    )


def write_log(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in rows:
            fh.write(_format_row(row))


def _format_row(row: IterationLog) -> str:
    vals = [str(row.k)] + [_fmt(getattr(row, c)) for c in LOG_COLUMNS[1:]]
    return ",".join(vals) + "\n"


def read_log(path) -> list[IterationLog]:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != LOG_COLUMNS:
            raise ValueError("unexpected log header")
        for line in fh:
            parts = line.strip().split(",")
            rows.append(IterationLog(int(parts[0]),
                                     *(float(p) for p in parts[1:])))
    return rows


def run_experiment(cfg: ExperimentConfig,
                   reference: ControlParam | None = None,
                   csv_path=None):
    """Run the configured experiment, logging every log_every iterations.

    Wall-clock time covers solver iterations only (data generation and
    logging excluded); with timing disabled, t_sec is logged as 0.0 so
    repeated seeded runs produce bitwise-identical files.

    Returns (rows, final SolverState, InverseProblem).
    """
    problem = build_problem(cfg)
    grid = problem.grid
    rule = ConstantRule(cfg.tau, cfg.sigma, cfg.omega)
    splitting = splitting_of(cfg)
    state = initialize(problem, initial_control(cfg, grid), rule)

    path = csv_path if csv_path is not None else (cfg.output or None)
    fh = open(path, "w") if path else None
    if fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")

    def emit(row):
        rows.append(row)
        if fh:
            fh.write(_format_row(row))
            fh.flush()

    rows: list[IterationLog] = []
    elapsed = 0.0
    emit(_log_row(problem, state, 0.0, reference))
    try:
        with thread_limit():
            for k in range(1, cfg.iterations + 1):
                t0 = time.perf_counter()
                iterate(problem, state, rule, splitting)
                elapsed += time.perf_counter() - t0
                if k % cfg.log_every == 0 or k == cfg.iterations:
                    emit(_log_row(problem, state,
                                  elapsed if cfg.timing else 0.0, reference))
    finally:
        if fh:
            fh.close()
    return rows, state, problem


def compute_reference(cfg: ExperimentConfig, iterations: int,
                      path=None) -> ReferenceSolution:
    """Long full-inversion run whose final control serves as reference."""
    if iterations < cfg.iterations:
        raise ValueError("reference must run at least as long as the experiment")
    ref_cfg = dataclasses.replace(cfg, splitting="full", iterations=iterations,
                                  output="")
    _, state, _ = run_experiment(ref_cfg)
    ref = ReferenceSolution(x=state.x, iterations=iterations)
    if path is not None:
        save_reference(ref, path)
    return ref


def save_reference(ref: ReferenceSolution, path) -> None:
    payload = {"c": np.array(ref.x.c), "iterations": np.array(ref.iterations),
               "splitting": np.array(ref.splitting)}
    if ref.x.a is not None:
        payload["a"] = ref.x.a
    np.savez(path, **payload)


def load_reference(path) -> ReferenceSolution:
    with np.load(path, allow_pickle=False) as data:
        a = data["a"] if "a" in data else None
        return ReferenceSolution(
            x=ControlParam(a, float(data["c"])),
            iterations=int(data["iterations"]),
            splitting=str(data["splitting"]),
        )
