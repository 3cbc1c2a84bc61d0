"""VQE optimisation and the three-stage warm-start sweep.

Stage 1 runs ``n_restarts`` random initialisations per (g, p). Stage 2 adds
one depth-extrapolated run per (g, p), walking up the depth grid. Stage 3
adds one cross-g run per (g, p), seeded by the record whose stored
sub-Hamiltonian expectations score best at the target g.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize as _scipy_minimize

from .analysis import ORDER_PARAMS, order_parameter
from .flo_sim import FermionCircuit
from .model import ModelInstance, build_model, coefficients
from .qudit_sim import N_BOUNDARY, SpinCircuit

log = logging.getLogger(__name__)

STRATEGIES = ("random", "depth_extrapolated", "cross_g")
STAGE_STRATEGY = {1: "random", 2: "depth_extrapolated", 3: "cross_g"}


def make_simulator(model: ModelInstance):
    return FermionCircuit(model) if model.is_fermionic else SpinCircuit(model)


@dataclass
class MinimizeOptions:
    tol_g: float = 1e-9
    tol_f: float = 1e-12
    max_iters: int = 2000
    memory: int = 10
    max_restarts: int = 3
    order_params: tuple[str, ...] | None = None


@dataclass
class RunRecord:
    model: str
    lattice: list
    g: float
    param_name: str
    p: int
    seed: int
    init_strategy: str
    theta_final: list
    sub_expectations: list
    energy: float
    order_params: dict
    iterations: int
    grad_norm_final: float
    converged: bool
    wall_time: float
    initial_energy: float = float("nan")
    stage: int = 1
    restart: int = 0
    g_index: int = 0
    best: bool = False
    exact_ref: dict | None = None

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.g_index, self.p, self.restart, self.stage)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)


# ---------------------------------------------------------------------------
# single optimisation

class _Tracker:
    """Objective wrapper that remembers the lowest energy seen."""

    def __init__(self, sim, g, p):
        self.sim, self.g, self.p = sim, g, p
        self.best_x = None
        self.best_e = np.inf
        self.best_grad = None
        self.calls = 0

    def __call__(self, x):
        e, grad = self.sim.energy_and_gradient(self.g, x, self.p)
        self.calls += 1
        if e < self.best_e:
            self.best_e, self.best_x, self.best_grad = e, x.copy(), grad
        return e, grad


def minimize(model: ModelInstance, g, p: int, theta0, opts: MinimizeOptions | None = None, *,
             sim=None, seed: int = 0, init_strategy: str = "random", exact=None) -> RunRecord:
    """L-BFGS descent from theta0; never raises on optimiser failure.

    On an abnormal line-search exit the optimiser restarts from the best
    iterate (discarding its curvature memory) up to ``max_restarts`` times;
    if that still fails the record has ``converged=False`` and carries the
    best iterate found.
    """
    opts = opts or MinimizeOptions()
    sim = sim or make_simulator(model)
    x0 = np.asarray(theta0, dtype=float)
    if x0.shape != (sim.n_params(p),):
        raise ValueError(f"theta0 has {x0.size} entries, expected {sim.n_params(p)} for p={p}")
    t0 = time.perf_counter()
    track = _Tracker(sim, g, p)
    e_init, _ = track(x0)
    iters, converged = 0, False
    x = x0
    for attempt in range(opts.max_restarts + 1):
        budget = opts.max_iters - iters
        if budget <= 0 or x.size == 0:
            converged = x.size == 0
            break
        res = _scipy_minimize(
            track, x, jac=True, method="L-BFGS-B",
            options={"maxcor": opts.memory, "gtol": opts.tol_g, "ftol": opts.tol_f,
                     "maxiter": budget, "maxls": 40},
        )
        iters += int(res.nit)
        if res.success:
            converged = True
            break
        if res.status == 1:  # iteration limit
            break
        log.debug("restart %d after: %s", attempt + 1, res.message)
        x = track.best_x
    x_best = track.best_x
    state = sim.run(x_best, p)
    subs = sim.sub_expectations(state)
    energy = float(coefficients(model, g) @ subs)
    kinds = opts.order_params if opts.order_params is not None else ORDER_PARAMS[model.kind]
    ops = {k: order_parameter(state, k, model) for k in kinds}
    exact_ref = None
    if exact is not None:
        from .exact_oracle import ground_space_fidelity

        exact_ref = {"E0": exact.energy, "fidelity": ground_space_fidelity(state, exact),
                     "degeneracy": exact.degeneracy}
    return RunRecord(
        model=model.kind, lattice=list(model.shape), g=float(model.params(g).value),
        param_name=model.param_name, p=int(p), seed=int(seed), init_strategy=init_strategy,
        theta_final=[float(v) for v in x_best], sub_expectations=[float(v) for v in subs],
        energy=energy, order_params=ops, iterations=iters,
        grad_norm_final=float(np.linalg.norm(track.best_grad)), converged=bool(converged),
        wall_time=time.perf_counter() - t0, initial_energy=float(e_init), exact_ref=exact_ref,
    )


def random_init(model: ModelInstance, p: int, rng: np.random.Generator, bound_scale: float = 1.0) -> np.ndarray:
    """Angles uniform on [0, bound_scale / p]; BBC boundary angles uniform on [0, pi]."""
    theta = rng.uniform(0.0, bound_scale / p, size=p * model.k)
    if model.kind == "bbc":
        theta = np.concatenate([theta, rng.uniform(0.0, np.pi, size=N_BOUNDARY)])
    return theta


# ---------------------------------------------------------------------------
# warm starts

def _split(rec: RunRecord, k: int):
    x = np.asarray(rec.theta_final, dtype=float)
    return x[: rec.p * k].reshape(rec.p, k), x[rec.p * k :]


def smooth_resample(theta: np.ndarray, p: int) -> np.ndarray:
    """Resample a (p_src, k) angle table to p layers over the layer index l/p.

    Each column is a monotone cubic (PCHIP) in ``l / p_src``, evaluated at
    ``l / p``, extrapolating below the first source layer.
    """
    p_src, k = theta.shape
    if p_src == 1:
        return np.repeat(theta, p, axis=0)
    x_src = np.arange(1, p_src + 1) / p_src
    x_new = np.arange(1, p + 1) / p
    return PchipInterpolator(x_src, theta, axis=0, extrapolate=True)(x_new)


def zero_pad(theta: np.ndarray, p: int) -> np.ndarray:
    p_src, k = theta.shape
    return np.vstack([theta, np.zeros((p - p_src, k))])


def _rank(rec: RunRecord):
    return (rec.energy, rec.seed)


def warm_start_candidates(history, target, *, depth_modes=("smooth", "zero_pad"), cross_g: bool = True) -> list[tuple[str, np.ndarray]]:
    """Warm-start vectors for ``target = (model, g, p)``.

    Returns ``(name, x)`` pairs in the fixed order smooth-resample, zero-pad,
    cross-g. Depth extrapolation uses the lowest-energy record at the same g
    and a smaller depth. Cross-g scores every record at depth p and a
    different g by ``c(target g) . sub_expectations``. Ties go to the lower
    (energy, seed).
    """
    model, g, p = target
    gval = model.params(g).value
    k = model.k
    history = [r for r in history if r.model == model.kind]
    out = []
    lower = [r for r in history if np.isclose(r.g, gval, rtol=0, atol=1e-12) and r.p < p]
    if lower and depth_modes:
        src = min(lower, key=_rank)
        theta, extra = _split(src, k)
        for mode in depth_modes:
            if mode == "smooth":
                out.append(("smooth", np.concatenate([smooth_resample(theta, p).ravel(), extra])))
            elif mode == "zero_pad":
                out.append(("zero_pad", np.concatenate([zero_pad(theta, p).ravel(), extra])))
            else:
                raise ValueError(f"unknown depth-extrapolation mode {mode!r}")
    if cross_g:
        same_p = [r for r in history if r.p == p and not np.isclose(r.g, gval, rtol=0, atol=1e-12)]
        if same_p:
            c = coefficients(model, g)
            scored = min(same_p, key=lambda r: (float(c @ np.asarray(r.sub_expectations)), r.energy, r.seed))
            out.append(("cross_g", np.asarray(scored.theta_final, dtype=float)))
    return out


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepConfig:
    model: str
    size: object
    g_grid: list
    p_grid: list
    n_restarts: int = 5
    seed: int = 0
    depth_warm_start: bool = True
    cross_g_warm_start: bool = True
    depth_mode: str = "auto"  # smooth | zero_pad | auto
    compute_exact: bool = False
    order_params: list | None = None
    constants: dict = field(default_factory=dict)
    init_bound: float = 1.0
    optimizer: dict = field(default_factory=dict)
    workers: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        if not len(self.g_grid) or not len(self.p_grid):
            raise ValueError("g_grid and p_grid must be non-empty")
        if any(b <= a for a, b in zip(self.p_grid, self.p_grid[1:])):
            raise ValueError(f"p_grid must be strictly increasing, got {self.p_grid}")
        if min(self.p_grid) < 1:
            raise ValueError("depths must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if self.init_bound <= 0:
            raise ValueError("init bound must be > 0")
        if self.depth_mode not in ("smooth", "zero_pad", "auto"):
            raise ValueError(f"unknown depth_mode {self.depth_mode!r}")

    def build_model(self) -> ModelInstance:
        return build_model(self.model, self.size, constants=self.constants or None)

    def options(self) -> MinimizeOptions:
        opts = MinimizeOptions(**self.optimizer)
        if self.order_params is not None:
            opts.order_params = tuple(self.order_params)
        return opts


def task_seed(base: int, g_index: int, p: int, restart: int, stage: int) -> int:
    return int(np.random.SeedSequence([base, g_index, p, restart, stage]).generate_state(1, np.uint32)[0])


# per-process simulator cache; workers rebuild from the config
_WORKER: dict = {}


def _context(cfg: SweepConfig):
    key = (cfg.model, str(cfg.size), repr(sorted(cfg.constants.items())))
    if _WORKER.get("key") != key:
        model = cfg.build_model()
        _WORKER.update(key=key, model=model, sim=make_simulator(model), exact={})
    return _WORKER["model"], _WORKER["sim"], _WORKER["exact"]


def _exact_for(cfg, g_index):
    model, _, cache = _context(cfg)
    g = cfg.g_grid[g_index]
    if g not in cache:
        from .exact_oracle import ground_space

        cache[g] = ground_space(model, g)
    return cache[g]


def _run_task(cfg: SweepConfig, task: dict) -> RunRecord:
    model, sim, _ = _context(cfg)
    g_index, p, restart, stage = task["g_index"], task["p"], task["restart"], task["stage"]
    g = cfg.g_grid[g_index]
    seed = task_seed(cfg.seed, g_index, p, restart, stage)
    x0 = task.get("x0")
    strategy = task.get("strategy", STAGE_STRATEGY[stage])
    if x0 is None:
        x0 = random_init(model, p, np.random.default_rng(seed), cfg.init_bound)
        strategy = "random"
    exact = _exact_for(cfg, g_index) if cfg.compute_exact else None
    rec = minimize(model, g, p, np.asarray(x0), cfg.options(), sim=sim, seed=seed,
                   init_strategy=strategy, exact=exact)
    rec.stage, rec.restart, rec.g_index = stage, restart, g_index
    return rec


def _choose_depth_start(cfg, model, sim, history, g, p):
    modes = {"smooth": ("smooth",), "zero_pad": ("zero_pad",), "auto": ("smooth", "zero_pad")}[cfg.depth_mode]
    cands = warm_start_candidates(history, (model, g, p), depth_modes=modes, cross_g=False)
    if not cands:
        return None
    if len(cands) == 1:
        return cands[0][1]
    # auto: start from whichever extrapolation is lower in energy
    energies = [sim.energy(g, x, p) for _, x in cands]
    return cands[int(np.argmin(energies))][1]


def mark_best(records) -> list:
    """Flag the lowest-(energy, seed) record of every (g, p) cell."""
    cells = {}
    for r in records:
        r.best = False
        cell = (r.g_index, r.p)
        if cell not in cells or _rank(r) < _rank(cells[cell]):
            cells[cell] = r
    for r in cells.values():
        r.best = True
    return records


def run_sweep(cfg: SweepConfig, store=None, *, workers: int | None = None, progress=None) -> list[RunRecord]:
    """Run (or resume) the three-stage pipeline.

    ``store`` (optional) must provide ``records()`` and ``append(record)``;
    records already in it are kept and their keys skipped. Within a stage
    tasks run in parallel on ``workers`` processes, results are merged in
    task order, and every record is appended as soon as its batch finishes.
    """
    workers = workers or cfg.workers or int(os.environ.get("PHASESKETCH_WORKERS", "1"))
    model, sim, _ = _context(cfg)
    done = {r.key: r for r in (store.records() if store is not None else [])}
    records = list(done.values())
    pool = ProcessPoolExecutor(workers) if workers > 1 else None

    def execute(tasks):
        tasks = [t for t in tasks if (t["g_index"], t["p"], t["restart"], t["stage"]) not in done]
        if not tasks:
            return
        if pool is None:
            results = (_run_task(cfg, t) for t in tasks)
        else:
            results = pool.map(_run_task, [cfg] * len(tasks), tasks)
        for rec in results:
            done[rec.key] = rec
            records.append(rec)
            if store is not None:
                store.append(rec)
            if progress:
                progress(rec)

    n_g = len(cfg.g_grid)
    try:
        execute([
            {"g_index": gi, "p": p, "restart": r, "stage": 1}
            for gi in range(n_g) for p in cfg.p_grid for r in range(cfg.n_restarts)
        ])
        if cfg.depth_warm_start:
            for p in cfg.p_grid:
                tasks = []
                for gi in range(n_g):
                    if (gi, p, 0, 2) in done:
                        continue
                    hist = [r for r in records if r.g_index == gi and r.stage in (1, 2)]
                    x0 = _choose_depth_start(cfg, model, sim, hist, cfg.g_grid[gi], p)
                    tasks.append({"g_index": gi, "p": p, "restart": 0, "stage": 2,
                                  "x0": None if x0 is None else list(x0)})
                execute(tasks)
        if cfg.cross_g_warm_start:
            prior = [r for r in records if r.stage in (1, 2)]
            tasks = []
            for gi in range(n_g):
                for p in cfg.p_grid:
                    if (gi, p, 0, 3) in done:
                        continue
                    cands = warm_start_candidates(prior, (model, cfg.g_grid[gi], p), depth_modes=(), cross_g=True)
                    tasks.append({"g_index": gi, "p": p, "restart": 0, "stage": 3,
                                  "x0": list(cands[0][1]) if cands else None})
            execute(tasks)
    finally:
        if pool is not None:
            pool.shutdown()
    records.sort(key=lambda r: (r.stage, r.g_index, r.p, r.restart))
    return mark_best(records)


def best_energies(records, stages=(1, 2, 3)) -> dict:
    """{(g, p): lowest energy} over the given stages."""
    out = {}
    for r in records:
        if r.stage in stages:
            cell = (r.g, r.p)
            out[cell] = min(out.get(cell, np.inf), r.energy)
    return out


def best_records(records, stages=(1, 2, 3)) -> dict:
    out = {}
    for r in records:
        if r.stage in stages:
            cell = (r.g, r.p)
            if cell not in out or _rank(r) < _rank(out[cell]):
                out[cell] = r
    return out
