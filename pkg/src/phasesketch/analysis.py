"""Phase-diagram signals from VQE records.

Order parameters of simulator states, the depth derivative of the best VQE
energy, derivatives along the g grid, transition locators and the
exponential depth fit ``E(p) = a exp(-gamma p) + E0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .flo_sim import MajoranaCovariance, coop as _coop
from .model import SPIN1_DOT, ModelError, ModelInstance
from .qudit_sim import StateVector, _apply_local

ORDER_PARAMS = {
    "tfim-1d": ("m_z",),
    "tfim-2d": ("m_z",),
    "bbc": ("string", "dimer", "spin_corr"),
    "ssh-2d": ("coop",),
}
_SPIN1_SZ = np.array([1.0, 0.0, -1.0])


class GridError(ValueError):
    def __init__(self, message, holes):
        super().__init__(f"{message}: missing cells {holes}")
        self.holes = holes


# ---------------------------------------------------------------------------
# order parameters

def _site_probs(state: StateVector) -> np.ndarray:
    return (np.abs(state.amps) ** 2).reshape((state.local_dim,) * state.n_sites)


def magnetization(state: StateVector) -> float:
    """``(1/N) sum_i <Z_i>``."""
    probs = _site_probs(state)
    n = state.n_sites
    total = 0.0
    for i in range(n):
        marg = probs.sum(axis=tuple(a for a in range(n) if a != i))
        total += marg[0] - marg[1]
    return float(total / n)


def string_order(state: StateVector, i: int | None = None, j: int | None = None) -> float:
    """``<S^z_i exp(i pi sum_{i<k<j} S^z_k) S^z_j>``, default ends (2, L-1)."""
    L = state.n_sites
    i = 2 if i is None else i
    j = L - 1 if j is None else j
    if not 1 <= i < j <= L:
        raise ValueError(f"string endpoints need 1 <= i < j <= {L}, got ({i}, {j})")
    # the operator is diagonal in the S^z basis: one factor per site
    diag = np.ones(1)
    for site in range(1, L + 1):
        if site in (i, j):
            f = _SPIN1_SZ
        elif i < site < j:
            f = np.cos(np.pi * _SPIN1_SZ)
        else:
            f = np.ones(3)
        diag = np.multiply.outer(diag, f).ravel()
    return float(np.dot(diag, np.abs(state.amps) ** 2))


def bond_correlations(state: StateVector) -> np.ndarray:
    """``<S_i . S_{i+1}>`` for i = 1..L-1."""
    t = state.amps.reshape((state.local_dim,) * state.n_sites)
    out = []
    for i in range(state.n_sites - 1):
        applied = _apply_local(SPIN1_DOT, t, (i, i + 1), state.local_dim)
        out.append(np.vdot(t, applied).real)
    return np.array(out)


def dimerization(state: StateVector) -> float:
    """``1/(L-2) sum_{i=2}^{L-1} (-1)^i (S_{i-1}.S_i - S_i.S_{i+1})``."""
    b = bond_correlations(state)  # b[k] is the bond (k+1, k+2)
    L = state.n_sites
    if L < 3:
        raise ValueError("dimerisation needs at least 3 sites")
    total = sum((-1) ** i * (b[i - 2] - b[i - 1]) for i in range(2, L))
    return float(total / (L - 2))


def spin_correlation(state: StateVector) -> float:
    """``1/(L-1) sum_{i=2}^{L} S_{i-1}.S_i``."""
    return float(bond_correlations(state).mean())


def order_parameter(state, kind: str, model: ModelInstance) -> float:
    allowed = ORDER_PARAMS[model.kind]
    if kind not in allowed:
        raise ModelError(f"order parameter {kind!r} is not defined for {model.kind} (use {allowed})")
    if kind == "coop":
        if not isinstance(state, MajoranaCovariance):
            raise TypeError("coop needs a Gaussian state")
        val = _coop(state)
        bound = 1.0
    else:
        if not isinstance(state, StateVector):
            raise TypeError(f"{kind} needs a statevector")
        val = {"m_z": magnetization, "string": string_order, "dimer": dimerization,
               "spin_corr": spin_correlation}[kind](state)
        bound = {"m_z": 1.0, "string": 1.0, "dimer": 4.0, "spin_corr": 4.0}[kind]
    assert abs(val) <= bound + 1e-9, f"{kind} = {val} outside [-{bound}, {bound}]"
    return val


# ---------------------------------------------------------------------------
# depth and parameter derivatives

@dataclass
class DerivativeTable:
    """``values[r, c]`` is dE/dp at depth ``p_grid[r + 1]`` and ``g_grid[c]``."""

    g_grid: np.ndarray
    p_grid: np.ndarray
    values: np.ndarray
    normalized: bool = False
    holes: list = field(default_factory=list)

    @property
    def row_depths(self) -> np.ndarray:
        return self.p_grid[1:]

    def row(self, p: int) -> np.ndarray:
        return self.values[list(self.row_depths).index(p)]


def _energy_grid(energies, g_grid=None, p_grid=None):
    """Arrange {(g, p): E} (or (g, p, E) triples) on a rectangular grid."""
    cells = dict(energies) if isinstance(energies, dict) else {(g, p): e for g, p, e in energies}
    gs = np.array(sorted({g for g, _ in cells})) if g_grid is None else np.asarray(g_grid, float)
    ps = np.array(sorted({p for _, p in cells})) if p_grid is None else np.asarray(p_grid, int)
    grid = np.full((len(ps), len(gs)), np.nan)
    holes = []
    for r, p in enumerate(ps):
        for c, g in enumerate(gs):
            if (g, p) in cells:
                grid[r, c] = cells[(g, p)]
            else:
                holes.append((float(g), int(p)))
    return gs, ps, grid, holes


def energy_derivative_table(energies, normalize: bool = False, *, g_grid=None, p_grid=None,
                            allow_holes: bool = False) -> DerivativeTable:
    """Forward differences ``(E(p) - E(p_prev)) / (p - p_prev)`` over the depth grid.

    ``energies`` maps (g, p) to the best energy, or is an iterable of
    (g, p, E). Missing cells raise GridError unless ``allow_holes``, in which
    case affected entries are NaN and listed in ``holes``.
    """
    gs, ps, grid, holes = _energy_grid(energies, g_grid, p_grid)
    if holes and not allow_holes:
        raise GridError("incomplete (g, p) grid", holes)
    if len(ps) < 2:
        raise ValueError("need at least two depths for a depth derivative")
    if np.any(np.diff(ps) <= 0):
        raise ValueError("depth grid must be strictly increasing")
    vals = np.diff(grid, axis=0) / np.diff(ps)[:, None]
    table = DerivativeTable(gs, ps, vals, False, holes)
    return normalize_table(table) if normalize else table


def normalize_table(table: DerivativeTable) -> DerivativeTable:
    """Scale each depth row to max |value| = 1; all-zero rows stay zero."""
    vals = table.values.copy()
    for r, row in enumerate(vals):
        peak = np.nanmax(np.abs(row)) if np.isfinite(row).any() else 0.0
        if peak > 0:
            vals[r] = row / peak
    return DerivativeTable(table.g_grid, table.p_grid, vals, True, list(table.holes))


def g_derivative(series, g_grid) -> np.ndarray:
    """d(series)/dg: central differences inside, one-sided at both ends."""
    series = np.asarray(series, dtype=float)
    g_grid = np.asarray(g_grid, dtype=float)
    if len(g_grid) < 3 or series.shape[-1] != len(g_grid):
        raise ValueError("g derivative needs at least 3 grid points matching the series")
    if np.any(np.diff(g_grid) <= 0):
        raise ValueError("g grid must be strictly increasing")
    return np.gradient(series, g_grid, axis=-1, edge_order=1)


def median3(row) -> np.ndarray:
    """3-point running median; the two end points are left as they are."""
    row = np.asarray(row, dtype=float)
    out = row.copy()
    if len(row) >= 3:
        out[1:-1] = np.median(np.stack([row[:-2], row[1:-1], row[2:]]), axis=0)
    return out


def _extremum(row, mode):
    row = np.asarray(row, dtype=float)
    if not len(row) or not np.isfinite(row).any():
        raise ValueError("cannot locate an extremum in an empty row")
    if mode == "argmin":
        return int(np.nanargmin(row))
    if mode in ("argmax_abs", "argmax-of-abs"):
        return int(np.nanargmax(np.abs(row)))
    raise ValueError(f"unknown mode {mode!r}")


def locate_transition(table_or_series, mode: str = "argmin", g_grid=None, *, median_guard: bool = False):
    """Grid point of the extremum; ties go to the smaller g.

    A DerivativeTable gives a dict {p: g*}; a plain series (with ``g_grid``)
    gives a single g*. Rows may be smoothed with ``median3`` first.
    """
    if isinstance(table_or_series, DerivativeTable):
        t = table_or_series
        out = {}
        for p, row in zip(t.row_depths, t.values):
            row = median3(row) if median_guard else row
            out[int(p)] = float(t.g_grid[_extremum(row, mode)])
        return out
    if g_grid is None:
        raise ValueError("a bare series needs its g grid")
    series = np.asarray(table_or_series, dtype=float)
    if series.ndim == 2:
        return [float(np.asarray(g_grid)[_extremum(median3(r) if median_guard else r, mode)]) for r in series]
    row = median3(series) if median_guard else series
    return float(np.asarray(g_grid)[_extremum(row, mode)])


# ---------------------------------------------------------------------------
# exponential fit

@dataclass
class ExpFit:
    a: float
    gamma: float
    e0_fit: float
    residual: float


def _linear_part(p, e, gamma):
    basis = np.column_stack([np.exp(-gamma * p), np.ones_like(p)])
    coef, *_ = np.linalg.lstsq(basis, e, rcond=None)
    resid = e - basis @ coef
    return coef, float(np.sqrt(np.mean(resid**2)))


def exp_fit(energies, depths=None, *, gamma_max: float = 20.0) -> ExpFit:
    """Least-squares fit of ``a exp(-gamma p) + E0`` by variable projection.

    For each gamma the pair (a, E0) is a linear least-squares problem; gamma
    is scanned on a log grid and then refined with a bounded Brent search.
    """
    e = np.asarray(energies, dtype=float)
    p = np.arange(1, len(e) + 1, dtype=float) if depths is None else np.asarray(depths, dtype=float)
    if len(e) < 4 or len(p) != len(e):
        raise ValueError("exponential fit needs at least 4 (p, E) points")
    scale = max(1.0, float(np.abs(e).max()))
    if np.ptp(e) <= 1e-14 * scale:
        return ExpFit(0.0, 0.0, float(e.mean()), 0.0)
    if np.any(np.diff(e[np.argsort(p)]) > 1e-12 * scale):
        warnings.warn("energy series is not non-increasing in p", RuntimeWarning, stacklevel=2)

    grid = np.geomspace(1e-4, gamma_max, 400)
    res = np.array([_linear_part(p, e, g)[1] for g in grid])
    k = int(np.argmin(res))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best = minimize_scalar(lambda g: _linear_part(p, e, g)[1], bounds=(lo, hi), method="bounded",
                           options={"xatol": 1e-13 * max(1.0, hi)})
    gamma = float(best.x) if best.fun <= res[k] else float(grid[k])
    (a, e0), resid = _linear_part(p, e, gamma)
    return ExpFit(float(a), gamma, float(e0), resid)
