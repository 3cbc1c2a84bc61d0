"""Exact ground spaces for reference energies, fidelities and order parameters.

Spin models are diagonalised in the full Hilbert space (dense below
``DENSE_DIM``, Lanczos above); the SSH model is solved in the
single-particle picture and its ground space described by filled modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import flo_sim
from .model import ModelError, ModelInstance, coefficients
from .qudit_sim import StateVector

DEGENERACY_TOL = 1e-8
DENSE_DIM = 1024
MAX_DETERMINANTS = 20000


class OracleError(RuntimeError):
    pass


@dataclass
class GroundSpace:
    """Lowest-energy eigenspace.

    Spin models fill ``states`` (columns are orthonormal eigenvectors).
    The SSH model instead fills ``core`` (always occupied orbitals),
    ``shell`` (orbitals at the Fermi level) and ``shell_filled``; the ground
    space is spanned by the determinants choosing ``shell_filled`` shell
    orbitals, so ``degeneracy = C(len(shell), shell_filled)``.
    """

    energy: float
    degeneracy: int
    gap: float
    states: np.ndarray | None = None
    core: np.ndarray | None = None
    shell: np.ndarray | None = None
    shell_filled: int = 0
    levels: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_fermionic(self) -> bool:
        return self.core is not None

    def determinants(self):
        """Occupied-orbital matrices of an orthonormal basis of the ground space."""
        if not self.is_fermionic:
            raise TypeError("only fermionic ground spaces are made of determinants")
        if self.degeneracy > MAX_DETERMINANTS:
            raise OracleError(f"ground space of {self.degeneracy} determinants is too large to enumerate")
        for pick in combinations(range(self.shell.shape[1]), self.shell_filled):
            yield np.hstack([self.core, self.shell[:, list(pick)]])


# ---------------------------------------------------------------------------
# sparse assembly

def _local_factors(matrix: np.ndarray, d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Write a two-site matrix as a sum of products A (x) B by an operator SVD."""
    t = matrix.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = np.linalg.svd(t)
    keep = s > 1e-14 * max(1.0, s[0])
    return [
        ((u[:, r] * s[r]).reshape(d, d), vh[r].reshape(d, d))
        for r in np.flatnonzero(keep)
    ]


def _kron_chain(ops: dict[int, np.ndarray], n: int, d: int) -> sp.csr_matrix:
    out = None
    eye = sp.identity(d, format="csr", dtype=complex)
    for site in range(1, n + 1):
        f = sp.csr_matrix(ops[site]) if site in ops else eye
        out = f if out is None else sp.kron(out, f, format="csr")
    return out


def sparse_term(term, n: int, d: int) -> sp.csr_matrix:
    if len(term.support) == 1:
        return _kron_chain({term.support[0]: term.matrix}, n, d)
    i, j = term.support
    total = None
    for a, b in _local_factors(term.matrix, d):
        piece = _kron_chain({i: a, j: b}, n, d)
        total = piece if total is None else total + piece
    return total


@lru_cache(maxsize=8)
def sparse_subs(model: ModelInstance) -> tuple[sp.csr_matrix, ...]:
    if model.is_fermionic:
        raise ModelError("fermionic models are solved in the single-particle picture")
    n, d = model.n_sites, model.local_dim
    out = []
    for sub in model.subs:
        h = sum((sparse_term(t, n, d) for t in sub.terms), sp.csr_matrix((d**n, d**n), dtype=complex))
        h = h.tocsr()
        if h.nnz == 0 or abs(h.imag).max() == 0:
            h = h.real.tocsr()
        out.append(h)
    return tuple(out)


def sparse_hamiltonian(model: ModelInstance, g) -> sp.csr_matrix:
    return sum(ci * h for ci, h in zip(coefficients(model, g), sparse_subs(model)))


# ---------------------------------------------------------------------------
# ground spaces

def _spin_ground_space(model, g, tol):
    h = sparse_hamiltonian(model, g)
    dim = h.shape[0]
    if dim <= DENSE_DIM:
        e, v = np.linalg.eigh(h.toarray())
        return _pack(e, v, tol)
    rng = np.random.default_rng(0)
    v0 = rng.normal(size=dim)
    e, v = _lanczos(h, 6, v0, model, g)
    e0 = e[0]
    basis = v[:, e - e0 <= tol]
    # Lanczos can return fewer copies of a degenerate level than exist, so
    # the found states are shifted out of the way and the solve repeated
    # until the lowest remaining level clears the tolerance
    shift = 2.0 * abs(h).sum(axis=1).max() + 1.0
    k = 6
    while True:
        q = basis

        def matvec(x, q=q):
            return h @ x + shift * (q @ (q.conj().T @ x))

        op = LinearOperator(h.shape, matvec=matvec, dtype=np.result_type(h.dtype, q.dtype))
        k = min(k, dim - q.shape[1] - 1)
        e2, v2 = _lanczos(op, k, v0, model, g)
        new = e2 - e0 <= tol
        if not new.any():
            gap = float(e2[0] - e0)
            break
        if new.all() and k < dim - q.shape[1] - 1:
            k *= 2
        basis, _ = np.linalg.qr(np.hstack([q, v2[:, new]]))
    levels = np.concatenate([np.full(basis.shape[1], e0), e2])
    return GroundSpace(energy=float(e0), degeneracy=basis.shape[1], gap=gap, states=basis, levels=levels)


def _lanczos(op, k, v0, model, g):
    try:
        e, v = eigsh(op, k=k, which="SA", tol=1e-12, v0=v0)
    except ArpackNoConvergence as exc:
        raise OracleError(f"Lanczos did not converge for {model.kind} at g={g}") from exc
    order = np.argsort(e)
    return e[order], v[:, order]


def _pack(e, v, tol):
    deg = int(np.sum(e - e[0] <= tol))
    gap = float(e[deg] - e[0]) if deg < len(e) else 0.0
    states, _ = np.linalg.qr(v[:, :deg])
    return GroundSpace(energy=float(e[0]), degeneracy=deg, gap=gap, states=states, levels=e)


def _ssh_ground_space(model, g, tol, strict):
    t = flo_sim.single_particle_matrix(model, coefficients(model, g))
    e, v = np.linalg.eigh(t)
    ne = model.constants["n_electrons"]
    ef = e[ne - 1]
    core = e < ef - tol
    shell = np.abs(e - ef) <= tol
    above = e > ef + tol
    m = ne - int(core.sum())
    n_shell = int(shell.sum())
    if strict and m < n_shell:
        raise flo_sim.FermiLevelDegeneracy(f"{n_shell} degenerate modes at the Fermi level for {m} particles")
    # cheapest excitation out of the manifold: shell -> above, or core -> shell
    gaps = []
    if above.any():
        gaps.append(e[above][0] - ef)
    if m < n_shell and core.any():
        gaps.append(ef - e[core][-1])
    return GroundSpace(
        energy=float(e[:ne].sum()),
        degeneracy=math.comb(n_shell, m),
        gap=float(min(gaps)) if gaps else 0.0,
        core=v[:, core],
        shell=v[:, shell],
        shell_filled=m,
        levels=e,
    )


def ground_space(model: ModelInstance, g, degeneracy_tol: float = DEGENERACY_TOL, *, strict: bool = False) -> GroundSpace:
    """Exact ground space of H(g).

    For SSH a partly filled degenerate Fermi shell is kept as a degenerate
    many-body ground space; ``strict=True`` raises FermiLevelDegeneracy
    instead.
    """
    model.params(g)
    if model.is_fermionic:
        return _ssh_ground_space(model, g, degeneracy_tol, strict)
    return _spin_ground_space(model, g, degeneracy_tol)


def ground_space_fidelity(state, gs: GroundSpace) -> float:
    """Sum of squared overlaps of ``state`` with an orthonormal ground-space basis."""
    if isinstance(state, StateVector):
        if gs.is_fermionic:
            raise ValueError("statevector given for a fermionic ground space")
        if gs.states.shape[0] != state.amps.shape[0]:
            raise ValueError(f"dimension mismatch: {state.amps.shape[0]} vs {gs.states.shape[0]}")
        return float(min(1.0, np.sum(np.abs(gs.states.conj().T @ state.amps) ** 2)))
    if isinstance(state, flo_sim.MajoranaCovariance):
        if not gs.is_fermionic:
            raise ValueError("Gaussian state given for a spin ground space")
        if gs.core.shape[0] != state.n_modes:
            raise ValueError(f"mode mismatch: {state.n_modes} vs {gs.core.shape[0]}")
        total = sum(
            flo_sim.gaussian_fidelity(state, flo_sim.covariance_from_orbitals(phi), check=False)
            for phi in gs.determinants()
        )
        return float(min(1.0, total))
    raise TypeError(f"unsupported state type {type(state).__name__}")


def ground_states(gs: GroundSpace, local_dim: int | None = None, n_sites: int | None = None):
    """Iterate over an orthonormal ground-space basis as simulator states."""
    if gs.is_fermionic:
        for phi in gs.determinants():
            yield flo_sim.covariance_from_orbitals(phi)
    else:
        for col in gs.states.T:
            yield StateVector(np.ascontiguousarray(col, dtype=complex), local_dim, n_sites)


def ground_order_parameter(model: ModelInstance, gs: GroundSpace, kind: str) -> float:
    """Order parameter averaged over the ground space, ``Tr(P O) / dim P``.

    The average is basis independent, so degenerate ground spaces get a
    well-defined value.
    """
    from .analysis import order_parameter

    vals = [
        order_parameter(s, kind, model)
        for s in ground_states(gs, model.local_dim, model.n_sites)
    ]
    return float(np.mean(vals))
