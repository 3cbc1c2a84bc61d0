"""Brute-force Jordan-Wigner statevector for small fermionic models.

An independent reference for the Gaussian backend: fermion operators are
built as sparse matrices on the full Fock space (site 1 is the most
significant qubit, occupied = |1>) and circuits are applied with sparse
matrix exponentials inside a fixed particle-number sector.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .model import ModelError, ModelInstance, coefficients

_LOWER = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |1> -> |0>
_PARITY = sp.csr_matrix(np.diag([1.0, -1.0]))
_ID = sp.identity(2, format="csr")


def annihilators(n: int) -> list[sp.csr_matrix]:
    ops = []
    for j in range(n):
        factors = [_PARITY] * j + [_LOWER] + [_ID] * (n - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op)
    return ops


def occupation_numbers(n: int) -> np.ndarray:
    """(2**n, n) array of occupations for each basis index."""
    idx = np.arange(2**n)
    return (idx[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1


class JordanWignerModel:
    """Sub-Hamiltonians of a fermionic model restricted to one number sector."""

    def __init__(self, model: ModelInstance, n_particles: int | None = None):
        if not model.is_fermionic:
            raise ModelError("Jordan-Wigner reference is for fermionic models")
        self.model = model
        self.n = model.n_sites
        if self.n > 20:
            raise ModelError(f"{self.n} modes is too many for a dense Fock space")
        self.n_particles = model.constants["n_electrons"] if n_particles is None else n_particles
        occ = occupation_numbers(self.n)
        self.sector = np.flatnonzero(occ.sum(axis=1) == self.n_particles)
        self.occ = occ[self.sector]

    @cached_property
    def _c(self):
        return annihilators(self.n)

    def _restrict(self, op):
        return op[self.sector][:, self.sector].tocsr()

    @cached_property
    def subs(self) -> list[sp.csr_matrix]:
        c = self._c
        out = []
        for sub in self.model.subs:
            h = sp.csr_matrix((2**self.n, 2**self.n))
            for term in sub.terms:
                if term.kind == "hop":
                    i, j = (s - 1 for s in term.support)
                    a = term.matrix[1, 2].real
                    h = h + a * (c[i].T @ c[j] + c[j].T @ c[i])
                elif term.kind == "number":
                    i = term.support[0] - 1
                    h = h + term.matrix[1, 1].real * (c[i].T @ c[i])
                else:
                    raise ModelError(f"unsupported fermionic term {term.kind}")
            out.append(self._restrict(h))
        return out

    def hamiltonian(self, g) -> sp.csr_matrix:
        return sum(ci * h for ci, h in zip(coefficients(self.model, g), self.subs))

    def slater(self, phi: np.ndarray) -> np.ndarray:
        """Sector amplitudes of prod_k (sum_i phi_ik c_i^dag) |0>."""
        psi = np.zeros(2**self.n, dtype=complex)
        psi[0] = 1.0
        for k in range(phi.shape[1]):
            create = sum(phi[i, k] * self._c[i].T for i in range(self.n))
            psi = create @ psi
        out = psi[self.sector]
        return out / np.linalg.norm(out)

    def run(self, psi0: np.ndarray, theta: np.ndarray) -> np.ndarray:
        psi = psi0
        for layer in np.atleast_2d(theta):
            for h, t in zip(self.subs, layer):
                if t:
                    psi = expm_multiply(1j * t * h, psi)
        return psi

    def expect(self, psi: np.ndarray, op) -> float:
        return float(np.vdot(psi, op @ psi).real)

    def occupations(self, psi: np.ndarray) -> np.ndarray:
        return (np.abs(psi) ** 2) @ self.occ

    def parity_string(self, psi: np.ndarray, sites) -> float:
        signs = np.prod(1 - 2 * self.occ[:, [s - 1 for s in sites]], axis=1)
        return float(np.dot(np.abs(psi) ** 2, signs))

    def ground_energy(self, g) -> float:
        from scipy.sparse.linalg import eigsh

        return float(eigsh(self.hamiltonian(g), k=1, which="SA")[0][0])
