"""Fermionic linear optics: Gaussian-state simulation of the 2D SSH circuits.

Sign conventions, all in one place (sites i are 1-based, Majorana indices
0-based, so site i owns indices ``2i-2`` and ``2i-1``, written ``i1, i2``):

=====================  ==================================================
Majoranas              ``g_i1 = c_i + c_i^dag``, ``g_i2 = -i (c_i - c_i^dag)``
covariance             ``M_ab = (i/2) <[g_a, g_b]>``, so ``M_{i1,i2} = 2<n_i> - 1``
occupation             ``<n_i> = (1 + M_{i1,i2}) / 2``
quadratic form         ``H = (i/4) sum_ab h_ab g_a g_b + offset``
hopping term           ``c_i^dag c_j + h.c.``: ``h_{i1,j2} = 1``, ``h_{i2,j1} = -1``
number term            ``n_i``: ``h_{i1,i2} = 1``, offset ``1/2``
energy                 ``<H> = (1/4) sum_ab h_ab M_ab + offset``
gate ``exp(i t H)``    ``M -> R M R^T`` with ``R = exp(-t h)``
parity string          ``<prod_{c in A} (1 - 2 n_c)> = (-1)^|A| Pf(M_A)``
=====================  ==================================================

The particle-number table is fixed by the definition of ``M``; the rotation
direction was checked against a dense Jordan-Wigner simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import FERMION_HOP, FERMION_NUMBER, ModelError, ModelInstance, coefficients
from .pfaffian import pfaffian
from .qudit_sim import AnsatzParams

# the hopping generator on Majorana indices (i1, i2, j1, j2)
_HOP_BLOCK = np.array(
    [[0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]],
    dtype=float,
)
_NUMBER_BLOCK = np.array([[0, 1], [-1, 0]], dtype=float)


class FermiLevelDegeneracy(ModelError):
    pass


@dataclass
class MajoranaCovariance:
    M: np.ndarray
    n_modes: int

    def __post_init__(self):
        if self.M.shape != (2 * self.n_modes, 2 * self.n_modes):
            raise ValueError(f"covariance of {self.n_modes} modes must be {2 * self.n_modes}x{2 * self.n_modes}")

    def is_pure(self, tol: float = 1e-8) -> bool:
        m = self.M
        return bool(
            np.abs(m + m.T).max() < 1e-10 and np.abs(m @ m.T - np.eye(len(m))).max() < tol
        )

    def copy(self) -> "MajoranaCovariance":
        return MajoranaCovariance(self.M.copy(), self.n_modes)


@dataclass
class QuadraticForm:
    h: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        if np.abs(self.h + self.h.T).max(initial=0.0) > 1e-12:
            raise ValueError("quadratic form must be antisymmetric")

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        return QuadraticForm(self.h + other.h, self.offset + other.offset)

    def __rmul__(self, c: float) -> "QuadraticForm":
        return QuadraticForm(c * self.h, c * self.offset)


def _require_ssh(model: ModelInstance):
    if model.kind != "ssh-2d":
        raise ModelError(f"the Gaussian backend only simulates ssh-2d, got {model.kind}")


def majorana_pair(site: int) -> tuple[int, int]:
    return 2 * site - 2, 2 * site - 1


def _term_block(term):
    """Majorana indices, block generator and offset of one fermionic term."""
    if term.kind == "hop":
        scale = term.matrix[1, 2].real
        if not np.allclose(term.matrix, scale * FERMION_HOP):
            raise ModelError(f"unsupported hopping matrix on {term.support}")
        i, j = term.support
        return (*majorana_pair(i), *majorana_pair(j)), scale * _HOP_BLOCK, 0.0
    if term.kind == "number":
        scale = term.matrix[1, 1].real
        if not np.allclose(term.matrix, scale * FERMION_NUMBER):
            raise ModelError(f"unsupported number matrix on {term.support}")
        return majorana_pair(term.support[0]), scale * _NUMBER_BLOCK, scale / 2
    raise ModelError(f"no Gaussian representation for {term.kind!r}")


@numba.njit(cache=True)
def _pair_rotate(m, a, b, ca, sa, cb, sb):
    """Return ``R m R^T`` for the rotation mixing each index pair (a[q], b[q])."""
    out = m.copy()
    n = m.shape[0]
    for q in range(a.size):
        i, j = a[q], b[q]
        for k in range(n):
            x, y = out[i, k], out[j, k]
            out[i, k] = ca[q] * x - sa[q] * y
            out[j, k] = cb[q] * y - sb[q] * x
    for k in range(n):
        for q in range(a.size):
            i, j = a[q], b[q]
            x, y = out[k, i], out[k, j]
            out[k, i] = ca[q] * x - sa[q] * y
            out[k, j] = cb[q] * y - sb[q] * x
    return out


@numba.njit(cache=True)
def _paired_overlap(lam, m, a, b, hval):
    acc = 0.0
    n = m.shape[0]
    for q in range(a.size):
        col = 0.0
        for k in range(n):
            col += lam[k, a[q]] * m[k, b[q]]
        acc += hval[q] * col
    return -0.5 * acc


class _Generator:
    """One sub-Hamiltonian as disjoint Majorana blocks.

    Every block generator is a scaled signed permutation with ``h^2 = -s^2``,
    so ``exp(-t h) = cos(s t) - sin(s t) h / s`` and applying it only needs
    each Majorana index, its partner and the entry ``h[a, partner(a)]``.
    """

    def __init__(self, sub, n_modes: int):
        self.label = sub.label
        dim = 2 * n_modes
        h = np.zeros((dim, dim))
        self.offset = 0.0
        for term in sub.terms:
            ix, blk, off = _term_block(term)
            ix = np.array(ix)
            if np.any(h[ix].any(axis=1)):
                raise ModelError(f"{sub.label}: terms overlap, not a single Gaussian layer")
            h[np.ix_(ix, ix)] += blk
            self.offset += off
        self.form = QuadraticForm(h, self.offset)
        self.sites = np.flatnonzero(h.any(axis=1))
        self.partner = np.argmax(np.abs(h[self.sites]), axis=1)
        self.hval = h[self.sites, self.partner]
        if np.count_nonzero(h) != len(self.sites) or not np.array_equal(self.partner[np.searchsorted(self.sites, self.partner)], self.sites):
            raise ModelError(f"{sub.label}: generator is not a signed pairing of Majorana modes")
        self.scale = np.abs(self.hval)
        first = self.sites < self.partner
        self._qa = np.flatnonzero(first)
        self._qb = np.searchsorted(self.sites, self.partner[first])

    def conjugate(self, m: np.ndarray, theta: float, transpose: bool = False) -> np.ndarray:
        """``R m R^T`` (or ``R^T m R``) for ``R = exp(-theta h)``, on a copy."""
        if not len(self.sites) or theta == 0:
            return m
        if transpose:
            theta = -theta
        c = np.cos(self.scale * theta)
        s = np.sin(self.scale * theta) / self.scale * self.hval
        qa, qb = self._qa, self._qb
        return _pair_rotate(m, self.sites[qa], self.sites[qb], c[qa], s[qa], c[qb], s[qb])

    def expect(self, m: np.ndarray) -> float:
        if not len(self.sites):
            return 0.0
        return 0.25 * float(np.dot(self.hval, m[self.sites, self.partner])) + self.offset

    def commutator_overlap(self, lam: np.ndarray, m: np.ndarray) -> float:
        """``(1/4) sum(lam * (m h - h m))`` using only the paired columns."""
        if not len(self.sites):
            return 0.0
        return _paired_overlap(lam, m, self.sites, self.partner, self.hval)


# ---------------------------------------------------------------------------
# single-particle picture

def single_particle_matrix(model: ModelInstance, c) -> np.ndarray:
    """``N x N`` matrix t with ``H = sum_ij t_ij c_i^dag c_j`` for coefficients c."""
    _require_ssh(model)
    n = model.n_sites
    t = np.zeros((n, n))
    for ci, sub in zip(c, model.subs):
        for term in sub.terms:
            if term.kind == "hop":
                i, j = (s - 1 for s in term.support)
                val = ci * term.matrix[1, 2].real
                t[i, j] += val
                t[j, i] += val
            else:
                i = term.support[0] - 1
                t[i, i] += ci * term.matrix[1, 1].real
    return t


def covariance_from_orbitals(phi: np.ndarray) -> MajoranaCovariance:
    """Covariance of the Slater determinant whose occupied orbitals are the columns of phi."""
    n = phi.shape[0]
    g = np.conj(phi) @ phi.T  # G_ij = <c_i^dag c_j>
    re, im = g.real, g.imag
    eye = np.eye(n)
    m = np.zeros((2 * n, 2 * n))
    m[0::2, 1::2] = 2 * re - eye
    m[1::2, 0::2] = eye - 2 * re
    m[0::2, 0::2] = -2 * im
    m[1::2, 1::2] = -2 * im
    return MajoranaCovariance(m, n)


def occupied_orbitals(state: MajoranaCovariance, tol: float = 1e-6) -> np.ndarray:
    """Orthonormal occupied orbitals of a number-conserving pure Gaussian state."""
    m = state.M
    re = (m[0::2, 1::2] + np.eye(state.n_modes)) / 2
    im = -m[0::2, 0::2] / 2
    g = re + 1j * im  # <c_i^dag c_j>
    w, v = np.linalg.eigh(g.T)  # columns phi with g = conj(phi) phi^T
    if np.any((w > tol) & (w < 1 - tol)):
        raise ValueError("state is not a Slater determinant with a definite particle number")
    return v[:, w > 0.5]


def _tie_break(model: ModelInstance) -> np.ndarray:
    """Cell-staggered potential used to resolve degenerate trivial-limit fillings.

    Within every 2x2 cell it weights (top-left, top-right, bottom-left,
    bottom-right) by (-1, +1, +1, -1), the same pattern the corner
    potential imposes on the four corner cells.
    """
    L = model.shape[0]
    diag = np.zeros(L * L)
    for r in range(L):
        for c in range(L):
            diag[r * L + c] = 1.0 if (r % 2) != (c % 2) else -1.0
    return np.diag(diag)


def fill_lowest(t: np.ndarray, n_fill: int, tol: float = 1e-9, tie_break: np.ndarray | None = None):
    """Occupied orbitals filling the n_fill lowest eigenmodes of t.

    A degenerate Fermi level is first resolved within the degenerate shell by
    ``tie_break``; if that is absent or fails, FermiLevelDegeneracy is raised.
    """
    e, v = np.linalg.eigh(t)
    ef = e[n_fill - 1]
    core = e < ef - tol
    shell = np.abs(e - ef) <= tol
    m = n_fill - int(core.sum())
    if m == int(shell.sum()):
        return v[:, :n_fill]
    if tie_break is not None:
        vs = v[:, shell]
        et, u = np.linalg.eigh(vs.T @ tie_break @ vs)
        if et[m] - et[m - 1] > tol:
            return np.hstack([v[:, core], vs @ u[:, :m]])
    raise FermiLevelDegeneracy(
        f"{int(shell.sum())} modes at the Fermi level {ef:.6g} for {m} particles"
    )


# ---------------------------------------------------------------------------
# public operations

def quadratic_forms(model: ModelInstance, g) -> tuple[list[QuadraticForm], QuadraticForm]:
    _require_ssh(model)
    c = coefficients(model, g)
    forms = [_Generator(sub, model.n_sites).form for sub in model.subs]
    combined = QuadraticForm(np.zeros_like(forms[0].h))
    for ci, f in zip(c, forms):
        combined = combined + ci * f
    return forms, combined


def trivial_coefficients(model: ModelInstance) -> np.ndarray:
    """Coefficients of the intra-cell plus potential part in the w -> 0 limit."""
    v = model.constants["v_plus_w"]
    return np.array([-v, -v, 0.0, 0.0, model.constants["mu"]])


def prepare_trivial_gs(model: ModelInstance, g=None, tol: float = 1e-9) -> MajoranaCovariance:
    """Half-filled Slater determinant of the decoupled-cell Hamiltonian.

    The state does not depend on g, so stored sub-Hamiltonian expectations
    can be re-scored at any other g. Bulk cells have a doubly degenerate
    zero level; it is resolved by the staggered pattern of ``_tie_break``.
    """
    _require_ssh(model)
    if g is not None:
        model.params(g)
    t = single_particle_matrix(model, trivial_coefficients(model))
    phi = fill_lowest(t, model.constants["n_electrons"], tol, _tie_break(model))
    return covariance_from_orbitals(phi)


def evolve_layer(state: MajoranaCovariance, h: QuadraticForm, theta: float) -> MajoranaCovariance:
    """Apply ``exp(i theta H)`` for a general quadratic form."""
    if theta == 0:
        return state.copy()
    w, v = np.linalg.eigh(1j * h.h)  # i h is Hermitian
    r = (v * np.exp(-1j * theta * w)) @ v.conj().T  # exp(-theta h)
    r = r.real
    return MajoranaCovariance(r @ state.M @ r.T, state.n_modes)


def occupation(state: MajoranaCovariance, site: int) -> float:
    if not 1 <= site <= state.n_modes:
        raise ValueError(f"site {site} outside 1..{state.n_modes}")
    a, b = majorana_pair(site)
    return 0.5 * (1.0 + state.M[a, b])


def occupations(state: MajoranaCovariance) -> np.ndarray:
    return 0.5 * (1.0 + np.diag(state.M[0::2, 1::2]))


def corner_sites(L: int) -> tuple[int, int, int, int]:
    return (1, L, L * L - L + 1, L * L)


def parity_string(state: MajoranaCovariance, sites) -> float:
    """``<prod_{c in sites} (1 - 2 n_c)>`` by a Pfaffian of the covariance."""
    sites = sorted(set(sites))
    for s in sites:
        if not 1 <= s <= state.n_modes:
            raise ValueError(f"site {s} outside 1..{state.n_modes}")
    idx = [k for s in sites for k in majorana_pair(s)]
    sign = -1.0 if len(sites) % 2 else 1.0
    return sign * float(pfaffian(state.M[np.ix_(idx, idx)]))


def coop(state: MajoranaCovariance) -> float:
    L = math.isqrt(state.n_modes)
    if L * L != state.n_modes:
        raise ValueError("corner occupation needs a square lattice")
    return parity_string(state, corner_sites(L))


def gaussian_expectation(state: MajoranaCovariance, what: str, *, form: QuadraticForm | None = None,
                         site: int | None = None) -> float:
    if what == "energy":
        if form is None:
            raise ValueError("energy needs a quadratic form")
        return 0.25 * float(np.sum(form.h * state.M)) + form.offset
    if what == "occupation":
        if site is None:
            raise ValueError("occupation needs a site")
        return occupation(state, site)
    if what == "coop":
        return coop(state)
    raise ValueError(f"unknown Gaussian observable {what!r}")


def gaussian_fidelity(a: MajoranaCovariance, b: MajoranaCovariance, check: bool = True) -> float:
    """``|<a|b>|^2 = sqrt(det((M_a + M_b) / 2))`` for pure states."""
    if a.n_modes != b.n_modes:
        raise ValueError("states have different mode counts")
    if check and not (a.is_pure() and b.is_pure()):
        raise ValueError("fidelity formula needs pure Gaussian states")
    sign, logdet = np.linalg.slogdet((a.M + b.M) / 2)
    if sign <= 0:
        return 0.0
    return float(min(1.0, math.exp(0.5 * logdet)))


class FermionCircuit:
    """HV circuits for the SSH model on Majorana covariance matrices."""

    def __init__(self, model: ModelInstance):
        _require_ssh(model)
        self.model = model
        self.n, self.k = model.n_sites, model.k
        self.gens = [_Generator(sub, self.n) for sub in model.subs]
        self._m0 = prepare_trivial_gs(model).M

    def n_params(self, p: int) -> int:
        return p * self.k

    def _theta(self, x, p):
        return AnsatzParams.unflatten(x, p, self.k, False).theta

    def run(self, x, p: int) -> MajoranaCovariance:
        m = self._m0
        for layer in self._theta(x, p):
            for gen, t in zip(self.gens, layer):
                m = gen.conjugate(m, t)
        return MajoranaCovariance(m, self.n)

    def sub_expectations(self, state: MajoranaCovariance) -> np.ndarray:
        return np.array([gen.expect(state.M) for gen in self.gens])

    def energy(self, g, x, p: int) -> float:
        return float(coefficients(self.model, g) @ self.sub_expectations(self.run(x, p)))

    def energy_and_gradient(self, g, x, p: int) -> tuple[float, np.ndarray]:
        """Reverse-mode gradient: the adjoint of M is pulled back by ``R^T . R``."""
        c = coefficients(self.model, g)
        theta = self._theta(x, p)
        states = []
        m = self._m0
        for layer in theta:
            for gen, t in zip(self.gens, layer):
                m = gen.conjugate(m, t)
                states.append(m)
        total = QuadraticForm(np.zeros_like(m))
        for ci, gen in zip(c, self.gens):
            total = total + ci * gen.form
        energy = gaussian_expectation(MajoranaCovariance(m, self.n), "energy", form=total)
        lam = total.h
        grad = np.zeros(p * self.k)
        for j in range(p * self.k - 1, -1, -1):
            l, i = divmod(j, self.k)
            gen = self.gens[i]
            grad[j] = gen.commutator_overlap(lam, states[j])
            lam = gen.conjugate(lam, theta[l, i], transpose=True)
        return energy, grad


def flo_energy_and_gradient(model: ModelInstance, g, params: AnsatzParams) -> tuple[float, np.ndarray]:
    return FermionCircuit(model).energy_and_gradient(g, params.flatten(), params.depth)
