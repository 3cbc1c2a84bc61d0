"""Dense statevector simulation of Hamiltonian-variational circuits.

A depth-p circuit applies, for each layer, ``exp(i theta_li H_i)`` for
i = 1..k in sub-Hamiltonian construction order (interactions first, fields
last); the first sub-Hamiltonian acts first. Since the terms of one ``H_i``
commute, its exponential is the product of exact term exponentials.

Flattened parameter layout: ``theta`` row-major as a (p, k) array, followed
for the BBC by four boundary angles ``(t_left, f_left, t_right, f_right)``;
each chain end carries the spin-1/2 vector ``(cos(t/2), e^{if} sin(t/2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .model import PAULI_X, ModelError, ModelInstance, SiteOperator, SubHamiltonian, coefficients, embed

N_BOUNDARY = 4
STATE_CACHE_BYTES = 256 * 2**20


@dataclass
class StateVector:
    amps: np.ndarray
    local_dim: int
    n_sites: int

    def __post_init__(self):
        if self.amps.shape != (self.local_dim**self.n_sites,):
            raise ValueError(f"expected {self.local_dim}**{self.n_sites} amplitudes, got {self.amps.shape}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def copy(self) -> "StateVector":
        return StateVector(self.amps.copy(), self.local_dim, self.n_sites)


@dataclass
class AnsatzParams:
    theta: np.ndarray
    boundary: np.ndarray | None = None

    @property
    def depth(self) -> int:
        return self.theta.shape[0]

    def flatten(self) -> np.ndarray:
        parts = [np.ravel(self.theta)]
        if self.boundary is not None:
            parts.append(np.asarray(self.boundary, dtype=float))
        return np.concatenate(parts).astype(float)

    @classmethod
    def unflatten(cls, x, p: int, k: int, boundary: bool) -> "AnsatzParams":
        x = np.asarray(x, dtype=float)
        expected = p * k + (N_BOUNDARY if boundary else 0)
        if x.shape != (expected,):
            raise ValueError(f"expected {expected} parameters for p={p}, got {x.shape}")
        return cls(x[: p * k].reshape(p, k), x[p * k :].copy() if boundary else None)


def n_params(model: ModelInstance, p: int) -> int:
    return p * model.k + (N_BOUNDARY if model.kind == "bbc" else 0)


# ---------------------------------------------------------------------------
# AKLT matrix product state

def aklt_tensors() -> np.ndarray:
    """Bond-dimension-2 AKLT tensors ``A[s]`` for s in (+1, 0, -1)."""
    a = np.zeros((3, 2, 2))
    a[0] = math.sqrt(2 / 3) * np.array([[0, 1], [0, 0]])
    a[1] = -math.sqrt(1 / 3) * np.array([[1, 0], [0, -1]])
    a[2] = -math.sqrt(2 / 3) * np.array([[0, 0], [1, 0]])
    return a


def boundary_spinor(t: float, f: float) -> np.ndarray:
    return np.array([math.cos(t / 2), np.exp(1j * f) * math.sin(t / 2)])


def _boundary_spinor_grad(t: float, f: float) -> tuple[np.ndarray, np.ndarray]:
    dt = np.array([-0.5 * math.sin(t / 2), 0.5 * np.exp(1j * f) * math.cos(t / 2)])
    df = np.array([0.0, 1j * np.exp(1j * f) * math.sin(t / 2)])
    return dt, df


def aklt_open_tensor(n_sites: int) -> np.ndarray:
    """Open-boundary AKLT amplitudes with both virtual ends left free.

    Returns ``B`` of shape ``(2, 3**n, 2)``; the state for boundary vectors
    l, r is ``l @ B @ r`` (before normalisation).
    """
    a = aklt_tensors()
    t = np.eye(2)[:, None, :]  # (left, phys, right)
    for _ in range(n_sites):
        t = np.einsum("lpa,sab->lpsb", t, a).reshape(2, -1, 2)
    return t


# ---------------------------------------------------------------------------
# compiled circuit

@numba.njit(cache=True)
def _product_1site(psi, u, n, d):
    """Apply ``u`` on every one of the n sites (u tensor-power times psi)."""
    out = psi.copy()
    if d == 2:
        u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
        stride = 1
        for _ in range(n):
            for start in range(0, out.size, 2 * stride):
                for i0 in range(start, start + stride):
                    a = out[i0]
                    b = out[i0 + stride]
                    out[i0] = u00 * a + u01 * b
                    out[i0 + stride] = u10 * a + u11 * b
            stride *= 2
        return out
    tmp = np.empty(d, dtype=np.complex128)
    stride = 1
    for _ in range(n):
        block = stride * d
        for start in range(0, out.size, block):
            for off in range(stride):
                base = start + off
                for a in range(d):
                    tmp[a] = out[base + a * stride]
                for a in range(d):
                    acc = 0j
                    for b in range(d):
                        acc += u[a, b] * tmp[b]
                    out[base + a * stride] = acc
        stride *= d
    return out


@numba.njit(cache=True)
def _sum_1site(psi, h, n, d):
    """Return ``sum_i h_i psi`` for the same one-site matrix on every site."""
    out = np.zeros_like(psi)
    if d == 2:
        h00, h01, h10, h11 = h[0, 0], h[0, 1], h[1, 0], h[1, 1]
        stride = 1
        for _ in range(n):
            for start in range(0, psi.size, 2 * stride):
                for i0 in range(start, start + stride):
                    a = psi[i0]
                    b = psi[i0 + stride]
                    out[i0] += h00 * a + h01 * b
                    out[i0 + stride] += h10 * a + h11 * b
            stride *= 2
        return out
    stride = 1
    for _ in range(n):
        block = stride * d
        for start in range(0, psi.size, block):
            for off in range(stride):
                base = start + off
                for a in range(d):
                    acc = 0j
                    for b in range(d):
                        acc += h[a, b] * psi[base + b * stride]
                    out[base + a * stride] += acc
        stride *= d
    return out


@numba.njit(cache=True)
def _matrix_element_1site(lam, psi, h, n, d):
    """Return ``<lam| sum_i h_i |psi>`` without forming the vector."""
    acc = 0j
    if d == 2:
        h00, h01, h10, h11 = h[0, 0], h[0, 1], h[1, 0], h[1, 1]
        stride = 1
        for _ in range(n):
            for start in range(0, psi.size, 2 * stride):
                for i0 in range(start, start + stride):
                    a = psi[i0]
                    b = psi[i0 + stride]
                    acc += np.conj(lam[i0]) * (h00 * a + h01 * b)
                    acc += np.conj(lam[i0 + stride]) * (h10 * a + h11 * b)
            stride *= 2
        return acc
    stride = 1
    for _ in range(n):
        block = stride * d
        for start in range(0, psi.size, block):
            for off in range(stride):
                base = start + off
                for a in range(d):
                    s = 0j
                    for b in range(d):
                        s += h[a, b] * psi[base + b * stride]
                    acc += np.conj(lam[base + a * stride]) * s
        stride *= d
    return acc


@numba.njit(cache=True, fastmath=True)
def _xrot_all(psi, c, s, n):
    """``prod_i (c + i s X_i)`` on n qubits, with real and imaginary parts split."""
    out = psi.copy()
    v = out.view(np.float64)
    stride = 1
    for _ in range(n):
        for start in range(0, psi.size, 2 * stride):
            for i0 in range(start, start + stride):
                i1 = i0 + stride
                ar, ai, br, bi = v[2 * i0], v[2 * i0 + 1], v[2 * i1], v[2 * i1 + 1]
                v[2 * i0] = c * ar - s * bi
                v[2 * i0 + 1] = c * ai + s * br
                v[2 * i1] = c * br - s * ai
                v[2 * i1 + 1] = c * bi + s * ar
        stride *= 2
    return out


@numba.njit(cache=True, fastmath=True)
def _x_matrix_element(lam, psi, n):
    """``<lam| sum_i X_i |psi>``."""
    lv = lam.view(np.float64)
    pv = psi.view(np.float64)
    re = 0.0
    im = 0.0
    stride = 1
    for _ in range(n):
        for start in range(0, psi.size, 2 * stride):
            for i0 in range(start, start + stride):
                i1 = i0 + stride
                # conj(lam[i0]) psi[i1] + conj(lam[i1]) psi[i0]
                re += lv[2 * i0] * pv[2 * i1] + lv[2 * i0 + 1] * pv[2 * i1 + 1]
                im += lv[2 * i0] * pv[2 * i1 + 1] - lv[2 * i0 + 1] * pv[2 * i1]
                re += lv[2 * i1] * pv[2 * i0] + lv[2 * i1 + 1] * pv[2 * i0 + 1]
                im += lv[2 * i1] * pv[2 * i0 + 1] - lv[2 * i1 + 1] * pv[2 * i0]
        stride *= 2
    return re + 1j * im


class _Group:
    """One sub-Hamiltonian prepared for fast exponentiation."""

    def __init__(self, sub: SubHamiltonian, n: int, d: int):
        self.label = sub.label
        self.n, self.d = n, d
        self.diag = None
        self.uniform = None
        self.pauli_x = False
        self.blocks = []
        if sub.is_diagonal:
            total = np.zeros((d,) * n)
            for t in sub.terms:
                total = total + _diag_on_axes(t, n, d)
            self.diag = total.ravel()
            # few distinct diagonal values: exponentiate those and gather
            self._levels, self._level_idx = np.unique(np.round(self.diag, 12), return_inverse=True)
        elif _covers_every_site(sub, n):
            m = sub.terms[0].matrix
            w, v = np.linalg.eigh(m)
            self.uniform = {"matrix": np.ascontiguousarray(m), "evals": w, "evecs": v}
            self.pauli_x = d == 2 and np.array_equal(m, PAULI_X)
        else:
            # group terms sharing a matrix so each exponential is built once
            for t in sub.terms:
                axes = tuple(s - 1 for s in t.support)
                for blk in self.blocks:
                    if blk["matrix"].shape == t.matrix.shape and np.array_equal(blk["matrix"], t.matrix):
                        blk["axes"].append(axes)
                        break
                else:
                    w, v = np.linalg.eigh(t.matrix)
                    self.blocks.append({"matrix": t.matrix, "evals": w, "evecs": v, "axes": [axes]})

    def exp(self, psi: np.ndarray, theta: float) -> np.ndarray:
        if self.diag is not None:
            return np.exp(1j * theta * self._levels)[self._level_idx] * psi
        if self.pauli_x:
            return _xrot_all(psi, math.cos(theta), math.sin(theta), self.n)
        if self.uniform is not None:
            v = self.uniform["evecs"]
            u = (v * np.exp(1j * theta * self.uniform["evals"])) @ v.conj().T
            return _product_1site(psi, u, self.n, self.d)
        t = psi.reshape((self.d,) * self.n)
        for blk in self.blocks:
            v = blk["evecs"]
            u = (v * np.exp(1j * theta * blk["evals"])) @ v.conj().T
            for axes in blk["axes"]:
                t = _apply_local(u, t, axes, self.d)
        return t.reshape(-1)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        if self.diag is not None:
            return self.diag * psi
        if self.uniform is not None:
            return _sum_1site(psi, self.uniform["matrix"], self.n, self.d)
        t = psi.reshape((self.d,) * self.n)
        out = np.zeros_like(t)
        for blk in self.blocks:
            for axes in blk["axes"]:
                out += _apply_local(blk["matrix"], t, axes, self.d)
        return out.reshape(-1)

    def matrix_element(self, lam: np.ndarray, psi: np.ndarray) -> complex:
        if self.diag is not None:
            return np.vdot(lam, self.diag * psi)
        if self.pauli_x:
            return _x_matrix_element(lam, psi, self.n)
        if self.uniform is not None:
            return _matrix_element_1site(lam, psi, self.uniform["matrix"], self.n, self.d)
        return np.vdot(lam, self.apply(psi))

    def expect(self, psi: np.ndarray) -> float:
        if self.diag is not None:
            return float(np.dot(self.diag, np.abs(psi) ** 2))
        return float(np.vdot(psi, self.apply(psi)).real)


def _covers_every_site(sub: SubHamiltonian, n: int) -> bool:
    if not sub.terms or any(len(t.support) != 1 for t in sub.terms):
        return False
    first = sub.terms[0].matrix
    sites = sorted(t.support[0] for t in sub.terms)
    return sites == list(range(1, n + 1)) and all(np.array_equal(t.matrix, first) for t in sub.terms)


def _diag_on_axes(t: SiteOperator, n: int, d: int) -> np.ndarray:
    shape = [1] * n
    diag = np.diag(t.matrix).real
    axes = [s - 1 for s in t.support]
    if len(axes) == 1:
        shape[axes[0]] = d
        return diag.reshape(shape)
    a, b = axes
    block = diag.reshape(d, d)
    if a > b:
        a, b, block = b, a, block.T
    shape[a] = shape[b] = d
    return block.reshape(shape)


def _apply_local(u: np.ndarray, t: np.ndarray, axes: tuple[int, ...], d: int) -> np.ndarray:
    k = len(axes)
    ut = u.reshape((d,) * (2 * k))
    out = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


class SpinCircuit:
    """Hamiltonian-variational circuits for one spin model.

    The object is immutable after construction and may be shared between
    threads; every method allocates its own state arrays.
    """

    def __init__(self, model: ModelInstance):
        if model.is_fermionic:
            raise ModelError(f"{model.kind} is simulated with flo_sim, not the statevector backend")
        self.model = model
        self.n, self.d, self.k = model.n_sites, model.local_dim, model.k
        self.groups = [_Group(sub, self.n, self.d) for sub in model.subs]
        self.has_boundary = model.kind == "bbc"

    @cached_property
    def _aklt(self) -> np.ndarray:
        return aklt_open_tensor(self.n)

    def n_params(self, p: int) -> int:
        return n_params(self.model, p)

    # -- initial state ------------------------------------------------------
    def initial_amps(self, boundary=None) -> np.ndarray:
        if self.model.initial_state == "all-down":
            psi = np.zeros(self.d**self.n, dtype=complex)
            psi[-1] = 1.0  # |1...1>
            return psi
        if boundary is None:
            raise ModelError("the AKLT initial state needs four boundary angles")
        tl, fl, tr, fr = boundary
        raw = np.einsum("a,apb,b->p", boundary_spinor(tl, fl), self._aklt, boundary_spinor(tr, fr))
        return raw / np.linalg.norm(raw)

    def _initial_with_grad(self, boundary):
        tl, fl, tr, fr = boundary
        lv, rv = boundary_spinor(tl, fl), boundary_spinor(tr, fr)
        dl, dr = _boundary_spinor_grad(tl, fl), _boundary_spinor_grad(tr, fr)
        raw = np.einsum("a,apb,b->p", lv, self._aklt, rv)
        draws = [np.einsum("a,apb,b->p", x, self._aklt, rv) for x in dl]
        draws += [np.einsum("a,apb,b->p", lv, self._aklt, x) for x in dr]
        nrm = np.linalg.norm(raw)
        psi = raw / nrm
        # derivative of raw/|raw|
        dpsi = [dr_ / nrm - psi * (np.vdot(raw, dr_).real / nrm**2) for dr_ in draws]
        return psi, dpsi

    def prepare_initial(self, boundary=None) -> StateVector:
        return StateVector(self.initial_amps(boundary), self.d, self.n)

    # -- circuit ------------------------------------------------------------
    def _split(self, x, p):
        prm = AnsatzParams.unflatten(x, p, self.k, self.has_boundary)
        return prm.theta, prm.boundary

    def run(self, x, p: int) -> StateVector:
        theta, boundary = self._split(x, p)
        psi = self.initial_amps(boundary)
        for layer in theta:
            for grp, t in zip(self.groups, layer):
                if t:
                    psi = grp.exp(psi, t)
        return StateVector(psi, self.d, self.n)

    def sub_expectations(self, state: StateVector) -> np.ndarray:
        return np.array([grp.expect(state.amps) for grp in self.groups])

    def apply_hamiltonian(self, psi: np.ndarray, c: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        for ci, grp in zip(c, self.groups):
            if ci:
                out += ci * grp.apply(psi)
        return out

    def energy(self, g, x, p: int) -> float:
        return float(coefficients(self.model, g) @ self.sub_expectations(self.run(x, p)))

    def energy_and_gradient(self, g, x, p: int) -> tuple[float, np.ndarray]:
        """Energy and its exact gradient by one forward and one reverse sweep.

        Intermediate states are kept when they fit in ``STATE_CACHE_BYTES``;
        otherwise the reverse sweep un-computes them gate by gate.
        """
        c = coefficients(self.model, g)
        theta, boundary = self._split(x, p)
        if self.has_boundary:
            psi0, dpsi0 = self._initial_with_grad(boundary)
        else:
            psi0, dpsi0 = self.initial_amps(), []
        keep = p * self.k * psi0.nbytes <= STATE_CACHE_BYTES
        states = []
        phi = psi0
        for layer in theta:
            for grp, t in zip(self.groups, layer):
                if t:
                    phi = grp.exp(phi, t)
                if keep:
                    states.append(phi)
        lam = self.apply_hamiltonian(phi, c)
        energy = float(np.vdot(phi, lam).real)
        grad = np.zeros(len(x))
        for l in range(p - 1, -1, -1):
            for i in range(self.k - 1, -1, -1):
                grp, t = self.groups[i], theta[l, i]
                j = l * self.k + i
                if keep:
                    phi = states[j]
                grad[j] = -2.0 * grp.matrix_element(lam, phi).imag
                if t:
                    if not keep:
                        phi = grp.exp(phi, -t)
                    lam = grp.exp(lam, -t)
        for j, dpsi in enumerate(dpsi0):
            grad[p * self.k + j] = 2.0 * np.vdot(lam, dpsi).real
        return energy, grad


def expectation(state: StateVector, obs, *, hermitian: bool = True) -> float | complex:
    """Expectation of a SubHamiltonian, SiteOperator, list of terms or dense matrix.

    Non-Hermitian observables are only evaluated with ``hermitian=False``, in
    which case the complex value is returned.
    """
    psi = state.amps
    if isinstance(obs, np.ndarray):
        if hermitian and not np.allclose(obs, obs.conj().T, atol=1e-12):
            raise ValueError("observable is not Hermitian")
        val = np.vdot(psi, obs @ psi)
    else:
        terms = obs.terms if isinstance(obs, SubHamiltonian) else (obs if isinstance(obs, (list, tuple)) else [obs])
        t = psi.reshape((state.local_dim,) * state.n_sites)
        val = 0j
        for term in terms:
            if hermitian and not np.allclose(term.matrix, term.matrix.conj().T, atol=1e-12):
                raise ValueError(f"term {term.kind} on {term.support} is not Hermitian")
            if max(term.support) > state.n_sites:
                raise ValueError(f"term support {term.support} outside {state.n_sites} sites")
            out = _apply_local(term.matrix, t, tuple(s - 1 for s in term.support), state.local_dim)
            val += np.vdot(t, out)
    if not hermitian:
        return complex(val)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"imaginary part {val.imag:.3e} for a Hermitian observable")
    return float(val.real)


def prepare_initial(model: ModelInstance, boundary=None) -> StateVector:
    return SpinCircuit(model).prepare_initial(boundary)


def run_circuit(model: ModelInstance, g, params: AnsatzParams) -> StateVector:
    # g does not enter the circuit itself; accepted for interface symmetry with energy evaluation
    model.params(g)
    circ = SpinCircuit(model)
    return circ.run(params.flatten(), params.depth)


def sub_expectations(state: StateVector, model: ModelInstance) -> np.ndarray:
    return SpinCircuit(model).sub_expectations(state)


def energy_and_gradient(model: ModelInstance, g, params: AnsatzParams) -> tuple[float, np.ndarray]:
    return SpinCircuit(model).energy_and_gradient(g, params.flatten(), params.depth)


def fidelity(a: StateVector, b: StateVector) -> float:
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def dense_operator(op: SiteOperator, n: int, d: int) -> np.ndarray:
    return embed(op, tuple(range(1, n + 1)), d)
