"""Model Hamiltonians split into mutually commuting sub-Hamiltonians.

Four models are supported:

``tfim-1d``  open transverse-field Ising chain, ``J*ZZ + h_x*X + h_z*Z``
``tfim-2d``  the same on an open rows x cols grid
``bbc``      bilinear-biquadratic spin-1 chain on native qutrit sites
``ssh-2d``   2D SSH free-fermion model on an open L x L grid of 2x2 cells

Every model is ``H(g) = sum_i c_i(g) H_i`` where the ``H_i`` are fixed,
parameter-free sums of commuting local terms and ``c_i`` are the coefficient
functions below. Sites are numbered from 1 in row-major order.

Conventions: Pauli Z is ``diag(+1, -1)`` so ``|0>`` has Z = +1; spin-1
matrices are written in the S_z eigenbasis ordered ``(+1, 0, -1)``; fermionic
two-site operators use the local occupation basis ``|n_i n_j>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

# default cap on d**N for dense statevector models
MAX_AMPLITUDES = 2**20

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_SP = math.sqrt(2.0) * np.diag([1.0, 1.0], 1)
SPIN1_Z = np.diag([1.0, 0.0, -1.0]).astype(complex)
SPIN1_X = ((_SP + _SP.T) / 2).astype(complex)
SPIN1_Y = ((_SP - _SP.T) / 2j).astype(complex)

SPIN1_DOT = sum(np.kron(s, s) for s in (SPIN1_X, SPIN1_Y, SPIN1_Z))
SPIN1_DOT_SQ = SPIN1_DOT @ SPIN1_DOT

# |n_i n_j> basis: index = 2*n_i + n_j
FERMION_HOP = np.zeros((4, 4), dtype=complex)
FERMION_HOP[1, 2] = FERMION_HOP[2, 1] = 1.0
FERMION_NUMBER = np.diag([0.0, 1.0]).astype(complex)

KINDS = ("tfim-1d", "tfim-2d", "bbc", "ssh-2d")
PARAM_NAMES = {"tfim-1d": "h_x", "tfim-2d": "h_x", "bbc": "phi", "ssh-2d": "r"}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class SiteOperator:
    kind: str
    support: tuple[int, ...]
    matrix: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if len(self.support) not in (1, 2) or len(set(self.support)) != len(self.support):
            raise ModelError(f"bad support {self.support}")
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ModelError(f"{self.kind} on {self.support} is not Hermitian")

    @property
    def is_diagonal(self) -> bool:
        return not np.any(self.matrix - np.diag(np.diag(self.matrix)))


@dataclass(frozen=True)
class SubHamiltonian:
    label: str
    terms: tuple[SiteOperator, ...]

    def __len__(self):
        return len(self.terms)

    @property
    def is_diagonal(self) -> bool:
        return all(t.is_diagonal for t in self.terms)


@dataclass(frozen=True)
class HamiltonianParams:
    """A point in the one-parameter phase diagram of a model.

    ``name`` is ``h_x`` (TFIM), ``phi`` (BBC) or ``r`` (SSH, r = v/w).
    """

    name: str
    value: float

    def __post_init__(self):
        v = float(self.value)
        if self.name == "h_x" and not v >= 0:
            raise ModelError(f"h_x must be >= 0, got {v}")
        if self.name == "phi" and not -math.pi <= v < math.pi:
            raise ModelError(f"phi must lie in [-pi, pi), got {v}")
        if self.name == "r" and not v > 0:
            raise ModelError(f"r = v/w must be > 0, got {v}")
        if self.name not in ("h_x", "phi", "r"):
            raise ModelError(f"unknown parameter {self.name!r}")


@dataclass(frozen=True)
class ModelInstance:
    kind: str
    shape: tuple[int, ...]
    local_dim: int
    subs: tuple[SubHamiltonian, ...]
    constants: dict = field(compare=False)
    initial_state: str

    @property
    def n_sites(self) -> int:
        return math.prod(self.shape)

    @property
    def k(self) -> int:
        return len(self.subs)

    @property
    def param_name(self) -> str:
        return PARAM_NAMES[self.kind]

    @property
    def is_fermionic(self) -> bool:
        return self.kind == "ssh-2d"

    def params(self, g) -> HamiltonianParams:
        if isinstance(g, HamiltonianParams):
            if g.name != self.param_name:
                raise ModelError(f"{self.kind} takes {self.param_name}, got {g.name}")
            return g
        return HamiltonianParams(self.param_name, float(g))

    def coefficients(self, g) -> np.ndarray:
        return coefficients(self, g)

    def describe(self) -> dict:
        return {"kind": self.kind, "shape": list(self.shape)}


def _site(r: int, c: int, cols: int) -> int:
    return r * cols + c + 1


def _grid_edges(rows: int, cols: int):
    """Open-grid edges coloured into four classes (1-based site labels).

    Horizontal edges are split by the parity of their left column and
    vertical edges by the parity of their upper row, 0-based, so colour
    ``h0`` holds edges (c=0,1), (c=2,3), ...
    """
    colours = {"h0": [], "h1": [], "v0": [], "v1": []}
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                colours[f"h{c % 2}"].append((_site(r, c, cols), _site(r, c + 1, cols)))
            if r + 1 < rows:
                colours[f"v{r % 2}"].append((_site(r, c, cols), _site(r + 1, c, cols)))
    return colours


def _ising(shape, edge_groups, labels):
    n = math.prod(shape)
    zz = np.kron(PAULI_Z, PAULI_Z)
    subs = [
        SubHamiltonian(lab, tuple(SiteOperator("ZZ", e, zz) for e in edges))
        for lab, edges in zip(labels, edge_groups)
    ]
    subs.append(SubHamiltonian("transverse field", tuple(SiteOperator("X", (i,), PAULI_X) for i in range(1, n + 1))))
    subs.append(SubHamiltonian("bias field", tuple(SiteOperator("Z", (i,), PAULI_Z) for i in range(1, n + 1))))
    return subs


def build_model(kind: str, size, *, max_amplitudes: int = MAX_AMPLITUDES, constants: dict | None = None) -> ModelInstance:
    """Build one of the supported models.

    ``size`` is the chain length for 1D models, ``(rows, cols)`` for
    ``tfim-2d`` and the linear size L for ``ssh-2d``. ``constants`` overrides
    the fixed couplings (``J``, ``h_z``, ``mu``, ``v_plus_w``).
    """
    overrides = dict(constants or {})
    if kind == "tfim-1d":
        (L,) = _dims(size, 1)
        shape = (L,)
        edges = [(i, i + 1) for i in range(1, L)]
        subs = _ising(shape, [edges[0::2], edges[1::2]], ["odd ZZ edges", "even ZZ edges"])
        consts = {"J": -1.0, "h_z": 1.0 / L**2}
        d, init = 2, "all-down"
    elif kind == "tfim-2d":
        rows, cols = _dims(size, 2)
        shape = (rows, cols)
        col = _grid_edges(rows, cols)
        subs = _ising(
            shape,
            [col["h0"], col["h1"], col["v0"], col["v1"]],
            ["ZZ horizontal A", "ZZ horizontal B", "ZZ vertical A", "ZZ vertical B"],
        )
        consts = {"J": -1.0, "h_z": 1.0 / (rows * cols) ** 2}
        d, init = 2, "all-down"
    elif kind == "bbc":
        (L,) = _dims(size, 1)
        shape = (L,)
        edges = [(i, i + 1) for i in range(1, L)]
        odd, even = edges[0::2], edges[1::2]
        subs = [
            SubHamiltonian("linear odd edges", tuple(SiteOperator("SS", e, SPIN1_DOT) for e in odd)),
            SubHamiltonian("linear even edges", tuple(SiteOperator("SS", e, SPIN1_DOT) for e in even)),
            SubHamiltonian("quadratic odd edges", tuple(SiteOperator("SS^2", e, SPIN1_DOT_SQ) for e in odd)),
            SubHamiltonian("quadratic even edges", tuple(SiteOperator("SS^2", e, SPIN1_DOT_SQ) for e in even)),
        ]
        consts = {}
        d, init = 3, "aklt"
    elif kind == "ssh-2d":
        (L,) = _dims(size, 1)
        if L % 2:
            raise ModelError(f"ssh-2d needs even L (whole 2x2 cells), got {L}")
        shape = (L, L)
        col = _grid_edges(L, L)
        hop = lambda edges: tuple(SiteOperator("hop", e, FERMION_HOP) for e in edges)  # noqa: E731
        corners = [(L, 1.0), (L * L - L + 1, 1.0), (1, -1.0), (L * L, -1.0)]
        subs = [
            SubHamiltonian("intra-cell horizontal", hop(col["h0"])),
            SubHamiltonian("intra-cell vertical", hop(col["v0"])),
            SubHamiltonian("inter-cell horizontal", hop(col["h1"])),
            SubHamiltonian("inter-cell vertical", hop(col["v1"])),
            SubHamiltonian(
                "corner potentials",
                tuple(SiteOperator("number", (s,), sign * FERMION_NUMBER) for s, sign in corners),
            ),
        ]
        consts = {"mu": 1.0 / L**2, "v_plus_w": 2.0, "n_electrons": L * L // 2}
        d, init = 2, "trivial-slater"
    else:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {KINDS}")

    unknown = set(overrides) - set(consts)
    if unknown:
        raise ModelError(f"unknown constants for {kind}: {sorted(unknown)}")
    consts.update(overrides)
    model = ModelInstance(kind, shape, d, tuple(subs), consts, init)
    if not model.is_fermionic and d ** model.n_sites > max_amplitudes:
        raise ModelError(
            f"{kind} with {model.n_sites} sites needs {d}**{model.n_sites} amplitudes "
            f"(cap {max_amplitudes})"
        )
    return model


def _dims(size, ndim):
    dims = (size,) * ndim if isinstance(size, int) else tuple(int(s) for s in size)
    if len(dims) != ndim:
        raise ModelError(f"expected {ndim} lattice dimension(s), got {size!r}")
    if any(s < 2 for s in dims):
        raise ModelError(f"lattice needs at least 2 sites per dimension, got {size!r}")
    return dims


def ssh_hoppings(r: float, v_plus_w: float = 2.0) -> tuple[float, float]:
    """Intra-cell (v) and inter-cell (w) hopping for ratio r = v/w."""
    v = v_plus_w * r / (1 + r)
    return v, v_plus_w - v


def coefficients(model: ModelInstance, g) -> np.ndarray:
    """Coefficient vector c(g), in sub-Hamiltonian order."""
    val = model.params(g).value
    c = model.constants
    if model.kind == "tfim-1d":
        return np.array([c["J"], c["J"], val, c["h_z"]])
    if model.kind == "tfim-2d":
        return np.array([c["J"]] * 4 + [val, c["h_z"]])
    if model.kind == "bbc":
        return np.array([math.cos(val)] * 2 + [math.sin(val)] * 2)
    v, w = ssh_hoppings(val, c["v_plus_w"])
    return np.array([-v, -v, -w, -w, c["mu"]])


def embed(op: SiteOperator, sites: tuple[int, ...], d: int) -> np.ndarray:
    """Matrix of ``op`` on the ordered site tuple ``sites`` (a superset of its support)."""
    n = len(sites)
    k = len(op.support)
    t = op.matrix.reshape((d,) * (2 * k))
    # move op's axes onto their positions in ``sites``; identity elsewhere
    rest = [s for s in sites if s not in op.support]
    full = t
    for _ in rest:
        full = np.multiply.outer(full, np.eye(d))
    # current axis order: op outs, op ins, then (out, in) pairs for rest
    order_sites = list(op.support) + rest
    outs = list(range(k)) + [2 * k + 2 * j for j in range(len(rest))]
    ins = list(range(k, 2 * k)) + [2 * k + 2 * j + 1 for j in range(len(rest))]
    perm_out = [outs[order_sites.index(s)] for s in sites]
    perm_in = [ins[order_sites.index(s)] for s in sites]
    return full.transpose(perm_out + perm_in).reshape(d**n, d**n)


@dataclass
class SplittingReport:
    ok: bool
    violation: tuple[str, SiteOperator, SiteOperator] | None = None

    def __bool__(self):
        return self.ok


def validate_splitting(model_or_subs, local_dim: int | None = None) -> SplittingReport:
    """Check every sub-Hamiltonian consists of pairwise commuting terms.

    Terms on disjoint sites are accepted without a matrix check: spin terms
    act on different tensor factors and the fermionic terms used here are
    parity-even. Overlapping pairs are commuted explicitly on their joint
    support.
    """
    if isinstance(model_or_subs, ModelInstance):
        subs, d = model_or_subs.subs, model_or_subs.local_dim
    else:
        subs, d = model_or_subs, local_dim
    for sub in subs:
        for a, b in combinations(sub.terms, 2):
            shared = set(a.support) & set(b.support)
            if not shared:
                continue
            joint = tuple(sorted(set(a.support) | set(b.support)))
            ma, mb = embed(a, joint, d), embed(b, joint, d)
            if np.abs(ma @ mb - mb @ ma).max() > 1e-12:
                return SplittingReport(False, (sub.label, a, b))
    return SplittingReport(True)


def edge_set(model: ModelInstance) -> list[tuple[int, int]]:
    """All two-site supports over the sub-Hamiltonians, with repetition."""
    return [t.support for sub in model.subs for t in sub.terms if len(t.support) == 2]


def dense_hamiltonian(model: ModelInstance, g) -> np.ndarray:
    """Dense ``sum_i c_i H_i`` for small spin models (tests and diagnostics)."""
    if model.is_fermionic:
        raise ModelError("use phasesketch.jordan_wigner for fermionic models")
    c = coefficients(model, g)
    sites = tuple(range(1, model.n_sites + 1))
    dim = model.local_dim**model.n_sites
    h = np.zeros((dim, dim), dtype=complex)
    for ci, sub in zip(c, model.subs):
        for t in sub.terms:
            h += ci * embed(t, sites, model.local_dim)
    return h
