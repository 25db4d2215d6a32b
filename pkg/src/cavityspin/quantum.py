"""Tensor-product states and operators over mixed atomic and photonic sites.

Conventions
-----------
* Site 0 is the slowest-varying tensor index.
* Atomic levels are ordered ``(a, b, e) = (0, 1, 2)``.
* Spin sites are ordered ``(down, up) = (0, 1)`` with ``down == a`` and
  ``up == b``, so ``sigma_z = |b><b| - |a><a|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp

DENSE_BUDGET = 10_000_000
PRUNE_TOL = 1e-15
NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-10
EIG_TOL = 1e-9


class LayoutError(ValueError):
    """Raised for inconsistent layouts, dimensions or site indices."""


@dataclass(frozen=True)
class Atom3:
    """Three-level atom with levels a, b, e."""

    @property
    def dim(self) -> int:
        return 3


@dataclass(frozen=True)
class Spin:
    """Spin-1/2 with levels down (= a) and up (= b)."""

    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class Photon:
    """Single bosonic mode truncated at ``n_max`` photons."""

    n_max: int = 2

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise LayoutError(f"photon cutoff must be an integer >= 1, got {self.n_max}")

    @property
    def dim(self) -> int:
        return self.n_max + 1


SiteKind = Union[Atom3, Spin, Photon]


@dataclass(frozen=True)
class HilbertSpaceLayout:
    """Ordered list of sites defining the tensor-product index arithmetic."""

    sites: tuple

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.sites:
            raise LayoutError("layout needs at least one site")
        for s in self.sites:
            if not isinstance(s, (Atom3, Spin, Photon)):
                raise LayoutError(f"unknown site kind {s!r}")
        if self.dim > DENSE_BUDGET:
            raise LayoutError(
                f"total dimension {self.dim} exceeds the dense-state budget {DENSE_BUDGET}"
            )

    @property
    def dims(self) -> tuple:
        return tuple(s.dim for s in self.sites)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def __len__(self):
        return len(self.sites)

    def site_dim(self, index: int) -> int:
        self._check_index(index)
        return self.sites[index].dim

    def _check_index(self, index: int):
        if not 0 <= index < len(self.sites):
            raise LayoutError(f"site index {index} out of range for {len(self.sites)} sites")

    def product_state(self, locals_: Sequence[np.ndarray]) -> "StateVector":
        """Tensor product of one local vector per site (normalized)."""
        if len(locals_) != len(self.sites):
            raise LayoutError("need one local vector per site")
        vecs = []
        for s, v in zip(self.sites, locals_):
            v = np.asarray(v, dtype=complex)
            if v.shape != (s.dim,):
                raise LayoutError(f"local vector of shape {v.shape} for site of dim {s.dim}")
            vecs.append(v)
        amps = reduce(np.kron, vecs)
        return StateVector(self, amps / np.linalg.norm(amps))


def canonical(op) -> sp.csr_matrix:
    """Return ``op`` as a canonical CSR matrix: summed duplicates, sorted, pruned."""
    m = sp.csr_matrix(op, dtype=complex)
    m.sum_duplicates()
    if m.nnz:
        m.data[np.abs(m.data) < PRUNE_TOL] = 0.0
    m.eliminate_zeros()
    m.sort_indices()
    return m


def triplets(op) -> list:
    """Entries of a sparse operator as sorted ``(row, col, value)`` triplets."""
    c = canonical(op).tocoo()
    order = np.lexsort((c.col, c.row))
    return [(int(c.row[i]), int(c.col[i]), complex(c.data[i])) for i in order]


@dataclass
class StateVector:
    """Pure state on a layout.

    Normalization is checked at construction unless ``check_norm`` is False,
    which is used for the unnormalized output of :func:`apply`.
    """

    layout: HilbertSpaceLayout
    amplitudes: np.ndarray
    check_norm: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.layout.dim:
            raise LayoutError(
                f"state has {amps.shape[0]} amplitudes, layout dimension is {self.layout.dim}"
            )
        self.amplitudes = amps
        if self.check_norm:
            n = float(np.vdot(amps, amps).real)
            if abs(n - 1.0) > NORM_TOL:
                raise ValueError(f"state is not normalized: |psi|^2 = {n!r}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.layout, self.amplitudes.copy(), check_norm=False)


@dataclass
class DensityMatrix:
    """Density matrix, optionally tied to a layout for partial traces."""

    matrix: np.ndarray
    layout: HilbertSpaceLayout | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if self.layout is not None and self.layout.dim != m.shape[0]:
            raise LayoutError("density matrix dimension does not match its layout")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace is {tr!r}")
        lam = np.linalg.eigvalsh(m)
        if lam.min() < -EIG_TOL:
            raise ValueError(f"density matrix has eigenvalue {lam.min()!r}")
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        lam = np.linalg.eigvalsh(self.matrix)
        return np.where(lam < 0.0, 0.0, lam)


# Local operators ---------------------------------------------------------

def ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(dim: int, i: int, j: int | None = None) -> sp.csr_matrix:
    """``|i><j|`` on a ``dim``-level site (``j`` defaults to ``i``)."""
    j = i if j is None else j
    return sp.csr_matrix(([1.0 + 0j], ([i], [j])), shape=(dim, dim))


def annihilation(n_max: int) -> sp.csr_matrix:
    n = np.arange(1, n_max + 1)
    return sp.csr_matrix((np.sqrt(n).astype(complex), (n - 1, n)), shape=(n_max + 1, n_max + 1))


def number(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.arange(n_max + 1).astype(complex), format="csr")


SIGMA_X = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
SIGMA_Y = sp.csr_matrix(np.array([[0, 1j], [-1j, 0]], dtype=complex))
SIGMA_Z = sp.csr_matrix(np.array([[-1, 0], [0, 1]], dtype=complex))
SIGMA_PLUS = sp.csr_matrix(np.array([[0, 0], [1, 0]], dtype=complex))
SIGMA_MINUS = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))


# Core operations ---------------------------------------------------------

def embed_site_operator(layout: HilbertSpaceLayout, site_index: int, local) -> sp.csr_matrix:
    """Lift a local operator on one site to the whole space.

    Returns ``1 x ... x local x ... x 1`` in the layout's index order.
    """
    layout._check_index(site_index)
    local = canonical(local)
    d = layout.sites[site_index].dim
    if local.shape != (d, d):
        raise LayoutError(f"local operator of shape {local.shape} on site of dim {d}")
    left = int(np.prod(layout.dims[:site_index], dtype=np.int64))
    right = int(np.prod(layout.dims[site_index + 1:], dtype=np.int64))
    out = sp.kron(sp.identity(left, dtype=complex, format="csr"), local, format="csr")
    out = sp.kron(out, sp.identity(right, dtype=complex, format="csr"), format="csr")
    return canonical(out)


def embed_product(layout: HilbertSpaceLayout, factors: dict) -> sp.csr_matrix:
    """Whole-space operator from a ``{site_index: local}`` product of local factors."""
    out = None
    for i in range(len(layout)):
        f = factors.get(i)
        f = sp.identity(layout.sites[i].dim, dtype=complex, format="csr") if f is None else canonical(f)
        if f.shape != (layout.sites[i].dim,) * 2:
            raise LayoutError(f"factor of shape {f.shape} on site {i}")
        out = f if out is None else sp.kron(out, f, format="csr")
    return canonical(out)


def _check_dims(op, n: int):
    if op.shape != (n, n):
        raise LayoutError(f"operator of shape {op.shape} does not act on dimension {n}")


def apply(op, psi: StateVector) -> StateVector:
    """Sparse matrix-vector product; the result is not renormalized."""
    _check_dims(op, psi.layout.dim)
    return StateVector(psi.layout, op @ psi.amplitudes, check_norm=False)


def expectation(op, psi: StateVector, hermitian: bool | None = None):
    """``<psi|op|psi>``; real for Hermitian ``op``.

    ``hermitian`` may be passed to skip the Hermiticity test.
    """
    _check_dims(op, psi.layout.dim)
    val = np.vdot(psi.amplitudes, op @ psi.amplitudes)
    if hermitian is None:
        d = op - op.conj().T
        hermitian = (abs(d).max() if d.nnz else 0.0) < HERMITIAN_TOL
    if hermitian:
        if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
            raise ValueError(f"Hermitian expectation has imaginary part {val.imag!r}")
        return float(val.real)
    return complex(val)


def _keep_list(keep: Iterable[int], n_sites: int) -> list:
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise LayoutError("keep set must not be empty")
    for k in keep:
        if not 0 <= k < n_sites:
            raise LayoutError(f"site index {k} out of range")
    return keep


def partial_trace(state: StateVector | DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix on the sites in ``keep`` (kept in ascending order)."""
    layout = state.layout
    if layout is None:
        raise LayoutError("partial trace needs a layout")
    keep = _keep_list(keep, len(layout))
    rest = [i for i in range(len(layout)) if i not in keep]
    dims = layout.dims
    dk = int(np.prod([dims[i] for i in keep]))
    sub = HilbertSpaceLayout(tuple(layout.sites[i] for i in keep))
    if isinstance(state, StateVector):
        t = state.amplitudes.reshape(dims).transpose(keep + rest).reshape(dk, -1)
        rho = t @ t.conj().T
    else:
        n = len(dims)
        t = state.matrix.reshape(dims + dims)
        perm = keep + rest + [n + i for i in keep] + [n + i for i in rest]
        dr = layout.dim // dk
        t = t.transpose(perm).reshape(dk, dr, dk, dr)
        rho = np.einsum("ajbj->ab", t)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, sub)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy ``-sum(l ln l)`` in nats."""
    lam = rho.eigenvalues()
    lam = lam[lam > 0.0]
    return float(-np.sum(lam * np.log(lam)))


def purity(rho: DensityMatrix) -> float:
    """``tr(rho^2)``."""
    m = rho.matrix
    return float(np.real(np.vdot(m, m)))


def project_atoms_to_spins(psi: StateVector) -> tuple:
    """Project every Atom3 site onto span{a, b}, mapping it to a Spin site.

    Returns ``(state, discarded)`` where ``state`` is renormalized and
    ``discarded`` is the weight removed by the projection.
    """
    layout = psi.layout
    dims = layout.dims
    t = psi.amplitudes.reshape(dims)
    idx = []
    sites = []
    for s in layout.sites:
        if isinstance(s, Atom3):
            idx.append(slice(0, 2))
            sites.append(Spin())
        else:
            idx.append(slice(None))
            sites.append(s)
    sub = t[tuple(idx)].reshape(-1)
    w = float(np.vdot(sub, sub).real)
    if w <= 0.0:
        raise ValueError("state has no weight in the spin subspace")
    return StateVector(HilbertSpaceLayout(tuple(sites)), sub / np.sqrt(w)), 1.0 - w
