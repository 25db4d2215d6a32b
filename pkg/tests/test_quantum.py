import math
from functools import reduce

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from cavityspin import quantum as q

SITES = st.sampled_from([q.Atom3(), q.Spin(), q.Photon(1), q.Photon(2)])


def random_state(layout, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return q.StateVector(layout, v / np.linalg.norm(v))


def random_local(d, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def dense_partial_trace(psi, dims, keep):
    # explicit index loop over the traced sites
    rest = [i for i in range(len(dims)) if i not in keep]
    t = psi.reshape(dims)
    dk = [dims[i] for i in keep]
    out = np.zeros((int(np.prod(dk)),) * 2, dtype=complex)
    for r in np.ndindex(*[dims[i] for i in rest]):
        idx = [slice(None)] * len(dims)
        for i, ri in zip(rest, r):
            idx[i] = ri
        v = t[tuple(idx)].reshape(-1)
        out += np.outer(v, v.conj())
    return out


@settings(max_examples=30, deadline=None)
@given(st.lists(SITES, min_size=1, max_size=4), st.integers(0, 2**31), st.data())
def test_embed_matches_kron(sites, seed, data):
    lay = q.HilbertSpaceLayout(tuple(sites))
    if lay.dim > 256:
        return
    j = data.draw(st.integers(0, len(sites) - 1))
    A = random_local(lay.dims[j], seed)
    ref = reduce(np.kron, [A if i == j else np.eye(d) for i, d in enumerate(lay.dims)])
    assert np.max(np.abs(q.embed_site_operator(lay, j, A).toarray() - ref)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(SITES, min_size=2, max_size=4), st.integers(0, 2**31), st.data())
def test_partial_trace_matches_loop(sites, seed, data):
    lay = q.HilbertSpaceLayout(tuple(sites))
    if lay.dim > 256:
        return
    keep = sorted(data.draw(st.sets(st.integers(0, len(sites) - 1), min_size=1)))
    psi = random_state(lay, seed)
    rho = q.partial_trace(psi, keep)
    ref = dense_partial_trace(psi.amplitudes, lay.dims, keep)
    assert np.max(np.abs(rho.matrix - ref)) < 1e-10
    # same result through the density-matrix path
    dm = q.DensityMatrix(np.outer(psi.amplitudes, psi.amplitudes.conj()), lay)
    assert np.max(np.abs(q.partial_trace(dm, keep).matrix - ref)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_entropy_and_purity_against_matrix_functions(seed):
    lay = q.HilbertSpaceLayout((q.Spin(), q.Atom3(), q.Photon(2)))
    psi = random_state(lay, seed)
    rho = q.partial_trace(psi, [0, 1]).matrix
    ref = -np.trace(rho @ sla.logm(rho)).real
    assert abs(q.von_neumann_entropy(q.DensityMatrix(rho)) - ref) < 1e-10
    assert abs(q.purity(q.DensityMatrix(rho)) - np.trace(rho @ rho).real) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_expectation_and_apply(seed):
    lay = q.HilbertSpaceLayout((q.Atom3(), q.Photon(2)))
    psi = random_state(lay, seed)
    A = random_local(lay.dim, seed + 1)
    H = A + A.conj().T
    import scipy.sparse as sp
    assert abs(q.expectation(sp.csr_matrix(H), psi) - np.vdot(psi.amplitudes, H @ psi.amplitudes).real) < 1e-10
    out = q.apply(sp.csr_matrix(A), psi)
    assert np.max(np.abs(out.amplitudes - A @ psi.amplitudes)) < 1e-10


def test_bell_state_entropy_is_ln2():
    lay = q.HilbertSpaceLayout((q.Spin(), q.Spin()))
    psi = q.StateVector(lay, np.array([1, 0, 0, 1]) / math.sqrt(2))
    rho = q.partial_trace(psi, [0])
    assert abs(q.von_neumann_entropy(rho) - math.log(2)) < 1e-12
    assert abs(q.purity(rho) - 0.5) < 1e-12


def test_product_state_entropy_zero():
    lay = q.HilbertSpaceLayout((q.Spin(), q.Atom3()))
    psi = lay.product_state([np.array([1, 1]), np.array([1, 0, 1j])])
    assert q.von_neumann_entropy(q.partial_trace(psi, [0])) < 1e-12


def test_ladder_operators():
    a = q.annihilation(3).toarray()
    assert np.allclose(a.conj().T @ a, q.number(3).toarray())
    assert np.allclose(np.diag(q.number(3).toarray()), [0, 1, 2, 3])


def test_pauli_conventions():
    # down = a = index 0
    Z, Y = q.SIGMA_Z.toarray(), q.SIGMA_Y.toarray()
    assert np.allclose(Z, np.diag([-1, 1]))
    assert np.allclose(Y @ Y, np.eye(2))
    X, P, M = q.SIGMA_X.toarray(), q.SIGMA_PLUS.toarray(), q.SIGMA_MINUS.toarray()
    # the basis is (down, up), so the Pauli algebra keeps its usual orientation
    assert np.allclose(X @ Y, 1j * Z)
    assert np.allclose(P + M, X) and np.allclose(1j * (M - P), Y)
    assert np.allclose(P @ q.ket(2, 0), q.ket(2, 1))


def test_projection_to_spins_reports_discarded_weight():
    lay = q.HilbertSpaceLayout((q.Atom3(), q.Photon(1)))
    v = np.zeros(6, complex)
    v[0] = math.sqrt(0.5)     # a, 0
    v[4] = math.sqrt(0.25)    # e, 0
    v[3] = math.sqrt(0.25)    # b, 1
    s, w = q.project_atoms_to_spins(q.StateVector(lay, v))
    assert abs(w - 0.25) < 1e-12
    assert s.layout.dims == (2, 2)
    assert abs(s.norm - 1) < 1e-12


def test_invalid_inputs():
    with pytest.raises(q.LayoutError):
        q.Photon(0)
    lay = q.HilbertSpaceLayout((q.Spin(),))
    with pytest.raises(ValueError):
        q.StateVector(lay, np.array([1.0, 1.0]))
    with pytest.raises(q.LayoutError):
        q.embed_site_operator(lay, 1, np.eye(2))
    with pytest.raises(ValueError):
        q.DensityMatrix(np.array([[1.0, 1.0], [0.0, 0.0]]))
