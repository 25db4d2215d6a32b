import math
from functools import reduce

import numpy as np
import pytest

from cavityspin import models as m
from cavityspin import quantum as q

from conftest import fig3_xy, fig3_zz

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], complex)
Y = np.array([[0, 1j], [-1j, 0]], complex)
Z = np.diag([-1.0, 1.0]).astype(complex)


def kron(*ops):
    return reduce(np.kron, ops)


@pytest.mark.parametrize("n", [3, 5, 7, 9])
def test_periodic_hopping_spectrum(n):
    wc, jc = 1e6 - 58.0, 0.2
    p = m.XYDriveParams(n_sites=n, boundary="periodic", omega_c=wc, j_c=jc)
    w, _ = m.cavity_modes(p)
    ref = sorted(wc + 2 * jc * math.cos(2 * math.pi * l / n) for l in range(n))
    assert np.max(np.abs(np.sort(w) - ref)) < 1e-10
    spec = sorted(x for _, x in m.cavity_mode_spectrum(wc, jc, n))
    assert np.max(np.abs(np.array(spec) - ref)) < 1e-10


def test_open_chain_modes():
    w, u = m.cavity_modes(fig3_xy())
    assert np.allclose(np.sort(w), [1e6 - 58.2, 1e6 - 57.8])
    assert np.allclose(u.T @ u, np.eye(2))


def test_spin_hamiltonian_against_kron():
    sp_ = m.SpinParams(B_tot=0.3, Jx=0.2, Jy=-0.1, Jz=0.05)
    H = m.build_spin_full(sp_, 2).toarray()
    ref = 0.3 * (kron(Z, I2) + kron(I2, Z)) + 0.2 * kron(X, X) - 0.1 * kron(Y, Y) \
        + 0.05 * kron(Z, Z)
    assert np.max(np.abs(H - ref)) < 1e-14


def test_three_site_periodic_chain_has_three_bonds():
    sp_ = m.SpinParams(Jz=1.0)
    H = m.build_spin_zz(sp_, 3, "periodic").toarray()
    ref = kron(Z, Z, I2) + kron(I2, Z, Z) + kron(Z, I2, Z)
    assert np.max(np.abs(H - ref)) < 1e-14


def test_j1_j2_and_jx_jy_forms_agree():
    a = m.SpinParams(J1=0.3, J2=0.1)
    b = m.SpinParams(Jx=0.2, Jy=0.1)
    assert a.Jx == pytest.approx(0.2) and a.Jy == pytest.approx(0.1)
    assert np.allclose(m.build_spin_xy(a, 2).toarray(), m.build_spin_xy(b, 2).toarray())
    c = m.SpinParams(J1=0.3, J2=0.1 + 0.0j * 1j)
    assert np.allclose(m.build_spin_xy(c, 2).toarray(), m.build_spin_xy(b, 2).toarray())


def test_xy_frame_locks_to_laser_a():
    fr = m.xy_frame(fig3_xy())
    assert fr.theta_e == pytest.approx(-30.0)
    assert fr.theta_p == pytest.approx(-60.0165)
    assert fr.max_abs_nu == pytest.approx(30.0165)


def test_zz_frame_locks_to_laser_omega():
    fr = m.zz_frame(fig3_zz())
    assert fr.theta_e == pytest.approx(-60.0)
    assert fr.theta_p == pytest.approx(-60.0)
    assert fr.max_abs_nu == pytest.approx(75.0)


@pytest.mark.parametrize("build,p", [(m.build_full_xy, fig3_xy()), (m.build_full_zz, fig3_zz())])
def test_full_hamiltonian_hermitian_and_periodic(build, p):
    H, fr = build(p)
    for t in (0.0, 0.37, 12.9):
        A = H.at(t).toarray()
        assert np.max(np.abs(A - A.conj().T)) < 1e-12
    T = 2 * math.pi / H.base_frequency()
    assert np.max(np.abs(H.at(0.3).toarray() - H.at(0.3 + T).toarray())) < 1e-9
    assert H.dim == 81


def test_single_photon_sector_carries_hopping_spectrum():
    p = fig3_xy(rabi_a=0.0, rabi_b=0.0, g_a=0.0, g_b=0.0)
    H, fr = m.build_full_xy(p, n_max=1)
    lay = m.full_layout(2, 1)
    # atoms in a, exactly one photon
    idx = []
    for n1 in range(2):
        for n2 in range(2):
            if n1 + n2 == 1:
                idx.append(np.ravel_multi_index((0, n1, 0, n2), lay.dims))
    A = H.static_part.toarray()[np.ix_(idx, idx)]
    res = dict(fr.diagonal)["photon"]
    ev = np.sort(np.linalg.eigvalsh(A)) - res
    assert np.max(np.abs(ev - np.array([-0.2, 0.2]))) < 1e-10


def test_lasers_off_is_static_diagonal():
    p = fig3_xy(rabi_a=0.0, rabi_b=0.0)
    H, _ = m.build_full_xy(p)
    lay = m.full_layout(2, 2)
    # with no photons and no lasers the ground manifold is invariant
    psi = lay.product_state([q.ket(3, 0) + q.ket(3, 1), q.ket(3, 0), q.ket(3, 0), q.ket(3, 0)])
    out = H.at(0.7) @ psi.amplitudes
    pa = q.embed_site_operator(lay, 0, q.projector(3, 0))
    assert abs(np.vdot(out, pa @ psi.amplitudes) - np.vdot(psi.amplitudes, pa @ out)) < 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        m.XYDriveParams(n_sites=0)
    with pytest.raises(ValueError):
        m.XYDriveParams(boundary="ring")
    with pytest.raises(ValueError):
        m.ZZDriveParams(omega=float("nan"))
    with pytest.raises(ValueError):
        m.cavity_mode_spectrum(1.0, 0.1, 4)
