import itertools
import math

import numpy as np
import pytest
from dataclasses import replace

from cavityspin import elimination as el
from cavityspin import models as m
from cavityspin.experiments import floquet_spin_hamiltonian, spin_initial_state, \
    spin_manifold_indices
from cavityspin.propagation import IntegratorConfig, Trajectory, period_propagator

from conftest import cluster_zz, fig3_xy, fig3_zz

MHZ = 1e-3
PAULI = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, 1j], [-1j, 0]]),
         "Z": np.diag([-1.0, 1.0])}


def pauli_coefficients(H):
    out = {}
    for a, b in itertools.product("IXYZ", repeat=2):
        out[a + b] = np.trace(np.kron(PAULI[a], PAULI[b]).conj().T @ H).real / 4
    return out


def agree(derived, oracle):
    """Relative 20% for values >= 0.02 MHz, 0.01 MHz absolute otherwise."""
    if abs(oracle) >= 0.02 * MHZ or abs(derived) >= 0.02 * MHZ:
        return abs(derived - oracle) <= 0.2 * abs(oracle)
    return abs(derived - oracle) <= 0.01 * MHZ


# Validity ---------------------------------------------------------------

def test_fig3_validity_audit():
    rep = el.check_validity(fig3_xy())
    assert rep.all_passed and not rep.warnings
    # |delta_b^k| = |omega_e - (omega_C + J_C) - (omega_ab - delta1)| over the open-chain modes
    worst = abs(58.0 - 0.2 - (30.0 + 0.0165)) / 2.0
    # omega_e ~ 1e6 costs about ten digits in the detuning differences
    assert rep.worst.ratio == pytest.approx(worst, rel=1e-9)
    assert el.check_validity(fig3_zz()).all_passed


def test_constructed_violation_has_ratio_one():
    p = fig3_xy(g_a=30.0)
    rep = el.check_validity(p)
    c = rep.checks[0]
    assert c.ratio == pytest.approx(1.0) and c.status == "fail"
    with pytest.raises(el.ValidityError):
        el.require_valid(p)


def test_vanishing_couplings_pass():
    p = fig3_xy(rabi_a=0.0, rabi_b=0.0, g_a=0.0, g_b=0.0)
    rep = el.check_validity(p)
    assert all(math.isinf(c.ratio) for c in rep.checks) and rep.all_passed


def test_warning_band():
    # ratio between 2 and 10 is a warning
    rep = el.check_validity(fig3_xy(rabi_a=5.0, rabi_b=5.0))
    assert rep.warnings and not rep.hard_fail


# Derived parameters ---------------------------------------------------------

def test_no_cavity_no_exchange():
    sp_ = el.derive_xy_params(fig3_xy(g_a=0.0, g_b=0.0))
    assert sp_.J1 == 0.0 and sp_.J2 == 0.0


def test_fig3_values_match_quoted_couplings():
    sp_ = el.derive_xy_params(fig3_xy())
    assert abs(sp_.Jx - 0.065 * MHZ) <= 0.2 * 0.065 * MHZ
    assert abs(sp_.Jy - 0.007 * MHZ) <= 0.01 * MHZ
    assert abs(el.derive_zz_params(fig3_zz()).Jz - 0.004 * MHZ) <= 0.01 * MHZ


def test_cluster_configuration_reaches_target_jz():
    assert el.derive_zz_params(cluster_zz()).Jz == pytest.approx(0.042 * MHZ, rel=1e-9)
    assert abs(el.derive_zz_params(cluster_zz()).B_tilde) < 1e-9 * MHZ


def test_field_monotone_and_changes_sign():
    zz = el.derive_zz_params(fig3_zz())
    d1 = np.linspace(-0.0170, -0.0160, 21)
    B = np.array([el.derive_xy_params(fig3_xy(x)).B for x in d1])
    assert np.all(np.diff(B) > 0) or np.all(np.diff(B) < 0)
    ba = el.derive_xy_params(fig3_xy(-0.0165)).B + zz.B_tilde
    bb = el.derive_xy_params(fig3_xy(-0.0168)).B + zz.B_tilde
    assert ba > 0 > bb
    assert abs(ba - 0.135 * MHZ) <= 0.2 * 0.135 * MHZ
    assert abs(bb + 0.025 * MHZ) <= 0.01 * MHZ


def _ising_ratio(p, sign):
    d = m.detunings(p)
    return sign * d.Delta_a * p.g_a / (d.Delta_b * p.g_b)


@pytest.mark.parametrize("scale", [0.5, 1.0, 1.5])
def test_ising_limits(scale):
    base = fig3_xy()
    ob = 2.0 * scale
    plus = replace(base, rabi_b=ob, rabi_a=_ising_ratio(base, +1) * ob)
    minus = replace(base, rabi_b=ob, rabi_a=_ising_ratio(base, -1) * ob)
    sp_p, sp_m = el.derive_xy_params(plus), el.derive_xy_params(minus)
    assert abs(sp_p.Jy) <= 1e-3 * abs(sp_p.Jx)
    assert abs(sp_m.Jx) <= 1e-3 * abs(sp_m.Jy)


@pytest.mark.parametrize("which", ["rabi_a", "rabi_b"])
def test_isotropy_limit(which):
    sp_ = el.derive_xy_params(replace(fig3_xy(), **{which: 0.0}))
    assert abs(sp_.Jx - sp_.Jy) / abs(sp_.Jx) < 1e-6


def test_jz_independent_of_lambda():
    ref = el.derive_zz_params(fig3_zz()).Jz
    bts = []
    for lam in (0.0, 0.3, 0.71, 1.2):
        sp_ = el.derive_zz_params(fig3_zz(lam_a=lam, lam_b=lam))
        assert sp_.Jz == ref
        bts.append(sp_.B_tilde)
    assert len(set(bts)) == len(bts)


def test_degenerate_denominator_rejected():
    # laser a resonant with the excited level
    p = m.XYDriveParams(**{**fig3_xy().__dict__, "omega_a": fig3_xy().omega_e})
    with pytest.raises((el.DerivationError, el.ValidityError)):
        el.derive_xy_params(p)


@pytest.mark.parametrize("scheme", ["xy", "zz"])
def test_derived_against_floquet_oracle(scheme):
    """Effective spin Hamiltonian of one drive period of the full model."""
    if scheme == "xy":
        p = fig3_xy()
        H, _ = m.build_full_xy(p)
        sp_ = el.derive_xy_params(p)
        pairs = [("ZI", sp_.B), ("XX", sp_.Jx), ("YY", sp_.Jy)]
    else:
        p = fig3_zz()
        H, _ = m.build_full_zz(p)
        sp_ = el.derive_zz_params(p)
        pairs = [("ZI", sp_.B_tilde), ("ZZ", sp_.Jz)]
    U, T = period_propagator(H, IntegratorConfig(steps_per_fastest_period=320))
    c = pauli_coefficients(floquet_spin_hamiltonian(U, T, spin_manifold_indices(m.full_layout(2, 2))))
    for name, val in pairs:
        assert agree(val, c[name]), (name, val / MHZ, c[name] / MHZ)


# Fit -----------------------------------------------------------------------

def synthetic(sp_, t_end=140_000.0, n=1400):
    t = np.linspace(0, t_end, n)
    names = el.POPULATIONS + el.COHERENCES
    obs = el.effective_curves("full", sp_, t, names, spin_initial_state(2))
    return Trajectory(t, obs, None)


@pytest.mark.parametrize("B", [0.0648, -0.0105])
def test_fit_recovers_parameters(B):
    true = m.SpinParams(B_tot=B * MHZ, Jx=0.031 * MHZ, Jy=0.0035 * MHZ, Jz=0.0037 * MHZ)
    guess = m.SpinParams(B_tot=abs(B) * 1.1 * MHZ, Jx=0.028 * MHZ, Jy=0.004 * MHZ,
                         Jz=0.003 * MHZ)
    f = el.fit_effective_params(synthetic(true), "full", guess, psi0=spin_initial_state(2))
    assert f.residual < 1e-6
    for k in ("B_tot", "Jx", "Jy", "Jz"):
        assert getattr(f.params, k) == pytest.approx(getattr(true, k), rel=1e-4, abs=1e-9)
    assert "Jz" in f.extra["blind"]


def test_fit_flat_populations_uses_coherences():
    # both spins in superposition so that the field and Jz separate
    plus = m.spin_layout(2).product_state([np.array([1.0, 1.0])] * 2)
    true = m.SpinParams(B_tilde=0.02 * MHZ, Jz=0.042 * MHZ)
    t = np.linspace(0, 60_000.0, 1200)
    names = el.POPULATIONS + el.COHERENCES
    tr = Trajectory(t, el.effective_curves("zz", true, t, names, plus), None)
    f = el.fit_effective_params(tr, "zz", m.SpinParams(B_tilde=0.018 * MHZ, Jz=0.04 * MHZ),
                                psi0=plus)
    assert f.extra["stage1_observables"] == el.COHERENCES
    assert f.params.Jz == pytest.approx(true.Jz, rel=1e-4)
    assert f.params.B_tilde == pytest.approx(true.B_tilde, rel=1e-4)


def test_fit_rejects_poor_model():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 60_000.0, 600)
    obs = {n: rng.uniform(0, 1, t.size) for n in el.POPULATIONS}
    with pytest.raises(el.FitError):
        el.fit_effective_params(Trajectory(t, obs, None), "full",
                                m.SpinParams(B_tot=1e-4, Jx=5e-5, Jy=1e-5, Jz=1e-5),
                                psi0=spin_initial_state(2))


# Feasibility -----------------------------------------------------------------

def test_feasibility_formulas_exact():
    p = fig3_xy()
    noise = el.NoiseParams(gamma_e=0.01, gamma_c=5.0)
    f = el.estimate_feasibility(p, noise)
    delta = abs((p.omega_a + p.omega_b) / 2 - p.omega_c)
    Om, g, D = 2.0, 1.0, 30.0
    assert f.delta == pytest.approx(delta, rel=1e-12)
    assert f.gamma1 == pytest.approx(1 / delta, rel=1e-12)
    assert f.gamma2 == pytest.approx(0.2 / delta ** 2, rel=1e-12)
    assert f.Gamma1 == pytest.approx((Om / (2 * D)) ** 2 * 0.01, rel=1e-12)
    assert f.Gamma2 == pytest.approx((Om * g / (2 * D) / delta) ** 2 * 5.0, rel=1e-12)
    assert f.cooperativity == pytest.approx(10.0, rel=1e-12)
    assert f.g_over_gamma_e == pytest.approx(100.0, rel=1e-12)


def test_feasibility_zz_detuning():
    p = fig3_zz()
    f = el.estimate_feasibility(p, el.NoiseParams(), "zz")
    assert f.delta == pytest.approx(abs(p.omega - p.omega_c), rel=1e-12)


def test_feasibility_lossless():
    f = el.estimate_feasibility(fig3_xy(), el.NoiseParams())
    assert f.Gamma1 == 0.0 and f.Gamma2 == 0.0
    assert math.isinf(f.ratio_emission) and math.isinf(f.ratio_cavity)


def test_feasibility_needs_detuned_band():
    p = fig3_xy(j_c=1.5)
    with pytest.raises(ValueError):
        el.estimate_feasibility(p, el.NoiseParams())


@pytest.mark.parametrize("g,ge,gc,coop,gge", [(1.0, 0.01, 5.0, 10.0, 100.0),
                                              (1.0, 0.02, 0.625, 40.0, 50.0)])
def test_device_figures(g, ge, gc, coop, gge):
    d = el.DevicePreset("d", g, ge, gc)
    assert d.cooperativity == pytest.approx(coop, rel=1e-12)
    assert d.g_over_gamma_e == pytest.approx(gge, rel=1e-12)
    assert d.classification() == "warn"
    n = d.noise_for(2.0)
    assert 2.0 ** 2 / (2 * n.gamma_c * n.gamma_e) == pytest.approx(coop, rel=1e-12)
