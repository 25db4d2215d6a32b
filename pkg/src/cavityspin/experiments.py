"""Full-versus-effective comparisons, cluster-state generation and sweeps."""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import elimination as el
from . import models as m
from . import quantum as q
from .models import SpinParams, XYDriveParams, ZZDriveParams
from .propagation import (IntegratorConfig, Schedule, TimeDependentHamiltonian, evolve,
                          evolve_schedule, evolve_static_exact, period_propagator,
                          schedule_repeat)

FIT_SKIP_NS = 2000.0
ROUNDING = ("none", "nearest", "matched")
SEGMENT_WINDOW = 0.05
MATCH_DIM_LIMIT = 256
FIT_PERIODS = 1.5
MAX_FIT_TIME_NS = 400_000.0


class SandwichError(ValueError):
    """Interleave step violates the time-scale separation by more than 3x."""


@dataclass(frozen=True)
class InterleaveSpec:
    """Alternation of XY (``dt1``) and ZZ (``dt2``) segments, in ns."""

    dt1: float = 50.0
    dt2: float = 50.0
    total_time: float = 60_000.0
    mode: str = "interleaved"
    rounding: str = "matched"

    def __post_init__(self):
        if self.mode not in ("interleaved", "simultaneous"):
            raise ValueError(f"unknown interleave mode {self.mode!r}")
        if self.rounding not in ROUNDING:
            raise ValueError(f"unknown segment rounding {self.rounding!r}")
        if not (self.dt1 > 0 and self.dt2 > 0 and self.total_time > 0):
            raise ValueError("interleave durations must be positive")

    @property
    def weights(self) -> tuple:
        c = self.dt1 + self.dt2
        return self.dt1 / c, self.dt2 / c


def check_sandwich(il: InterleaveSpec, xy: XYDriveParams | None, zz: ZZDriveParams | None,
                   sp_: SpinParams) -> list:
    """Check ``1/Omega, 1/g << dt << 1/J, 1/B`` with a margin of 10.

    Returns warning messages; raises :class:`SandwichError` when a bound is
    missed by more than a factor of 3.
    """
    msgs = []
    slow = [sp_.Jx, sp_.Jy, sp_.Jz, sp_.B, sp_.B_tilde]
    slow = [abs(float(np.real(x))) for x in slow if x is not None and x != 0]
    t_slow = min(1.0 / x for x in slow) if slow else math.inf
    for name, dt, p in (("dt1", il.dt1, xy), ("dt2", il.dt2, zz)):
        if p is None:
            continue
        fast = [abs(x) for x in (p.rabi_a, p.rabi_b, p.g_a, p.g_b) if x]
        t_fast = max(1.0 / x for x in fast) if fast else 0.0
        lo, hi = 10.0 * t_fast, t_slow / 10.0
        if dt < lo:
            msgs.append(f"{name} = {dt} ns is below {lo:.3g} ns (fast time scale x10)")
            if dt < lo / 3.0:
                raise SandwichError(msgs[-1])
        if dt > hi:
            msgs.append(f"{name} = {dt} ns is above {hi:.3g} ns (slow time scale / 10)")
            if dt > 3.0 * hi:
                raise SandwichError(msgs[-1])
    return msgs


def spin_manifold_indices(layout: q.HilbertSpaceLayout) -> np.ndarray:
    """Basis indices with every atom in a or b and every cavity empty."""
    grids = []
    for site in layout.sites:
        grids.append([0, 1] if isinstance(site, q.Atom3) else [0])
    idx = np.array(list(itertools.product(*grids)), dtype=int)
    return np.ravel_multi_index(idx.T, layout.dims)


def floquet_spin_hamiltonian(U: np.ndarray, T: float, idx: np.ndarray) -> np.ndarray:
    """Traceless effective Hamiltonian of the spin manifold from a one-cycle propagator.

    The Floquet states with the largest weight on ``idx`` are projected
    onto it and orthonormalized; quasi-energies are ``-arg(lambda) / T``.
    """
    ev, V = np.linalg.eig(U)
    weight = np.sum(np.abs(V[idx, :]) ** 2, axis=0)
    sel = np.argsort(-weight, kind="stable")[: idx.size]
    W = V[np.ix_(idx, sel)]
    u, _, vh = np.linalg.svd(W)
    W = u @ vh
    H = (W * (-np.angle(ev[sel]) / T)) @ W.conj().T
    return H - np.trace(H) / idx.size * np.eye(idx.size)


def snap_to_periods(il: InterleaveSpec, xyH, zzH, layout: q.HilbertSpaceLayout | None = None,
                    cfg: IntegratorConfig | None = None) -> tuple:
    """Round ``dt1``/``dt2`` to whole periods of the respective drive.

    A segment that ends mid-period leaves a residue of the off-resonant
    terms which then adds up coherently from cycle to cycle; whole periods
    remove it and start every segment at the same drive phase. Sudden
    switching still kicks the state slightly at every boundary, and for
    some segment lengths these kicks are resonant with states outside the
    spin manifold. ``rounding="matched"`` therefore searches the whole-period
    lengths within ``SEGMENT_WINDOW`` of the request for the cycle whose
    spin-manifold Floquet Hamiltonian is closest to the duty-weighted mean
    of the two single-scheme Floquet Hamiltonians; ``"nearest"`` takes the
    nearest whole periods.

    Returns ``(spec, info)``.
    """
    info = {"rounding": il.rounding, "requested_ns": [il.dt1, il.dt2]}
    if il.rounding == "none" or xyH.is_static or zzH.is_static:
        return il, info
    bx, bz = xyH.base_frequency(), zzH.base_frequency()
    if bx is None or bz is None:
        return il, info
    Tx, Tz = 2.0 * math.pi / bx, 2.0 * math.pi / bz
    nx, nz = max(1, round(il.dt1 / Tx)), max(1, round(il.dt2 / Tz))
    if il.rounding == "matched" and layout is not None and xyH.dim <= MATCH_DIM_LIMIT:
        cfg = cfg or IntegratorConfig()
        Mx, Tx = period_propagator(xyH, cfg)
        Mz, Tz = period_propagator(zzH, cfg)
        idx = spin_manifold_indices(layout)
        Hx = floquet_spin_hamiltonian(Mx, Tx, idx)
        Hz = floquet_spin_hamiltonian(Mz, Tz, idx)

        def counts(dt, T):
            lo = max(1, math.ceil((1.0 - SEGMENT_WINDOW) * dt / T))
            return range(lo, max(lo, math.floor((1.0 + SEGMENT_WINDOW) * dt / T)) + 1)

        rx, rz = counts(il.dt1, Tx), counts(il.dt2, Tz)
        Px = {rx[0]: np.linalg.matrix_power(Mx, rx[0])}
        for n in rx[1:]:
            Px[n] = Mx @ Px[n - 1]
        Pz = {rz[0]: np.linalg.matrix_power(Mz, rz[0])}
        for n in rz[1:]:
            Pz[n] = Mz @ Pz[n - 1]
        best = None
        for a in rx:
            for b in rz:
                d1, d2 = a * Tx, b * Tz
                w1 = d1 / (d1 + d2)
                Hc = floquet_spin_hamiltonian(Pz[b] @ Px[a], d1 + d2, idx)
                defect = float(np.linalg.norm(Hc - (w1 * Hx + (1.0 - w1) * Hz)))
                key = (defect, abs(d1 - il.dt1) + abs(d2 - il.dt2))
                if best is None or key < best[0]:
                    best = (key, a, b)
        (defect, _), nx, nz = best
        info["defect_rad_per_ns"] = defect
    info.update(periods=[nx, nz], period_ns=[Tx, Tz])
    return replace(il, dt1=nx * Tx, dt2=nz * Tz), info


def build_interleave_schedule(xyH, zzH, il: InterleaveSpec) -> Schedule:
    """Alternate ``xyH`` for ``dt1`` and ``zzH`` for ``dt2`` until ``total_time``."""
    return schedule_repeat([(xyH, il.dt1), (zzH, il.dt2)], il.total_time)


# Observables and initial states -------------------------------------------

def full_observables(n_sites: int, n_max: int) -> dict:
    """Populations, coherences, excited and photon totals of the full model."""
    lay = m.full_layout(n_sites, n_max)
    obs = {}
    pe = None
    nph = None
    sx = q.projector(3, 0, 1) + q.projector(3, 1, 0)
    sy = 1j * q.projector(3, 0, 1) - 1j * q.projector(3, 1, 0)
    for j in range(n_sites):
        at, ph = m.atom_site(j), m.photon_site(j)
        obs[f"p_a{j + 1}"] = q.embed_site_operator(lay, at, q.projector(3, 0))
        obs[f"p_b{j + 1}"] = q.embed_site_operator(lay, at, q.projector(3, 1))
        obs[f"sx{j + 1}"] = q.embed_site_operator(lay, at, sx)
        obs[f"sy{j + 1}"] = q.embed_site_operator(lay, at, sy)
        e = q.embed_site_operator(lay, at, q.projector(3, 2))
        n = q.embed_site_operator(lay, ph, q.number(n_max))
        pe = e if pe is None else pe + e
        nph = n if nph is None else nph + n
    obs["p_excited"] = pe
    obs["n_photon"] = nph
    if n_sites >= 2:
        z = q.projector(3, 1) - q.projector(3, 0)
        obs["szsz"] = q.embed_product(lay, {m.atom_site(0): z, m.atom_site(1): z})
    return obs


def comparison_initial_state(n_sites: int, n_max: int) -> q.StateVector:
    """``(|a> + |b>)/sqrt(2)`` on atom 1, ``|a>`` on the others, cavities empty."""
    lay = m.full_layout(n_sites, n_max)
    vac = q.ket(n_max + 1, 0)
    locs = []
    for j in range(n_sites):
        locs.append(np.array([1.0, 1.0, 0.0]) if j == 0 else np.array([1.0, 0.0, 0.0]))
        locs.append(vac)
    return lay.product_state(locs)


def spin_initial_state(n_sites: int) -> q.StateVector:
    lay = m.spin_layout(n_sites)
    return lay.product_state([np.array([1.0, 1.0]) if j == 0 else np.array([1.0, 0.0])
                              for j in range(n_sites)])


# Comparison ---------------------------------------------------------------

@dataclass
class ComparisonResult:
    """Full and effective runs on a common time grid (ns)."""

    times: np.ndarray
    p_a1_full: np.ndarray
    p_down1_eff: np.ndarray
    n_photon: np.ndarray
    p_excited: np.ndarray
    max_excited: float
    max_photon: float
    max_deviation: float
    derived: SpinParams
    effective: SpinParams
    window_ns: float
    full: object
    fit: object = None
    fit_spin: SpinParams | None = None
    fit_error: str | None = None
    interleave: InterleaveSpec | None = None
    validity: dict = field(default_factory=dict)
    sandwich_warnings: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def window_mask(self) -> np.ndarray:
        return self.times <= self.window_ns + 1e-6


def _scheme(xy, zz, il):
    if xy is not None and zz is not None:
        return "simultaneous" if il.mode == "simultaneous" else "interleaved"
    if xy is not None:
        return "xy"
    if zz is not None:
        return "zz"
    raise ValueError("need at least one drive")


def effective_wall_params(derived: SpinParams, scheme: str, il: InterleaveSpec) -> SpinParams:
    """Parameters of the effective Hamiltonian acting per unit of wall time.

    Interleaving switches each scheme on for a fraction of the time, so the
    average Hamiltonian is ``w1 H_xy + w2 H_zz``.
    """
    B = derived.B or 0.0
    Bt = derived.B_tilde or 0.0
    Jx, Jy, Jz = derived.Jx or 0.0, derived.Jy or 0.0, derived.Jz or 0.0
    if scheme == "interleaved":
        w1, w2 = il.weights
    elif scheme == "xy":
        w1, w2 = 1.0, 0.0
    elif scheme == "zz":
        w1, w2 = 0.0, 1.0
    else:
        w1, w2 = 1.0, 1.0
    return SpinParams(B_tot=w1 * B + w2 * Bt, Jx=w1 * Jx, Jy=w1 * Jy, Jz=w2 * Jz)


def slowest_period(sp_: SpinParams, n_sites: int = 2, boundary: str = "open",
                   psi0: q.StateVector | None = None, observables=None,
                   visible: float = 1e-2) -> float:
    """Longest period (ns) among the gaps of the effective spectrum.

    With ``psi0`` and ``observables`` only gaps whose beat amplitude in
    some observable exceeds ``visible`` times the largest one count.
    """
    lam, V = np.linalg.eigh(m.build_spin_full(sp_, n_sites, boundary).toarray())
    gaps = np.abs(lam[:, None] - lam[None, :])
    keep = gaps > 1e-9 * max(1e-12, np.abs(lam).max())
    if psi0 is not None and observables:
        c = V.conj().T @ psi0.amplitudes
        rho = np.outer(c.conj(), c)
        amp = np.zeros_like(gaps)
        for O in observables:
            O = O.toarray() if hasattr(O, "toarray") else np.asarray(O)
            amp = np.maximum(amp, np.abs(rho * (V.conj().T @ O @ V)))
        keep &= amp > visible * amp[keep].max() if keep.any() else keep
    return 2.0 * math.pi / gaps[keep].min() if keep.any() else math.inf


def full_hamiltonians(xy, zz, scheme: str, n_max: int) -> dict:
    out = {}
    if scheme == "simultaneous":
        out["simultaneous"] = m.build_full_simultaneous(xy, zz, n_max)[0]
        return out
    if xy is not None:
        out["xy"] = m.build_full_xy(xy, n_max)[0]
    if zz is not None:
        out["zz"] = m.build_full_zz(zz, n_max)[0]
    return out


def _full_schedule(H: dict, scheme: str, il: InterleaveSpec, t_final: float) -> Schedule:
    if scheme == "interleaved":
        return schedule_repeat([(H["xy"], il.dt1), (H["zz"], il.dt2)], t_final)
    return Schedule([(next(iter(H.values())), t_final)])


def run_comparison(xy: XYDriveParams | None, zz: ZZDriveParams | None, il: InterleaveSpec,
                   n_max: int = 2, cfg: IntegratorConfig | None = None, *, fit: bool = False,
                   seed: int = 0) -> ComparisonResult:
    """Evolve the full model and the effective spin model from the same state.

    The full model starts in ``(|a_1> + |b_1>)/sqrt(2) x |a_2>`` with empty
    cavities and runs under the interleaved schedule (or a single scheme).
    The effective model uses the derived parameters weighted by the duty
    cycle; interleaved segments are first rounded to whole drive periods
    (see :func:`snap_to_periods`), and the weights use the rounded lengths.
    With ``fit=True`` the full run is extended to cover 1.5 periods of the
    slowest population beat after a 2 us transient and the effective
    parameters are fitted to it.
    """
    cfg = cfg or IntegratorConfig(sample_alignment="period")
    scheme = _scheme(xy, zz, il)
    n_sites = (xy or zz).n_sites
    boundary = (xy or zz).boundary
    H = full_hamiltonians(xy, zz, scheme, n_max)
    seg_info = {}
    if scheme == "interleaved":
        il, seg_info = snap_to_periods(il, H["xy"], H["zz"], m.full_layout(n_sites, n_max), cfg)
    validity = {}
    for name, p in (("xy", xy), ("zz", zz)):
        if p is not None:
            rep = el.require_valid(p)
            validity[name] = rep
    derived = el.derive_params(xy, zz)
    sw = check_sandwich(il, xy if scheme == "interleaved" else None,
                        zz if scheme == "interleaved" else None, derived) if scheme == "interleaved" else []
    for msg in sw:
        warnings.warn(msg)
    eff = effective_wall_params(derived, scheme, il)
    t_final = il.total_time
    if fit:
        # the window is set by the population beats the first fit stage sees
        sobs = el.spin_observables(n_sites)
        t_fit = FIT_SKIP_NS + FIT_PERIODS * slowest_period(
            eff, n_sites, boundary, spin_initial_state(n_sites), [sobs[k] for k in el.POPULATIONS])
        t_final = max(t_final, min(t_fit, MAX_FIT_TIME_NS))
    psi0 = comparison_initial_state(n_sites, n_max)
    obs = full_observables(n_sites, n_max)
    # the drift budget is set per acceptance window; an extended fit run gets it pro rata
    run_cfg = replace(cfg, norm_drift_budget=cfg.norm_drift_budget * t_final / il.total_time)
    traj = evolve_schedule(_full_schedule(H, scheme, il, t_final), psi0, obs, run_cfg)
    # effective model on the same grid
    spsi = spin_initial_state(n_sites)
    Heff = m.build_spin_full(eff, n_sites, boundary).toarray()
    lam, V = np.linalg.eigh(Heff)
    c = V.conj().T @ spsi.amplitudes
    states = V @ (np.exp(-1j * np.outer(lam, traj.times)) * c[:, None])
    down1 = q.embed_site_operator(m.spin_layout(n_sites), 0, q.projector(2, 0)).toarray()
    p_down = np.real(np.einsum("it,ij,jt->t", states.conj(), down1, states))
    mask = traj.times <= il.total_time + 1e-6
    res = ComparisonResult(
        times=traj.times,
        p_a1_full=np.asarray(traj["p_a1"]),
        p_down1_eff=p_down,
        n_photon=np.asarray(traj["n_photon"]),
        p_excited=np.asarray(traj["p_excited"]),
        max_excited=float(np.max(traj["p_excited"][mask])),
        max_photon=float(np.max(traj["n_photon"][mask])),
        max_deviation=float(np.max(np.abs(traj["p_a1"][mask] - p_down[mask]))),
        derived=derived,
        effective=eff,
        window_ns=il.total_time,
        full=traj,
        interleave=il,
        validity={k: v.as_dict() for k, v in validity.items()},
        sandwich_warnings=sw,
        metadata={"scheme": scheme, "n_max": n_max, "dt1_ns": il.dt1, "dt2_ns": il.dt2,
                  "segments_rounding": seg_info, **traj.metadata},
    )
    if fit and n_sites == 2:
        model = {"interleaved": "full", "simultaneous": "full", "xy": "xy", "zz": "zz"}[scheme]
        guess = eff if model == "full" else _wall_guess(eff, model)
        try:
            res.fit = el.fit_effective_params(traj, model, guess, psi0=spsi, boundary=boundary,
                                              window_start=FIT_SKIP_NS, seed=seed)
            res.fit_spin = spin_scale_params(res.fit.params, scheme, il)
        except el.FitError as exc:
            res.fit_error = str(exc)
    return res


def _wall_guess(eff: SpinParams, model: str) -> SpinParams:
    if model == "xy":
        return SpinParams(B=eff.B_tot, Jx=eff.Jx, Jy=eff.Jy)
    return SpinParams(B_tilde=eff.B_tot, Jz=eff.Jz)


def spin_scale_params(wall: SpinParams, scheme: str, il: InterleaveSpec) -> SpinParams:
    """Convert wall-time parameters of an interleaved run back to the spin-model scale.

    Couplings are divided by the duty weight of their scheme. The fitted
    field mixes ``w1 B + w2 B~`` and cannot be split, so it is divided by
    the mean weight; for rounded segments ``|w1 - w2|`` is below a percent.
    """
    if scheme != "interleaved":
        return wall
    w1, w2 = il.weights
    return SpinParams(B_tot=wall.field() * 2.0 / (w1 + w2), Jx=(wall.Jx or 0.0) / w1,
                      Jy=(wall.Jy or 0.0) / w1, Jz=(wall.Jz or 0.0) / w2)


# Cluster state ------------------------------------------------------------

@dataclass
class ClusterResult:
    """Entanglement of spin 1 and purity of the spin state over time (ns)."""

    times: np.ndarray
    entropy: np.ndarray
    purity: np.ndarray
    t_target: float
    entropy_target: float
    purity_target: float
    Jz: float
    discarded: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def entropy_bits(self) -> np.ndarray:
        return self.entropy / math.log(2.0)

    @property
    def peak(self) -> tuple:
        i = int(np.argmax(self.entropy))
        return float(self.times[i]), float(self.entropy[i])


def _spin_measures(state: q.StateVector) -> tuple:
    spins, discarded = q.project_atoms_to_spins(state)
    spin_sites = [i for i, s in enumerate(spins.layout.sites) if isinstance(s, q.Spin)]
    rho_all = q.partial_trace(spins, spin_sites)
    e = q.von_neumann_entropy(q.partial_trace(spins, [spin_sites[0]]))
    return e, q.purity(rho_all), discarded


def cluster_initial_state(n_sites: int, n_max: int | None) -> q.StateVector:
    """All atoms in ``(|a> + |b>)/sqrt(2)``; cavities empty when present."""
    plus = np.array([1.0, 1.0, 0.0]) if n_max is not None else np.array([1.0, 1.0])
    if n_max is None:
        return m.spin_layout(n_sites).product_state([plus] * n_sites)
    locs = []
    for _ in range(n_sites):
        locs += [plus, q.ket(n_max + 1, 0)]
    return m.full_layout(n_sites, n_max).product_state(locs)


def run_cluster(source, n_sites: int = 2, n_max: int = 2, use_full_model: bool = False,
                cfg: IntegratorConfig | None = None, t_factor: float = 1.3,
                boundary: str = "open") -> ClusterResult:
    """Grow a cluster state with the ZZ interaction.

    ``source`` is a ZZDriveParams (full or effective run) or SpinParams
    (effective run only). The target time is ``pi / (4 Jz)`` with ``Jz``
    from the derived or given parameters; the run covers
    ``t_factor * t_target``.
    """
    cfg = cfg or IntegratorConfig(sample_alignment="period")
    if isinstance(source, ZZDriveParams):
        el.require_valid(source)
        sp_ = el.derive_zz_params(source)
        n_sites, boundary = source.n_sites, source.boundary
    else:
        sp_ = source
        if use_full_model:
            raise ValueError("a full-model cluster run needs ZZ drive parameters")
    Jz = sp_.Jz or 0.0
    t_target = math.pi / (4.0 * abs(Jz)) if Jz else math.inf
    t_end = t_factor * t_target if math.isfinite(t_target) else 1e5
    obs = {
        "entropy": lambda s: _spin_measures(s)[0],
        "purity": lambda s: _spin_measures(s)[1],
        "discarded": lambda s: _spin_measures(s)[2],
    }
    if use_full_model:
        H, frame = m.build_full_zz(source, n_max)
        psi0 = cluster_initial_state(n_sites, n_max)
        traj = evolve(H, psi0, t_end, obs, cfg)
        i = int(np.argmin(np.abs(traj.times - t_target)))
        return ClusterResult(traj.times, np.asarray(traj["entropy"], float),
                             np.asarray(traj["purity"], float), t_target,
                             float(traj["entropy"][i]), float(traj["purity"][i]), Jz,
                             np.asarray(traj["discarded"], float),
                             {"model": "full", "t_nearest_ns": float(traj.times[i]), **traj.metadata})
    Hs = m.build_spin_zz(sp_, n_sites, boundary)
    psi0 = cluster_initial_state(n_sites, None)
    traj = evolve(TimeDependentHamiltonian.static(Hs), psi0, t_end,
                  {k: obs[k] for k in ("entropy", "purity")}, cfg)
    if math.isfinite(t_target):
        st = evolve_static_exact(Hs, psi0, t_target)
        st = q.StateVector(st.layout, st.amplitudes / st.norm)
        e_t, p_t, _ = _spin_measures(st)
    else:
        e_t, p_t = 0.0, 1.0
    return ClusterResult(traj.times, np.asarray(traj["entropy"], float),
                         np.asarray(traj["purity"], float), t_target, e_t, p_t, Jz, None,
                         {"model": "effective", **traj.metadata})


def invert_cluster_drive(base: ZZDriveParams, Jz_target: float, lo: float = 0.5,
                         hi: float = 5.0) -> ZZDriveParams:
    """Scale ``g_a = g_b`` to reach ``Jz_target`` and tune ``lam_a = lam_b`` to null ``B_tilde``."""
    from scipy.optimize import brentq

    def jz(g):
        return el.derive_zz_params(replace(base, g_a=g, g_b=g), check=False).Jz - Jz_target

    g = brentq(jz, lo, hi, xtol=1e-14)
    p = replace(base, g_a=g, g_b=g)

    def bt(lam):
        return el.derive_zz_params(replace(p, lam_a=lam, lam_b=lam), check=False).B_tilde

    # the Lambda laser must stay 10 Rabi frequencies away from resonance
    lam = brentq(bt, 0.0, 0.0999 * abs(m.detunings(p).Delta_tilde_a), xtol=1e-14)
    return replace(p, lam_a=lam, lam_b=lam)


# Sweeps -------------------------------------------------------------------

SWEEP_ALIASES = {"lam": ("lam_a", "lam_b"), "rabi": ("rabi_a", "rabi_b"), "g": ("g_a", "g_b")}


def _apply_key(xy, zz, key: str, value: float):
    scope, _, name = key.rpartition(".")
    names = SWEEP_ALIASES.get(name, (name,))
    targets = []
    if scope in ("", "xy") and xy is not None and all(n in {f.name for f in fields(xy)} for n in names):
        targets.append("xy")
    if scope in ("", "zz") and zz is not None and all(n in {f.name for f in fields(zz)} for n in names):
        targets.append("zz")
    if not targets:
        raise KeyError(f"unknown sweep key {key!r}")
    if scope == "" and len(targets) == 2 and name not in ("g", "g_a", "g_b", "j_c", "omega_c",
                                                          "omega_ab", "omega_e", "n_sites"):
        targets = targets[:1]
    kw = {n: value for n in names}
    if "xy" in targets:
        xy = replace(xy, **kw)
    if "zz" in targets:
        zz = replace(zz, **kw)
    return xy, zz


def _sweep_row(args) -> dict:
    xy, zz, key, value, outputs, il = args
    row = {key: value}
    try:
        xy2, zz2 = _apply_key(xy, zz, key, value)
        worst = math.inf
        for p in (xy2, zz2):
            if p is not None:
                worst = min(worst, el.require_valid(p).worst.ratio)
        sp_ = el.derive_params(xy2, zz2)
        row.update({f"{k}_MHz": v for k, v in sp_.to_mhz().items() if k in
                    ("B", "B_tilde", "B_tot", "Jx", "Jy", "Jz")})
        row["worst_validity_ratio"] = worst
        if outputs == "dynamics-summary":
            scheme = _scheme(xy2, zz2, il)
            eff = effective_wall_params(sp_, scheme, il)
            n = (xy2 or zz2).n_sites
            t = np.linspace(0.0, il.total_time, 2001)
            Hd = m.build_spin_full(eff, n, (xy2 or zz2).boundary).toarray()
            lam, V = np.linalg.eigh(Hd)
            c = V.conj().T @ spin_initial_state(n).amplitudes
            st = V @ (np.exp(-1j * np.outer(lam, t)) * c[:, None])
            p = np.sum(np.abs(st.reshape(2, -1, t.size)[0]) ** 2, axis=0)
            row["p_down1_min"] = float(p.min())
            row["p_down1_max"] = float(p.max())
            row["p_down1_amplitude"] = float(p.max() - p.min())
        row["error"] = ""
    except Exception as exc:  # recorded per row, the sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(base: XYDriveParams | None, sweep_key: str, values, outputs: str = "derived-params",
              zz: ZZDriveParams | None = None, il: InterleaveSpec | None = None,
              threads: int = 1) -> list:
    """One row per value of ``sweep_key`` (rad/ns), computed independently.

    ``outputs`` is ``derived-params`` or ``dynamics-summary`` (the latter
    adds the range of the effective ``p(down_1)`` over ``il.total_time``).
    Rows are returned in input order regardless of ``threads``.
    """
    if outputs not in ("derived-params", "dynamics-summary"):
        raise ValueError(f"unknown sweep output {outputs!r}")
    il = il or InterleaveSpec()
    jobs = [(base, zz, sweep_key, float(v), outputs, il) for v in values]
    if not jobs:
        return []
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]
