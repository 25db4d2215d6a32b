"""Driven atom-cavity array Hamiltonians and the effective spin models.

All frequencies are angular frequencies in rad/ns ("GHz"); effective spin
couplings are of order 1e-4 rad/ns and are usually reported in rad/us
("MHz"). The full models are written in a rotating frame generated by

    H_frame = sum_j theta_b |b_j><b_j| + theta_e |e_j><e_j| + theta_p a_j^dag a_j

which keeps the photon hopping static. The XY scheme fixes
``theta_b = omega_ab - delta1`` and the ZZ scheme ``theta_b = omega_ab``;
``theta_e`` and ``theta_p`` are chosen by :func:`choose_frame`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp

from . import quantum as q
from .propagation import TimeDependentHamiltonian

A, B, E = 0, 1, 2
LEVEL = {"a": A, "b": B, "e": E}
FREQ_DIGITS = 11
MAX_HARMONIC = 64


def _clean(x: float) -> float:
    """Round frame frequencies so exact cancellations give exactly zero."""
    return round(float(x), FREQ_DIGITS) + 0.0


@dataclass(frozen=True)
class _ArrayParams:
    n_sites: int = 2
    boundary: str = "open"
    omega_e: float = 0.0
    omega_ab: float = 0.0
    omega_c: float = 0.0
    j_c: float = 0.0
    g_a: float = 0.0
    g_b: float = 0.0
    rabi_a: float = 0.0
    rabi_b: float = 0.0

    def _check_common(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError(f"n_sites must be a positive integer, got {self.n_sites}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class XYDriveParams(_ArrayParams):
    """Two-laser Raman drive generating the XX/YY couplings.

    Laser a (``omega_a``) drives a<->e and laser b drives b<->e; the cavity
    couples both transitions with ``g_a``, ``g_b``. Laser b is stored through
    ``delta1 = omega_ab - (omega_a - omega_b) / 2`` so that this small
    detuning is exact.
    """

    omega_a: float = 0.0
    delta1: float = 0.0

    def __post_init__(self):
        self._check_common()

    @property
    def omega_b(self) -> float:
        return self.omega_a - 2.0 * (self.omega_ab - self.delta1)

    @classmethod
    def from_detunings(cls, *, delta_a: float, delta1: float, omega_e: float,
                       **kw) -> "XYDriveParams":
        """Place laser a at ``omega_e - delta_a``."""
        return cls(omega_e=omega_e, omega_a=omega_e - delta_a, delta1=delta1, **kw)

    def with_delta1(self, delta1: float) -> "XYDriveParams":
        return replace(self, delta1=delta1)


@dataclass(frozen=True)
class ZZDriveParams(_ArrayParams):
    """Two-frequency drive producing conditional Stark shifts.

    Laser ``omega`` drives both transitions with ``rabi_a``/``rabi_b``;
    laser ``nu`` drives them with ``lam_a``/``lam_b``.
    """

    lam_a: float = 0.0
    lam_b: float = 0.0
    omega: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        self._check_common()

    @classmethod
    def from_detunings(cls, *, delta_a: float, delta_tilde_a: float, omega_e: float,
                       **kw) -> "ZZDriveParams":
        return cls(omega_e=omega_e, omega=omega_e - delta_a, nu=omega_e - delta_tilde_a, **kw)


@dataclass(frozen=True)
class DerivedDetunings:
    """Detunings recomputed from drive parameters.

    ``delta_a_k`` and ``delta_b_k`` run over the cavity modes (plane waves
    for periodic chains, hopping-matrix eigenmodes for open chains).
    """

    Delta_a: float
    Delta_b: float
    delta_a_k: np.ndarray
    delta_b_k: np.ndarray
    Delta_tilde_a: float | None = None
    Delta_tilde_b: float | None = None


def detunings(p) -> DerivedDetunings:
    wk, _ = cavity_modes(p)
    dak = p.omega_e - wk
    if isinstance(p, XYDriveParams):
        shift = p.omega_ab - p.delta1
        return DerivedDetunings(
            Delta_a=p.omega_e - p.omega_a,
            Delta_b=p.omega_e - p.omega_b - shift,
            delta_a_k=dak,
            delta_b_k=dak - shift,
        )
    return DerivedDetunings(
        Delta_a=p.omega_e - p.omega,
        Delta_b=p.omega_e - p.omega - p.omega_ab,
        delta_a_k=dak,
        delta_b_k=dak - p.omega_ab,
        Delta_tilde_a=p.omega_e - p.nu,
        Delta_tilde_b=p.omega_e - p.nu - p.omega_ab,
    )


# Cavity array ------------------------------------------------------------

def bonds(n_sites: int, boundary: str) -> list:
    """Nearest-neighbour pairs ``(j, j+1)``; the periodic chain wraps around.

    For a periodic chain of two sites the wrap-around bond repeats the first
    one, doubling the coupling.
    """
    if n_sites < 2:
        return []
    if boundary == "periodic":
        return [(j, (j + 1) % n_sites) for j in range(n_sites)]
    return [(j, j + 1) for j in range(n_sites - 1)]


def hopping_matrix(n_sites: int, j_c: float, boundary: str) -> np.ndarray:
    """Single-photon hopping matrix ``J_C sum_j (a_j^dag a_{j+1} + h.c.)``."""
    M = np.zeros((n_sites, n_sites))
    for j, l in bonds(n_sites, boundary):
        M[j, l] += j_c
        M[l, j] += j_c
    return M


def cavity_modes(p) -> tuple:
    """Eigenfrequencies and real eigenvectors (columns) of the cavity array."""
    M = hopping_matrix(p.n_sites, p.j_c, p.boundary)
    w, u = np.linalg.eigh(M)
    return p.omega_c + w, u


def cavity_mode_spectrum(omega_c: float, j_c: float, n_sites: int) -> list:
    """Plane-wave modes ``(k, omega_C + 2 J_C cos k)`` of a periodic chain of odd length."""
    if n_sites < 1 or n_sites % 2 == 0:
        raise ValueError("the plane-wave spectrum is defined for odd chain lengths")
    half = (n_sites - 1) // 2
    out = []
    for l in range(-half, half + 1):
        k = 2.0 * math.pi * l / n_sites
        out.append((k, omega_c + 2.0 * j_c * math.cos(k)))
    return out


# Rotating frame ----------------------------------------------------------

@dataclass(frozen=True)
class Laser:
    """Laser with frequency ``omega_e + offset`` on the ``level`` <-> e transition."""

    name: str
    offset: float
    level: str
    rabi: float


@dataclass(frozen=True)
class Frame:
    """Frame rotation frequencies and the resulting residual frequencies.

    ``theta_b`` is measured from level a; ``theta_e`` and ``theta_p`` are
    measured from ``omega_e``. All in rad/ns.
    """

    theta_b: float
    theta_e: float
    theta_p: float
    terms: tuple = field(default=())
    diagonal: tuple = field(default=())

    @property
    def max_abs_nu(self) -> float:
        return max((abs(nu) for _, nu in self.terms), default=0.0)

    def describe(self) -> dict:
        return {
            "theta_b": self.theta_b,
            "theta_e_minus_omega_e": self.theta_e,
            "theta_p_minus_omega_e": self.theta_p,
            "terms": {name: nu for name, nu in self.terms},
            "diagonal_residuals": {name: r for name, r in self.diagonal},
            "max_abs_nu": self.max_abs_nu,
        }


def _frame_residuals(p, lasers, cavity, theta_b, te, tp):
    """Term frequencies and static diagonal residuals, all relative to omega_e."""
    theta = {"a": 0.0, "b": theta_b}
    terms = []
    for L in lasers:
        if L.rabi != 0.0:
            terms.append((L.name, _clean(te - theta[L.level] - L.offset)))
    for lvl, g in cavity:
        if g != 0.0 and p.n_sites:
            terms.append((f"g_{lvl}", _clean(te - theta[lvl] - tp)))
    diag = [
        ("b", _clean(p.omega_ab - theta_b)),
        ("e", _clean(-te)),
        ("photon", _clean(p.omega_c - p.omega_e - tp)),
    ]
    return terms, diag


def _harmonic_count(freqs, rtol=1e-9):
    nz = sorted({abs(f) for f in freqs if f != 0.0})
    if not nz:
        return 1
    top = nz[-1]
    for k in range(1, MAX_HARMONIC + 1):
        r = np.array(nz) * k / top
        if np.all(np.abs(r - np.round(r)) <= rtol * np.maximum(r, 1.0)):
            return k
    return None


def choose_frame(p, lasers, cavity, theta_b: float, lock_e: bool = True) -> Frame:
    """Pick ``theta_e`` and ``theta_p`` from a finite candidate set.

    With ``lock_e`` the excited level co-rotates with the strongest laser on
    the a <-> e transition, which keeps the dressed admixture of level a
    static, and the photon co-rotates with the scattered light closest to
    the cavity; schemes that are switched in and out then hand over the
    state without phase kicks on e or the photon. Otherwise candidates for
    ``theta_e`` are the values that make a single term static, the bare
    level/mode frequencies and all pairwise midpoints, and likewise for
    ``theta_p``. The ranking prefers frames whose term frequencies share a
    common base (so the propagator is periodic), then the smallest overall
    scale ``max(|nu_m|, |diag|)``,
    then the fewest harmonics, then the lexicographically smallest sorted
    residual vector.
    """
    theta_b_rel = _clean(theta_b)
    theta = {"a": 0.0, "b": theta_b_rel}

    def with_mid(vals):
        vals = sorted({_clean(v) for v in vals})
        mids = {_clean(0.5 * (x + y)) for x, y in itertools.combinations(vals, 2)}
        return sorted(set(vals) | mids)

    laser_rel = [L.offset for L in lasers if L.rabi != 0.0]
    ce = [_clean(L.offset + theta[L.level]) for L in lasers if L.rabi != 0.0]
    ce = with_mid(ce + [0.0])
    on_a = [L for L in lasers if L.level == "a" and L.rabi != 0.0]
    if lock_e and on_a:
        ce = [_clean(max(on_a, key=lambda L: abs(L.rabi)).offset)]
    best = None
    for te in ce:
        cp = [te - theta[lvl] for lvl, g in cavity if g != 0.0]
        if lock_e and on_a and cp:
            # photon co-rotates with the scattered light closest to the cavity
            cands = [min(cp, key=lambda x: (abs(x - (p.omega_c - p.omega_e)), x))]
        else:
            cands = with_mid(cp + [p.omega_c - p.omega_e] + laser_rel)
        for tp in cands:
            terms, diag = _frame_residuals(p, lasers, cavity, theta_b_rel, te, tp)
            nus = [nu for _, nu in terms]
            k = _harmonic_count(nus)
            mags = sorted((abs(x) for x in nus + [r for _, r in diag]), reverse=True)
            key = (
                0 if k is not None else 1,
                round(mags[0], 9),
                k if k is not None else MAX_HARMONIC + 1,
                tuple(round(m, 9) for m in mags),
                te,
                tp,
            )
            if best is None or key < best[0]:
                best = (key, te, tp, terms, diag)
    _, te, tp, terms, diag = best
    return Frame(theta_b=theta_b_rel, theta_e=te, theta_p=tp, terms=tuple(terms),
                 diagonal=tuple(diag))


def frame_from_thetas(p, lasers, cavity, theta_b, theta_e, theta_p) -> Frame:
    """Frame with given ``theta_b`` and ``theta_e``, ``theta_p`` measured from ``omega_e``."""
    te, tp, tb = _clean(theta_e), _clean(theta_p), _clean(theta_b)
    terms, diag = _frame_residuals(p, lasers, cavity, tb, te, tp)
    return Frame(theta_b=tb, theta_e=te, theta_p=tp, terms=tuple(terms), diagonal=tuple(diag))


# Full models -------------------------------------------------------------

def full_layout(n_sites: int, n_max: int) -> q.HilbertSpaceLayout:
    """Sites ordered ``atom_0, photon_0, atom_1, photon_1, ...``."""
    sites = []
    for _ in range(n_sites):
        sites += [q.Atom3(), q.Photon(n_max)]
    return q.HilbertSpaceLayout(tuple(sites))


def atom_site(j: int) -> int:
    return 2 * j


def photon_site(j: int) -> int:
    return 2 * j + 1


def xy_lasers(p: XYDriveParams) -> list:
    off_a = p.omega_a - p.omega_e
    off_b = off_a - 2.0 * (p.omega_ab - p.delta1)
    return [Laser("Omega_a", off_a, "a", p.rabi_a), Laser("Omega_b", off_b, "b", p.rabi_b)]


def zz_lasers(p: ZZDriveParams) -> list:
    w, nu = p.omega - p.omega_e, p.nu - p.omega_e
    return [
        Laser("Omega_a", w, "a", p.rabi_a),
        Laser("Omega_b", w, "b", p.rabi_b),
        Laser("Lambda_a", nu, "a", p.lam_a),
        Laser("Lambda_b", nu, "b", p.lam_b),
    ]


def _cavity(p) -> list:
    return [("a", p.g_a), ("b", p.g_b)]


def _assemble(p, lasers, frame: Frame, n_max: int, scheme: str) -> TimeDependentHamiltonian:
    lay = full_layout(p.n_sites, n_max)
    d = lay.dim
    if d > q.DENSE_BUDGET:
        raise q.LayoutError("dimension exceeds budget")
    diag = dict(frame.diagonal)
    freqs = dict(frame.terms)
    terms = []
    a_loc = q.annihilation(n_max)
    for j in range(p.n_sites):
        at, ph = atom_site(j), photon_site(j)
        static_local = []
        if diag["b"]:
            static_local.append(q.embed_site_operator(lay, at, diag["b"] * q.projector(3, B)))
        if diag["e"]:
            static_local.append(q.embed_site_operator(lay, at, diag["e"] * q.projector(3, E)))
        if diag["photon"]:
            static_local.append(q.embed_site_operator(lay, ph, diag["photon"] * q.number(n_max)))
        for op in static_local:
            terms.append((op, 1.0, 0.0))
        for L in lasers:
            if L.rabi == 0.0:
                continue
            nu = freqs[L.name]
            up = q.embed_site_operator(lay, at, q.projector(3, E, LEVEL[L.level]))
            terms.append((up, 0.5 * L.rabi, nu))
            terms.append((up.conj().T, 0.5 * np.conj(L.rabi), -nu))
        for lvl, g in _cavity(p):
            if g == 0.0:
                continue
            nu = freqs[f"g_{lvl}"]
            op = q.embed_product(lay, {at: q.projector(3, E, LEVEL[lvl]), ph: a_loc})
            terms.append((op, g, nu))
            terms.append((op.conj().T, np.conj(g), -nu))
    M = hopping_matrix(p.n_sites, p.j_c, p.boundary)
    for j in range(p.n_sites):
        for l in range(p.n_sites):
            if j != l and M[j, l] != 0.0:
                op = q.embed_product(lay, {photon_site(j): a_loc.conj().T, photon_site(l): a_loc})
                terms.append((op, M[j, l], 0.0))
    info = {"scheme": scheme, "frame": frame.describe()}
    return TimeDependentHamiltonian(terms, dim=d, info=info)


def xy_frame(p: XYDriveParams, frame: Frame | None = None) -> Frame:
    if frame is not None:
        return frame
    return choose_frame(p, xy_lasers(p), _cavity(p), p.omega_ab - p.delta1)


def zz_frame(p: ZZDriveParams, frame: Frame | None = None) -> Frame:
    if frame is not None:
        return frame
    return choose_frame(p, zz_lasers(p), _cavity(p), p.omega_ab)


def build_full_xy(p: XYDriveParams, n_max: int = 2, frame: Frame | None = None) -> tuple:
    """Full XY-scheme Hamiltonian in a rotating frame.

    Returns ``(H, frame)``. The frame keeps ``delta1`` on level b as a
    static term.
    """
    fr = xy_frame(p, frame)
    return _assemble(p, xy_lasers(p), fr, n_max, "xy"), fr


def build_full_zz(p: ZZDriveParams, n_max: int = 2, frame: Frame | None = None) -> tuple:
    """Full ZZ-scheme Hamiltonian in a rotating frame; returns ``(H, frame)``."""
    fr = zz_frame(p, frame)
    return _assemble(p, zz_lasers(p), fr, n_max, "zz"), fr


def build_full_simultaneous(xy: XYDriveParams, zz: ZZDriveParams, n_max: int = 2) -> tuple:
    """All lasers of both schemes switched on together, in the XY frame convention."""
    shared = ("n_sites", "boundary", "omega_e", "omega_ab", "omega_c", "j_c", "g_a", "g_b")
    for name in shared:
        if getattr(xy, name) != getattr(zz, name):
            raise ValueError(f"XY and ZZ drives disagree on {name}")
    lasers = [Laser("xy_" + L.name, L.offset, L.level, L.rabi) for L in xy_lasers(xy)]
    lasers += [Laser("zz_" + L.name, L.offset, L.level, L.rabi) for L in zz_lasers(zz)]
    fr = choose_frame(xy, lasers, _cavity(xy), xy.omega_ab - xy.delta1)
    return _assemble(xy, lasers, fr, n_max, "simultaneous"), fr


def excitation_number(p, n_max: int) -> sp.csr_matrix:
    """``sum_j (a_j^dag a_j + |e_j><e_j|)``."""
    lay = full_layout(p.n_sites, n_max)
    out = sp.csr_matrix((lay.dim, lay.dim), dtype=complex)
    for j in range(p.n_sites):
        out = out + q.embed_site_operator(lay, photon_site(j), q.number(n_max))
        out = out + q.embed_site_operator(lay, atom_site(j), q.projector(3, E))
    return q.canonical(out)


# Effective spin models ---------------------------------------------------

@dataclass(frozen=True)
class SpinParams:
    """Effective spin-chain parameters in rad/ns.

    Missing values are ``None``. ``(J1, J2)`` and ``(Jx, Jy)`` are completed
    from each other when ``J2`` is real, and ``B_tot`` from ``B + B_tilde``.
    """

    B: float | None = None
    B_tilde: float | None = None
    B_tot: float | None = None
    J1: float | None = None
    J2: complex | None = None
    Jx: float | None = None
    Jy: float | None = None
    Jz: float | None = None

    def __post_init__(self):
        J1, J2, Jx, Jy = self.J1, self.J2, self.Jx, self.Jy
        if J1 is not None and J2 is not None and Jx is None and Jy is None:
            if np.imag(J2) == 0:
                J2 = float(np.real(J2))
                object.__setattr__(self, "J2", J2)
                object.__setattr__(self, "Jx", 0.5 * (J1 + J2))
                object.__setattr__(self, "Jy", 0.5 * (J1 - J2))
        elif Jx is not None and Jy is not None and J1 is None and J2 is None:
            object.__setattr__(self, "J1", Jx + Jy)
            object.__setattr__(self, "J2", Jx - Jy)
        if self.B_tot is None and self.B is not None and self.B_tilde is not None:
            object.__setattr__(self, "B_tot", self.B + self.B_tilde)

    def field(self) -> float:
        for v in (self.B_tot, self.B, self.B_tilde):
            if v is not None:
                return v
        return 0.0

    def as_dict(self, scale: float = 1.0) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out[f.name] = None
            elif isinstance(v, complex):
                out[f.name] = [v.real * scale, v.imag * scale]
            else:
                out[f.name] = float(v) * scale
        return out

    def to_mhz(self) -> dict:
        """Values in rad/us."""
        return self.as_dict(1e3)

    @classmethod
    def combine(cls, xy: "SpinParams", zz: "SpinParams") -> "SpinParams":
        return cls(B=xy.B, B_tilde=zz.B_tilde, J1=xy.J1, J2=xy.J2, Jz=zz.Jz)


def spin_layout(n_sites: int) -> q.HilbertSpaceLayout:
    return q.HilbertSpaceLayout(tuple(q.Spin() for _ in range(n_sites)))


def _pauli(lay, j, local):
    return q.embed_site_operator(lay, j, local)


def _zero(lay):
    return sp.csr_matrix((lay.dim, lay.dim), dtype=complex)


def build_spin_xy(sp_: SpinParams, n_sites: int, boundary: str = "open", B=None) -> sp.csr_matrix:
    """``sum_j B sz_j + sum_bonds Jx sx sx + Jy sy sy`` (or the J1/J2 form for complex J2)."""
    lay = spin_layout(n_sites)
    B = (sp_.B if sp_.B is not None else 0.0) if B is None else B
    H = _zero(lay)
    for j in range(n_sites):
        H = H + B * _pauli(lay, j, q.SIGMA_Z)
    use_j12 = sp_.J2 is not None and np.imag(sp_.J2) != 0
    for j, l in bonds(n_sites, boundary):
        if use_j12:
            J1, J2 = sp_.J1 or 0.0, complex(sp_.J2)
            t = J1 * _pauli(lay, j, q.SIGMA_PLUS) @ _pauli(lay, l, q.SIGMA_MINUS)
            t = t + J2 * _pauli(lay, j, q.SIGMA_MINUS) @ _pauli(lay, l, q.SIGMA_MINUS)
            H = H + t + t.conj().T
        else:
            Jx = sp_.Jx or 0.0
            Jy = sp_.Jy or 0.0
            H = H + Jx * _pauli(lay, j, q.SIGMA_X) @ _pauli(lay, l, q.SIGMA_X)
            H = H + Jy * _pauli(lay, j, q.SIGMA_Y) @ _pauli(lay, l, q.SIGMA_Y)
    return q.canonical(H)


def build_spin_zz(sp_: SpinParams, n_sites: int, boundary: str = "open", B_tilde=None) -> sp.csr_matrix:
    """``sum_j B_tilde sz_j + sum_bonds Jz sz sz`` (diagonal)."""
    lay = spin_layout(n_sites)
    Bt = (sp_.B_tilde if sp_.B_tilde is not None else 0.0) if B_tilde is None else B_tilde
    Jz = sp_.Jz or 0.0
    H = _zero(lay)
    for j in range(n_sites):
        H = H + Bt * _pauli(lay, j, q.SIGMA_Z)
    for j, l in bonds(n_sites, boundary):
        H = H + Jz * _pauli(lay, j, q.SIGMA_Z) @ _pauli(lay, l, q.SIGMA_Z)
    return q.canonical(H)


def build_spin_full(sp_: SpinParams, n_sites: int, boundary: str = "open") -> sp.csr_matrix:
    """Anisotropic Heisenberg chain with uniform field ``B_tot``."""
    Bt = sp_.B_tot
    if Bt is None:
        Bt = (sp_.B or 0.0) + (sp_.B_tilde or 0.0)
    return q.canonical(build_spin_xy(sp_, n_sites, boundary, B=Bt)
                       + build_spin_zz(sp_, n_sites, boundary, B_tilde=0.0))
