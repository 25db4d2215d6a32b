"""Time evolution under time-dependent and piecewise-constant Hamiltonians.

Hamiltonians are stored in the rotating-frame form

    H(t) = sum_m c_m exp(i nu_m t) A_m

and integrated with fixed-step RK4 (or by exact diagonalization when static).
When all ``nu_m`` are integer multiples of a common base frequency the
one-period propagator is assembled once and reused, which makes long runs
cheap; the result is identical, step for step, to plain RK4 stepping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .quantum import HERMITIAN_TOL, StateVector, canonical

TWO_PI = 2.0 * math.pi
EXACT_DIM_LIMIT = 4096
MATRIX_DIM_LIMIT = 2048
MAX_HARMONIC = 64


class PropagationError(RuntimeError):
    """Base class for numerical failures during evolution."""


class NormDriftError(PropagationError):
    """Accumulated norm drift exceeded the configured budget."""


class TimeDependentHamiltonian:
    """Sum of sparse terms ``c_m exp(i nu_m t) A_m``.

    Parameters
    ----------
    terms : sequence of (operator, coefficient, frequency)
        Frequencies are angular, in rad/ns.
    dim : int, optional
        Hilbert-space dimension; inferred from the first term if omitted.
    info : dict, optional
        Free-form description (e.g. the rotating frame) carried into run
        metadata.
    check : bool
        Verify Hermiticity of ``H(0)`` and ``H(t*)`` for a pseudo-random ``t*``.
    """

    def __init__(self, terms: Sequence, dim: int | None = None, info: dict | None = None,
                 check: bool = True):
        terms = list(terms)
        if dim is None:
            if not terms:
                raise ValueError("cannot infer dimension of an empty Hamiltonian")
            dim = terms[0][0].shape[0]
        self.dim = int(dim)
        self.info = dict(info or {})
        self.n_terms = len(terms)
        groups: dict = {}
        for op, c, nu in terms:
            op = canonical(op)
            if op.shape != (self.dim, self.dim):
                raise ValueError(f"term of shape {op.shape} in a dimension-{self.dim} Hamiltonian")
            nu = float(nu)
            groups[nu] = groups.get(nu, 0) + complex(c) * op
        freqs = sorted(groups)
        ops = [canonical(groups[nu]) for nu in freqs]
        keep = [i for i, o in enumerate(ops) if o.nnz]
        self.freqs = np.array([freqs[i] for i in keep], dtype=float)
        self.ops = [ops[i] for i in keep]
        if self.ops:
            self._stacked = sp.vstack(self.ops, format="csr")
        else:
            self._stacked = sp.csr_matrix((0, self.dim), dtype=complex)
        if check:
            rng = np.random.default_rng(12345)
            for t in (0.0, float(rng.uniform(0.1, 10.0))):
                h = self.at(t)
                d = h - h.conj().T
                err = abs(d).max() if d.nnz else 0.0
                if err > HERMITIAN_TOL:
                    raise ValueError(f"H(t={t}) is not Hermitian (max deviation {err:.3e})")

    @classmethod
    def static(cls, op, info: dict | None = None) -> "TimeDependentHamiltonian":
        op = canonical(op)
        return cls([(op, 1.0, 0.0)], dim=op.shape[0], info=info)

    @property
    def is_static(self) -> bool:
        return bool(np.all(self.freqs == 0.0))

    @property
    def max_frequency(self) -> float:
        return float(np.max(np.abs(self.freqs))) if self.freqs.size else 0.0

    @property
    def static_part(self) -> sp.csr_matrix:
        for nu, op in zip(self.freqs, self.ops):
            if nu == 0.0:
                return op
        return sp.csr_matrix((self.dim, self.dim), dtype=complex)

    @property
    def diagonal_scale(self) -> float:
        """Largest magnitude on the diagonal of the static part."""
        d = self.static_part.diagonal()
        return float(np.max(np.abs(d))) if d.size else 0.0

    def at(self, t: float) -> sp.csr_matrix:
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for nu, op in zip(self.freqs, self.ops):
            out = out + np.exp(1j * nu * t) * op
        return canonical(out)

    def apply(self, t: float, y: np.ndarray) -> np.ndarray:
        """``H(t) @ y`` for a vector or a matrix ``y``."""
        if not self.ops:
            return np.zeros_like(y)
        z = self._stacked @ y
        z = z.reshape((len(self.ops), self.dim) + y.shape[1:])
        phases = np.exp(1j * self.freqs * t)
        return np.tensordot(phases, z, axes=(0, 0))

    def base_frequency(self, max_harmonic: int = MAX_HARMONIC, rtol: float = 1e-9):
        """Common base frequency ``nu0`` with every ``nu_m`` an integer multiple.

        Returns ``None`` when no base with ``max|nu| / nu0 <= max_harmonic``
        exists (or when the Hamiltonian is static).
        """
        nz = np.unique(np.abs(self.freqs[self.freqs != 0.0]))
        if nz.size == 0:
            return None
        top = nz.max()
        for k in range(1, max_harmonic + 1):
            base = top / k
            ratios = nz / base
            if np.all(np.abs(ratios - np.round(ratios)) <= rtol * np.maximum(ratios, 1.0)):
                return base
        return None

    def describe(self) -> dict:
        return {
            "frequencies_rad_per_ns": [float(x) for x in self.freqs],
            "n_terms": self.n_terms,
            **self.info,
        }


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    Attributes
    ----------
    method : {"auto", "rk4", "exact"}
        ``auto`` uses exact diagonalization for static Hamiltonians of
        dimension up to 4096 and RK4 otherwise.
    steps_per_fastest_period : int
        RK4 steps per period of the fastest frame frequency.
    sample_interval : float
        Sampling interval in ns.
    norm_drift_budget : float
        Maximum accumulated ``|1 - |psi||`` before the run aborts.
    sample_alignment : {"exact", "period"}
        ``period`` snaps sample times to whole periods of a periodic
        Hamiltonian (stroboscopic sampling); ``exact`` samples on the
        requested grid.
    """

    method: str = "auto"
    steps_per_fastest_period: int = 256
    sample_interval: float = 10.0
    norm_drift_budget: float = 1e-6
    sample_alignment: str = "exact"

    def __post_init__(self):
        if self.method not in ("auto", "rk4", "exact"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if int(self.steps_per_fastest_period) != self.steps_per_fastest_period or \
                self.steps_per_fastest_period < 20:
            raise ValueError("steps_per_fastest_period must be an integer >= 20")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if not self.norm_drift_budget > 0:
            raise ValueError("norm_drift_budget must be positive")
        if self.sample_alignment not in ("exact", "period"):
            raise ValueError(f"unknown sample alignment {self.sample_alignment!r}")


@dataclass
class Schedule:
    """Ordered ``(H, duration_ns)`` segments applied one after another.

    Each distinct Hamiltonian keeps its own clock, which advances only
    while one of its segments is active.
    """

    segments: list

    def __post_init__(self):
        self.segments = [(H, float(d)) for H, d in self.segments]
        for _, d in self.segments:
            if not d > 0:
                raise ValueError("segment durations must be positive")

    @property
    def total_time(self) -> float:
        return math.fsum(d for _, d in self.segments)


@dataclass
class Trajectory:
    """Sampled observables of a run.

    ``observables`` maps names to arrays aligned with ``times`` (ns).
    """

    times: np.ndarray
    observables: dict
    final_state: StateVector
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.observables[name]

    def window(self, t0: float, t1: float = np.inf) -> "Trajectory":
        """Samples with ``t0 <= t <= t1``."""
        m = (self.times >= t0) & (self.times <= t1)
        return Trajectory(self.times[m], {k: v[m] for k, v in self.observables.items()},
                          self.final_state, dict(self.metadata))


# Integrator internals ----------------------------------------------------

def evolve_static_exact(H, psi0: StateVector, t: float) -> StateVector:
    """``exp(-iHt) psi0`` via Hermitian eigendecomposition (dimension <= 4096)."""
    H = H.static_part if isinstance(H, TimeDependentHamiltonian) else H
    n = H.shape[0]
    if n > EXACT_DIM_LIMIT:
        raise ValueError(f"dimension {n} too large for exact evolution")
    if t == 0:
        return StateVector(psi0.layout, psi0.amplitudes.copy())
    lam, V = np.linalg.eigh(_dense(H))
    amps = V @ (np.exp(-1j * lam * t) * (V.conj().T @ psi0.amplitudes))
    return StateVector(psi0.layout, amps, check_norm=False)


def _dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op, dtype=complex)


class _ExactRunner:
    """Static Hamiltonian: exact propagators, cached per step length."""

    def __init__(self, H: TimeDependentHamiltonian, cfg: IntegratorConfig):
        self.H = H
        self.lam, self.V = np.linalg.eigh(_dense(H.static_part))
        self._cache: dict = {}
        self.meta = {"method": "exact", "max_abs_nu": 0.0}

    def _unitary(self, tau: float) -> np.ndarray:
        key = round(tau, 12)
        U = self._cache.get(key)
        if U is None:
            U = (self.V * np.exp(-1j * self.lam * tau)) @ self.V.conj().T
            if len(self._cache) < 64:
                self._cache[key] = U
        return U

    def run(self, psi: np.ndarray, tau0: float, duration: float, offsets: Sequence[float],
            on_sample: Callable):
        last = 0.0
        for s in offsets:
            psi = on_sample(s, self._unitary(s - last) @ psi)
            last = s
        if duration > last:
            psi = self._unitary(duration - last) @ psi
        return psi


class _RK4Runner:
    """Fixed-step RK4 for one Hamiltonian on its own clock.

    The step grid ``t = i h`` is fixed in the Hamiltonian's clock. Moves
    between arbitrary times take a fractional step onto the grid, whole
    periods through cached powers of the period propagator, and the rest
    of a period through cached block propagators.
    """

    MAX_BLOCKS = 64
    BLOCK_BYTES = 256 * 2**20

    def __init__(self, H: TimeDependentHamiltonian, cfg: IntegratorConfig, duration: float):
        self.H = H
        spp = int(cfg.steps_per_fastest_period)
        nu_floor = TWO_PI / duration
        scale = max(H.max_frequency, nu_floor)
        base = H.base_frequency()
        if base is not None:
            self.P = int(math.ceil(scale * spp / base - 1e-9))
            self.T0 = TWO_PI / base
            self.h = self.T0 / self.P
        else:
            self.h = TWO_PI / (scale * spp)
            self.P = None
            self.T0 = None
        self.periodic = self.P is not None
        self.use_matrices = self.periodic and H.dim <= MATRIX_DIM_LIMIT
        if self.use_matrices:
            self.block = int(math.ceil(self.P / self.MAX_BLOCKS))
            n_blocks = int(math.ceil(self.P / self.block))
            if n_blocks * H.dim ** 2 * 16 > self.BLOCK_BYTES:
                self.block = None
        else:
            self.block = None
        self.align = cfg.sample_alignment == "period" and self.periodic
        self._blocks: dict = {}
        self._period = None
        self._powers: dict = {}
        self.steps_taken = 0
        self.meta = {
            "method": "rk4",
            "step_ns": self.h,
            "max_abs_nu": H.max_frequency,
            "step_scale_rad_per_ns": scale,
            "base_frequency_rad_per_ns": base,
            "steps_per_period": self.P,
            "period_ns": self.T0,
            "stroboscopic": self.align,
        }

    # single steps
    def _step(self, y: np.ndarray, t: float, h: float) -> np.ndarray:
        H = self.H
        k1 = -1j * H.apply(t, y)
        k2 = -1j * H.apply(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = -1j * H.apply(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = -1j * H.apply(t + h, y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _steps(self, y: np.ndarray, i0: int, n: int) -> np.ndarray:
        h = self.h
        for i in range(i0, i0 + n):
            y = self._step(y, i * h, h)
        self.steps_taken += n * (y.shape[1] if y.ndim == 2 else 1)
        return y

    # cached matrices for periodic Hamiltonians
    def _period_matrix(self) -> np.ndarray:
        if self._period is None:
            self._period = self._steps(np.eye(self.H.dim, dtype=complex), 0, self.P)
        return self._period

    def _power(self, q: int) -> np.ndarray:
        M = self._powers.get(q)
        if M is None:
            M = np.linalg.matrix_power(self._period_matrix(), q)
            if len(self._powers) < 64:
                self._powers[q] = M
        return M

    def _block_matrix(self, j: int) -> np.ndarray:
        M = self._blocks.get(j)
        if M is None:
            b = self.block
            M = self._steps(np.eye(self.H.dim, dtype=complex), j * b, min(b, self.P - j * b))
            self._blocks[j] = M
        return M

    def _within(self, y: np.ndarray, p0: int, p1: int) -> np.ndarray:
        """Advance from step ``p0`` to ``p1`` of one period (``0 <= p0 <= p1 <= P``)."""
        b = self.block
        if b is None or p1 - p0 < b:
            return self._steps(y, p0, p1 - p0)
        first = min(-(-p0 // b) * b, p1)
        y = self._steps(y, p0, first - p0)
        p = first
        while p < p1 and min(p + b, self.P) <= p1:
            y = self._block_matrix(p // b) @ y
            p = min(p + b, self.P)
        return self._steps(y, p, p1 - p)

    def _advance(self, y: np.ndarray, i0: int, i1: int) -> np.ndarray:
        """Move the on-grid state from step index ``i0`` to ``i1``."""
        if i1 <= i0:
            return y
        if not self.periodic:
            return self._steps(y, i0, i1 - i0)
        P = self.P
        p0 = i0 % P
        if p0 and i1 - i0 < P - p0:
            return self._within(y, p0, p0 + i1 - i0)
        if p0:
            y = self._within(y, p0, P)
            i0 += P - p0
        q, r = divmod(i1 - i0, P)
        if q:
            if self.use_matrices:
                y = self._power(q) @ y
            else:
                y = self._steps(y, 0, q * P)
        return self._within(y, 0, r)

    def _locate(self, t: float):
        x = t / self.h
        i = int(math.floor(x + 1e-9))
        if abs(x - round(x)) < 1e-9:
            return int(round(x)), 0.0
        return i, t - i * self.h

    def _move(self, y: np.ndarray, ta: float, tb: float) -> np.ndarray:
        if tb <= ta:
            return y
        ia, fa = self._locate(ta)
        ib, fb = self._locate(tb)
        if ia == ib:
            self.steps_taken += 1
            return self._step(y, ta, tb - ta)
        if fa:
            y = self._step(y, ta, (ia + 1) * self.h - ta)
            self.steps_taken += 1
            ia += 1
        y = self._advance(y, ia, ib)
        if fb:
            y = self._step(y, ib * self.h, fb)
            self.steps_taken += 1
        return y

    def snap(self, tau0: float, duration: float, offset: float) -> float:
        """Move a sample to the nearest period boundary of this clock inside the segment."""
        if not self.align:
            return offset
        t = round((tau0 + offset) / self.T0) * self.T0 - tau0
        if t < -1e-9 * self.T0:
            t += self.T0
        if t > duration:
            t -= self.T0
        return min(max(t, 0.0), duration)

    def run(self, psi: np.ndarray, tau0: float, duration: float, offsets: Sequence[float],
            on_sample: Callable):
        t = tau0
        for s in offsets:
            psi = self._move(psi, t, tau0 + s)
            t = tau0 + s
            psi = on_sample(s, psi)
        return self._move(psi, t, tau0 + duration)


def period_propagator(H: TimeDependentHamiltonian, cfg: IntegratorConfig | None = None) -> tuple:
    """One-period RK4 propagator ``U(T0, 0)`` of a periodic Hamiltonian and ``T0`` (ns).

    Uses the same step grid as :func:`evolve`.
    """
    cfg = cfg or IntegratorConfig()
    base = H.base_frequency()
    if base is None or H.is_static:
        raise PropagationError("Hamiltonian has no common period")
    r = _RK4Runner(H, cfg, TWO_PI / base)
    return r._period_matrix(), r.T0


def _make_runner(H: TimeDependentHamiltonian, duration: float, cfg: IntegratorConfig):
    if H.is_static and cfg.method in ("auto", "exact") and H.dim <= EXACT_DIM_LIMIT:
        return _ExactRunner(H, cfg)
    if cfg.method == "exact":
        raise ValueError("exact method needs a static Hamiltonian of dimension <= 4096")
    return _RK4Runner(H, cfg, duration)


class _Sampler:
    """Evaluates observables, renormalizes and tracks norm drift."""

    def __init__(self, layout, observables: Mapping, budget: float):
        self.layout = layout
        self.budget = budget
        self.names = list(observables or {})
        self.ops = []
        for name in self.names:
            op = observables[name]
            if callable(op) and not sp.issparse(op):
                self.ops.append((op, None))
            else:
                op = canonical(op)
                d = op - op.conj().T
                herm = (abs(d).max() if d.nnz else 0.0) < HERMITIAN_TOL
                self.ops.append((op, herm))
        self.times: list = []
        self.values: dict = {n: [] for n in self.names}
        self.drift = 0.0
        self.step_info: dict = {}

    def sample(self, t: float, psi: np.ndarray) -> np.ndarray:
        nrm = float(np.linalg.norm(psi))
        self.drift += abs(1.0 - nrm)
        if self.drift > self.budget:
            raise NormDriftError(
                f"accumulated norm drift {self.drift:.3e} exceeds budget {self.budget:.1e} "
                f"at t = {t:.6g} ns (step info: {self.step_info})"
            )
        psi = psi / nrm
        self.record(t, psi)
        return psi

    def record(self, t: float, psi: np.ndarray):
        if self.times and t <= self.times[-1]:
            return
        self.times.append(t)
        state = None
        for name, (op, herm) in zip(self.names, self.ops):
            if herm is None:
                if state is None:
                    state = StateVector(self.layout, psi, check_norm=False)
                val = op(state)
            else:
                val = np.vdot(psi, op @ psi)
                if herm:
                    val = val.real
            self.values[name].append(val)

    def trajectory(self, final: np.ndarray, metadata: dict) -> Trajectory:
        obs = {}
        for n in self.names:
            arr = np.asarray(self.values[n])
            if np.iscomplexobj(arr) and np.all(arr.imag == 0):
                arr = arr.real
            obs[n] = arr
        metadata = dict(metadata)
        metadata["norm_drift"] = self.drift
        return Trajectory(np.asarray(self.times, dtype=float), obs,
                          StateVector(self.layout, final, check_norm=False), metadata)


def _grid_offsets(start: float, duration: float, interval: float, final: bool) -> list:
    """Offsets within ``[start, start + duration]`` that lie on the global sample grid."""
    n0 = int(math.floor(start / interval + 1e-9)) + 1
    out = []
    n = n0
    end = start + duration
    while n * interval <= end + 1e-9 * interval:
        out.append(min(n * interval - start, duration))
        n += 1
    if final and (not out or out[-1] < duration):
        out.append(duration)
    return out


def evolve(H: TimeDependentHamiltonian, psi0: StateVector, t_final: float,
           observables: Mapping | None = None, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Solve ``i d(psi)/dt = H(t) psi`` from ``t = 0`` to ``t_final`` (ns).

    Observables may be sparse operators or callables taking a StateVector;
    they are sampled at ``t = 0``, every ``cfg.sample_interval`` and at the
    end. The state is renormalized at every sample while the removed
    ``|1 - |psi||`` is accumulated as the norm drift.

    Raises
    ------
    NormDriftError
        If the accumulated drift exceeds ``cfg.norm_drift_budget``.
    """
    return evolve_schedule(Schedule([(H, t_final)]), psi0, observables, cfg)


def evolve_schedule(s: Schedule, psi0: StateVector, observables: Mapping | None = None,
                    cfg: IntegratorConfig | None = None) -> Trajectory:
    """Apply the segments of ``s`` in order, handing the state across.

    Every Hamiltonian object runs on its own clock, which starts at zero
    and advances only during that Hamiltonian's segments; an interleaved
    drive therefore keeps the phase of each scheme's lasers continuous.
    Samples lie on a global grid with spacing ``cfg.sample_interval``.
    """
    cfg = cfg or IntegratorConfig()
    if not s.segments:
        raise ValueError("empty schedule")
    for H, _ in s.segments:
        if H.dim != psi0.layout.dim:
            raise ValueError("Hamiltonian and state dimensions differ")
    sampler = _Sampler(psi0.layout, observables or {}, cfg.norm_drift_budget)
    psi = psi0.amplitudes.copy()
    sampler.record(0.0, psi)
    runners: dict = {}
    clocks: dict = {}
    start = 0.0
    total = s.total_time
    n_seg = len(s.segments)
    for k, (H, dur) in enumerate(s.segments):
        runner = runners.get(id(H))
        if runner is None:
            runner = _make_runner(H, dur, cfg)
            runners[id(H)] = runner
        tau0 = clocks.get(id(H), 0.0)
        sampler.step_info = runner.meta
        offsets = _grid_offsets(start, dur, cfg.sample_interval, final=(k == n_seg - 1))
        snapped = []
        for o in offsets:
            if isinstance(runner, _RK4Runner):
                o = runner.snap(tau0, dur, o)
            if o > 0 and (not snapped or o > snapped[-1]):
                snapped.append(o)
        seg_start = start
        psi = runner.run(psi, tau0, dur, snapped, lambda t, y: sampler.sample(seg_start + t, y))
        clocks[id(H)] = tau0 + dur
        start += dur
    if sampler.times[-1] < start - 1e-9 * max(total, 1.0):
        psi = sampler.sample(start, psi)
    meta = {"t_final_ns": total, "n_segments": n_seg, "segments": []}
    steps = 0
    for r in runners.values():
        steps += getattr(r, "steps_taken", 0)
        meta["segments"].append({**r.meta, "frame": r.H.describe()})
    meta["rk4_steps"] = steps
    meta["max_abs_nu"] = max(r.meta["max_abs_nu"] for r in runners.values())
    return sampler.trajectory(psi, meta)


def schedule_repeat(pairs: Sequence, total_time: float) -> Schedule:
    """Repeat ``pairs`` of ``(H, duration)`` to cover ``total_time``, truncating the last."""
    segs = []
    t = 0.0
    period = math.fsum(d for _, d in pairs)
    if period <= 0:
        raise ValueError("durations must be positive")
    n_full = int(math.floor(total_time / period + 1e-9))
    for _ in range(n_full):
        segs.extend(pairs)
    t = n_full * period
    for H, d in pairs:
        rem = total_time - t
        if rem <= 1e-9 * period:
            break
        segs.append((H, min(d, rem)))
        t += min(d, rem)
    return Schedule(segs)
