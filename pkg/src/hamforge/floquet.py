"""Exact Floquet propagators, coherence-decay simulation, decay fitting, and
the Clifford/three-body averaging checks.

The propagator is an ordered product of segment exponentials: free blocks use
exp(-i H_s tau_k), pulse blocks exp(-i (H_s + H_c) t_p) with per-spin Rabi
frequency Omega_i = (pi/2 + eps_i) / t_p and a common axis tilt zeta applied
as alpha -> alpha + zeta (z x alpha). Segment exponentials are eigendecomposed
once per system and reused across periods (and, via the ``cache`` argument,
across sequences).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .frames import AXES, FrameSequence, FrameVector, cycle_order, lab_pulse_program
from .hamiltonians import (ControlErrorModel, SystemHamiltonian, spin_operator,
                           to_dense, total_spin_operator, DimensionCapError)

PROPAGATOR_CAP_DEFAULT = 12

_KET = {
    "x": np.array([1.0, 1.0], dtype=complex) / math.sqrt(2),
    "y": np.array([1.0, 1.0j], dtype=complex) / math.sqrt(2),
    "z": np.array([1.0, 0.0], dtype=complex),
}


def _expm_herm(H: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) for Hermitian H via eigendecomposition."""
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


@dataclass(frozen=True)
class EnsembleSpec:
    """Disordered, interacting ensemble: Gaussian on-site fields of width
    sigma_w, all-to-all couplings uniform on [-j_scale, j_scale]."""

    N: int
    sigma_w: float
    j_scale: float
    coupling_style: str = "nv"       # "nv": J^S = -J^I, J^A = 0; or "generic"
    realizations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.coupling_style not in ("nv", "generic"):
            raise ValueError("coupling_style must be 'nv' or 'generic'")
        if self.realizations < 1:
            raise ValueError("need at least one realization")

    def system(self, realization: int) -> SystemHamiltonian:
        """Deterministic draw for one realization index."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, realization]))
        h = rng.normal(0.0, self.sigma_w, self.N)
        ji = np.zeros((self.N, self.N))
        js = np.zeros((self.N, self.N))
        ja = np.zeros((self.N, self.N))
        for i in range(self.N):
            for j in range(i + 1, self.N):
                if self.coupling_style == "nv":
                    val = rng.uniform(-self.j_scale, self.j_scale)
                    ji[i, j], js[i, j] = val, -val
                else:
                    ji[i, j] = rng.uniform(-self.j_scale, self.j_scale)
                    js[i, j] = rng.uniform(-self.j_scale, self.j_scale)
                    ja[i, j] = rng.uniform(-self.j_scale, self.j_scale)
        return SystemHamiltonian(self.N, h, ji, js, ja)

    def metadata(self) -> dict:
        return {"N": self.N, "sigma_w_rad_s": self.sigma_w,
                "j_scale_rad_s": self.j_scale, "coupling_style": self.coupling_style,
                "coupling_graph": "all-to-all", "distribution": "uniform",
                "realizations": self.realizations, "seed": self.seed}


def _tilted_axis(alpha: FrameVector, zeta: float) -> np.ndarray:
    a = np.array(alpha.vec3(), dtype=float)
    tilt = np.cross([0.0, 0.0, 1.0], a)
    return a + zeta * tilt


def floquet_propagator(seq: FrameSequence, sys: SystemHamiltonian,
                       errors: ControlErrorModel | None = None,
                       instantaneous: bool = False,
                       cap: int = PROPAGATOR_CAP_DEFAULT,
                       cache: dict | None = None) -> np.ndarray:
    """Exact one-period propagator (time order: free block k, then pulse k).

    ``instantaneous`` replaces pulse segments with exact rotations (control
    errors still applied) and drops t_p from the timing. Pass a dict as
    ``cache`` to share segment exponentials across sequences on one system.
    """
    if sys.N > cap:
        raise DimensionCapError(f"N={sys.N} exceeds propagator cap {cap}")
    tp = float(seq.tp)
    if not instantaneous and tp <= 0.0:
        raise ValueError("finite-pulse propagation needs t_p > 0; "
                         "use instantaneous=True for ideal pulses")
    errors = errors or ControlErrorModel()
    eps = errors.epsilon_for(sys.N)
    if cache is None:
        cache = {}
    if "dense_sys" not in cache:
        cache["dense_sys"] = to_dense(sys, cap=cap)
    Hs = cache["dense_sys"]

    def free_segment(tau: float) -> np.ndarray:
        key = ("free", tau)
        if key not in cache:
            cache[key] = _expm_herm(Hs, tau)
        return cache[key]

    def pulse_segment(alpha: FrameVector) -> np.ndarray:
        key = ("pulse", alpha.label, instantaneous)
        if key not in cache:
            axis = _tilted_axis(alpha, errors.zeta)
            gen = np.zeros_like(Hs)
            for i in range(sys.N):
                angle_rate = (math.pi / 2 + eps[i]) / (tp if not instantaneous else 1.0)
                for m, ax in enumerate(AXES):
                    if axis[m] != 0.0:
                        gen = gen + angle_rate * axis[m] * spin_operator(sys.N, i, ax)
            if instantaneous:
                cache[key] = _expm_herm(gen, 1.0)
            else:
                cache[key] = _expm_herm(Hs + gen, tp)
        return cache[key]

    pulses = lab_pulse_program(seq).pulses
    U = np.eye(2**sys.N, dtype=complex)
    for k in range(seq.n):
        tau = float(seq.durations[k])
        if tau > 0.0:
            U = free_segment(tau) @ U
        U = pulse_segment(pulses[k]) @ U
    return U


_KET_MINUS = {
    "x": np.array([1.0, -1.0], dtype=complex) / math.sqrt(2),
    "y": np.array([1.0, -1.0j], dtype=complex) / math.sqrt(2),
    "z": np.array([0.0, 1.0], dtype=complex),
}


def polarized_state(N: int, axis: str, sign: int = 1) -> np.ndarray:
    """Product state with every spin along +-axis."""
    single = _KET[axis] if sign > 0 else _KET_MINUS[axis]
    psi = np.array([1.0 + 0j])
    for _ in range(N):
        psi = np.kron(psi, single)
    return psi


@dataclass
class DecayFit:
    """Stretched-exponential fit y0 exp[-(t/T2)^alpha], optionally modulated
    by (A cos(2 pi f t) + 1 - A)."""

    y0: float
    T2: float
    alpha: float
    A: float = 0.0
    f: float = 0.0
    residual: float = 0.0
    converged: bool = True
    t2_is_lower_bound: bool = False

    @property
    def rate(self) -> float:
        return 0.0 if math.isinf(self.T2) else 1.0 / self.T2


def _first_crossing(times: np.ndarray, values: np.ndarray, level: float) -> float | None:
    below = np.nonzero(values < level)[0]
    if len(below) == 0:
        return None
    i = below[0]
    if i == 0:
        return float(times[0])
    t0, t1 = times[i - 1], times[i]
    v0, v1 = values[i - 1], values[i]
    frac = (v0 - level) / (v0 - v1) if v1 != v0 else 0.0
    return float(t0 + frac * (t1 - t0))


def fit_decay(times, values, model: str = "stretched") -> DecayFit:
    """Nonlinear least-squares decay fit with deterministic initial guesses."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 5:
        raise ValueError("need at least 5 points to fit a decay")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    y0_guess = float(values[0])
    span = float(np.max(values) - np.min(values))
    if span < 1e-12:
        return DecayFit(y0=y0_guess, T2=math.inf, alpha=1.0, residual=0.0,
                        t2_is_lower_bound=True)
    crossing = _first_crossing(times, values, y0_guess / math.e)
    crossed = crossing is not None and crossing > 0
    t2_guess = crossing if crossed else float(times[-1])

    def stretched(t, y0, T2, alpha):
        return y0 * np.exp(-np.power(np.maximum(t, 0.0) / T2, alpha))

    def modulated(t, y0, T2, alpha, A, f):
        return stretched(t, y0, T2, alpha) * (A * np.cos(2 * math.pi * f * t) + 1 - A)

    tmax = float(times[-1])
    try:
        if model == "stretched":
            popt, _ = curve_fit(
                stretched, times, values, p0=[y0_guess, t2_guess, 1.0],
                bounds=([0.0, times[1] * 1e-3, 0.05], [2.0, tmax * 1e3, 4.0]),
                maxfev=20000)
            fit = DecayFit(*popt, residual=float(np.linalg.norm(values - stretched(times, *popt))))
        elif model == "stretched-modulated":
            f_guess = _dominant_frequency(times, values, y0_guess, t2_guess)
            popt, _ = curve_fit(
                modulated, times, values,
                p0=[y0_guess, t2_guess, 1.0, 0.5, f_guess],
                bounds=([0.0, times[1] * 1e-3, 0.05, 0.0, 0.0],
                        [2.0, tmax * 1e3, 4.0, 1.0, 0.5 / (times[1] - times[0])]),
                maxfev=40000)
            fit = DecayFit(popt[0], popt[1], popt[2], A=popt[3], f=popt[4],
                           residual=float(np.linalg.norm(values - modulated(times, *popt))))
        else:
            raise ValueError(f"unknown decay model {model!r}")
    except RuntimeError:
        return DecayFit(y0=y0_guess, T2=t2_guess, alpha=1.0, converged=False,
                        residual=float("nan"), t2_is_lower_bound=not crossed)
    if not crossed and fit.T2 > tmax:
        fit.t2_is_lower_bound = True
    return fit


def _dominant_frequency(times, values, y0, t2) -> float:
    envelope = y0 * np.exp(-np.minimum(times / max(t2, times[-1] * 1e-3), 50.0))
    resid = values - envelope
    spec = np.abs(np.fft.rfft(resid - np.mean(resid)))
    freqs = np.fft.rfftfreq(len(times), d=float(times[1] - times[0]))
    if len(spec) <= 1:
        return 0.0
    peak = int(np.argmax(spec[1:]) + 1)
    return float(freqs[peak])


@dataclass
class SimulationResult:
    times: np.ndarray
    traces: dict            # axis -> mean normalized polarization
    stderr: dict            # axis -> standard error over realizations
    fits: dict              # axis -> DecayFit
    combined_rate: float    # mean of per-axis decay rates
    one_over_e: dict        # axis -> interpolated 1/e time (inf sentinel)
    metadata: dict

    @property
    def combined_T2(self) -> float:
        return math.inf if self.combined_rate == 0.0 else 1.0 / self.combined_rate

    def to_csv(self) -> str:
        lines = ["time_s,axis,mean,stderr"]
        for axis in self.traces:
            for t, m, s in zip(self.times, self.traces[axis], self.stderr[axis]):
                lines.append(f"{t!r},{axis},{m!r},{s!r}")
        return "\n".join(lines) + "\n"


def simulate_decay(seq: FrameSequence, ensemble: EnsembleSpec,
                   errors: ControlErrorModel | None = None,
                   axes: tuple[str, ...] = ("x", "y", "z"),
                   n_periods: int = 100,
                   instantaneous: bool = False,
                   fit_model: str = "stretched",
                   cap: int = PROPAGATOR_CAP_DEFAULT) -> SimulationResult:
    """Stroboscopic polarization decay averaged over the disorder ensemble."""
    N = ensemble.N
    period = float(seq.total_free if instantaneous else seq.period)
    times = np.arange(n_periods + 1) * period
    sums = {ax: np.zeros(n_periods + 1) for ax in axes}
    sq_sums = {ax: np.zeros(n_periods + 1) for ax in axes}
    s_tot = {ax: total_spin_operator(N, ax) for ax in axes}
    for r in range(ensemble.realizations):
        sys = ensemble.system(r)
        U = floquet_propagator(seq, sys, errors, instantaneous=instantaneous, cap=cap)
        for ax in axes:
            psi = polarized_state(N, ax)
            norm0 = float(np.real(np.vdot(psi, s_tot[ax] @ psi)))
            trace = np.empty(n_periods + 1)
            for m in range(n_periods + 1):
                trace[m] = float(np.real(np.vdot(psi, s_tot[ax] @ psi))) / norm0
                if m < n_periods:
                    psi = U @ psi
            sums[ax] += trace
            sq_sums[ax] += trace**2
    R = ensemble.realizations
    traces = {ax: sums[ax] / R for ax in axes}
    stderr = {ax: (np.sqrt(np.maximum(sq_sums[ax] / R - traces[ax] ** 2, 0.0) / max(R - 1, 1))
                   if R > 1 else np.zeros(n_periods + 1)) for ax in axes}
    fits = {ax: fit_decay(times, traces[ax], fit_model) for ax in axes}
    one_over_e = {}
    for ax in axes:
        crossing = _first_crossing(times, traces[ax], traces[ax][0] / math.e)
        one_over_e[ax] = crossing if crossing is not None else math.inf
    rates = [0.0 if math.isinf(one_over_e[ax]) else 1.0 / one_over_e[ax] for ax in axes]
    return SimulationResult(times, traces, stderr, fits,
                            combined_rate=float(np.mean(rates)),
                            one_over_e=one_over_e,
                            metadata={"ensemble": ensemble.metadata(),
                                      "n_periods": n_periods,
                                      "instantaneous": instantaneous,
                                      "period_s": period,
                                      "sequence": seq.name or "unnamed"})


@dataclass
class RotationScanResult:
    entries: list           # (epsilon, f, modulation depth A, DecayFit)
    slope: float            # |f| ~ slope * |eps| + intercept
    intercept: float
    r_squared: float
    resolution: float       # 1 / total simulated time

    def frequencies(self):
        return [(e, f) for e, f, _, _ in self.entries]


MODULATION_DEPTH_FLOOR = 0.02


def rotation_error_scan(seq: FrameSequence, ensemble: EnsembleSpec,
                        epsilons, n_periods: int = 200,
                        axes: tuple[str, ...] = ("x", "y", "z"),
                        zeta: float = 0.0,
                        instantaneous: bool = False,
                        cap: int = PROPAGATOR_CAP_DEFAULT) -> RotationScanResult:
    """Modulation frequency of the coherence profile versus rotation-angle
    error. Fits report f = 0 when the modulation depth is below
    MODULATION_DEPTH_FLOOR (no detectable oscillation at that contrast)."""
    entries = []
    period = float(seq.total_free if instantaneous else seq.period)
    resolution = 1.0 / (n_periods * period)
    for eps in epsilons:
        sim = simulate_decay(seq, ensemble, ControlErrorModel(epsilon=eps, zeta=zeta),
                             axes=axes, n_periods=n_periods,
                             instantaneous=instantaneous,
                             fit_model="stretched-modulated", cap=cap)
        found = [(fit.A, fit.f) for fit in sim.fits.values()
                 if fit.converged and fit.A >= MODULATION_DEPTH_FLOOR]
        if found:
            f_mean = float(np.mean([f for _, f in found]))
            depth = float(np.mean([a for a, _ in found]))
        else:
            f_mean, depth = 0.0, 0.0
        entries.append((float(eps), f_mean, depth,
                        sim.fits[axes[0]]))
    eps_abs = np.array([abs(e) for e, *_ in entries])
    f_abs = np.array([abs(f) for _, f, *_ in entries])
    A = np.vstack([eps_abs, np.ones_like(eps_abs)]).T
    coef, *_ = np.linalg.lstsq(A, f_abs, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((f_abs - pred) ** 2))
    ss_tot = float(np.sum((f_abs - np.mean(f_abs)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return RotationScanResult(entries, float(coef[0]), float(coef[1]), r2, resolution)


# ---------------------------------------------------------------------------
# Clifford / three-body averaging checks

def _single_qubit_cliffords() -> list[np.ndarray]:
    """The 24 single-qubit Clifford unitaries (global phase canonicalized)."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    s = np.array([[1, 0], [0, 1j]], dtype=complex)
    seen = {}
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        u = frontier.pop()
        key = _phase_key(u)
        if key in seen:
            continue
        seen[key] = u
        frontier.extend([u @ h, u @ s])
    assert len(seen) == 24, f"Clifford closure found {len(seen)} elements"
    return list(seen.values())


def _phase_key(u: np.ndarray) -> tuple:
    flat = u.flatten()
    idx = int(np.argmax(np.abs(flat) > 1e-9))
    phase = flat[idx] / abs(flat[idx])
    canon = np.round(u / phase, 9)
    return tuple(canon.flatten().tolist())


def _frame_unitaries() -> list[np.ndarray]:
    """Single-qubit rotations u with u^dag sigma_z u along each signed axis."""
    def rot(axis: str, angle: float) -> np.ndarray:
        gen = {"x": np.array([[0, 1], [1, 0]], dtype=complex),
               "y": np.array([[0, -1j], [1j, 0]], dtype=complex)}[axis] / 2
        return _expm_herm(gen, angle)

    return [
        np.eye(2, dtype=complex),        # z+
        rot("x", math.pi),               # z-
        rot("y", -math.pi / 2),          # x+
        rot("y", math.pi / 2),           # x-
        rot("x", math.pi / 2),           # y+
        rot("x", -math.pi / 2),          # y-
    ]


def _conjugation_average(H: np.ndarray, N: int, unitaries: list[np.ndarray]) -> np.ndarray:
    acc = np.zeros_like(H)
    for u in unitaries:
        big = np.array([[1.0 + 0j]])
        for _ in range(N):
            big = np.kron(big, u)
        acc += big.conj().T @ H @ big
    return acc / len(unitaries)


def sixframe_average(H: np.ndarray, N: int) -> np.ndarray:
    """Average of H over the six toggling-frame axis directions."""
    return _conjugation_average(H, N, _frame_unitaries())


def clifford_average(H: np.ndarray, N: int) -> np.ndarray:
    return _conjugation_average(H, N, _single_qubit_cliffords())


@dataclass
class CliffordCheckResult:
    residual: float          # |Clifford avg - six-frame avg| / |H|
    secular: bool
    secular_residual: float


def clifford_average_check(H: np.ndarray, N: int,
                           tolerance: float = 1e-12) -> CliffordCheckResult:
    """Compare Clifford-group averaging with six-frame averaging; for secular
    H they agree (single-qubit Cliffords form a 3-design)."""
    scale = max(float(np.linalg.norm(H)), 1e-300)
    diff = float(np.linalg.norm(clifford_average(H, N) - sixframe_average(H, N)))
    sz = total_spin_operator(N, "z")
    sec = float(np.linalg.norm(H @ sz - sz @ H)) / scale
    return CliffordCheckResult(diff / scale, sec < tolerance * 10, sec)


def polarized_eigen_residuals(H: np.ndarray, N: int) -> dict:
    """|H psi - <H> psi| for the six axis-polarized product states."""
    out = {}
    for axis in AXES:
        for sign in (1, -1):
            psi = polarized_state(N, axis, sign)
            hpsi = H @ psi
            mean = complex(np.vdot(psi, hpsi))
            out[f"{axis}{'+' if sign > 0 else '-'}"] = float(np.linalg.norm(hpsi - mean * psi))
    return out


def chiral_three_body(N: int = 3, J: float = 1.0) -> np.ndarray:
    """J (S_1^x S_2^y S_3^z - S_1^y S_2^x S_3^z) on N = 3 spins."""
    if N != 3:
        raise ValueError("the chiral test term is defined on 3 spins")
    ops = {a: [spin_operator(N, i, a) for i in range(N)] for a in AXES}
    return J * (ops["x"][0] @ ops["y"][1] @ ops["z"][2]
                - ops["y"][0] @ ops["x"][1] @ ops["z"][2])


def levi_civita_symmetrized(N: int = 3, J: float = 1.0) -> np.ndarray:
    """(J/3) sum_{mu nu sigma} eps_{mu nu sigma} S_1^mu S_2^nu S_3^sigma."""
    if N != 3:
        raise ValueError("defined on 3 spins")
    acc = np.zeros((8, 8), dtype=complex)
    perms = {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1,
             (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}
    for (a, b, c), sgn in perms.items():
        acc += sgn * (spin_operator(3, 0, AXES[a]) @ spin_operator(3, 1, AXES[b])
                      @ spin_operator(3, 2, AXES[c]))
    return (J / 3.0) * acc


def four_body_control(N: int = 4) -> np.ndarray:
    """(S^x)^{x4} + (S^y)^{x4} + (S^z)^{x4}: symmetrized but not 4-designed."""
    acc = np.zeros((2**N, 2**N), dtype=complex)
    for a in AXES:
        prod = None
        for i in range(N):
            op = spin_operator(N, i, a)
            prod = op if prod is None else prod @ op
        acc += prod
    return acc


@dataclass
class ThreeBodyReport:
    symmetrized_norm: float
    polarized_residuals: dict
    max_polarized_residual: float


def three_body_checks(H: np.ndarray, N: int = 3) -> ThreeBodyReport:
    """Six-frame symmetrization of a secular (up to) three-body Hamiltonian and
    eigen-residuals of all polarized product states."""
    sym = sixframe_average(H, N)
    res = polarized_eigen_residuals(sym, N)
    return ThreeBodyReport(float(np.linalg.norm(sym)), res, max(res.values()))


def random_secular_hamiltonian(N: int, rng: np.random.Generator,
                               scale: float = 1.0) -> np.ndarray:
    """Random Hermitian matrix projected onto the commutant of S^z_tot."""
    dim = 2**N
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = (raw + raw.conj().T) / 2
    sz = total_spin_operator(N, "z")
    w = np.round(np.real(np.diag(sz)) * 2) / 2
    mask = (w[:, None] == w[None, :])
    return scale * H * mask


__all__ = [
    "EnsembleSpec", "SimulationResult", "DecayFit", "RotationScanResult",
    "floquet_propagator", "simulate_decay", "fit_decay", "rotation_error_scan",
    "clifford_average_check", "sixframe_average", "clifford_average",
    "three_body_checks", "polarized_state", "polarized_eigen_residuals",
    "chiral_three_body", "levi_civita_symmetrized", "four_body_control",
    "random_secular_hamiltonian", "ThreeBodyReport", "CliffordCheckResult",
]
