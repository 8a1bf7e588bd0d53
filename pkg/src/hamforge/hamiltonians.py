"""Toggling-frame and effective (average) Hamiltonians as coefficient tensors.

Coefficients are stored N-independently: a one-body block ``(N, 3)`` (units
rad/s per S_i^mu) and a two-body block ``(N, N, 3, 3)`` populated for i < j
(coefficient of S_i^mu S_j^nu). Dense 2^N matrices are rendered only on
demand and capped.

Finite-pulse bookkeeping: terms linear in the frame (disorder, antisymmetric
exchange) carry weight tau_k + (4/pi) t_p, quadratic terms (Ising, symmetric
exchange) carry tau_k + t_p, and each pulse adds a cross term
(J^I - J^S)/pi * t_p on the parity pair of its two frames. All divided by
T = sum tau_k + n t_p.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .frames import AXES, FrameSequence, FrameVector, interface_data, lab_pulse_program

DENSE_CAP_DEFAULT = 12
MAGNUS_CAP_DEFAULT = 10

_S = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}
_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS3[_i, _j, _k] = 1.0
    _EPS3[_i, _k, _j] = -1.0


class DimensionCapError(ValueError):
    """Dense rendering above the configured spin-count cap."""


def spin_operator(N: int, site: int, axis: str) -> np.ndarray:
    """S_site^axis on the full 2^N space; site 0 is the most significant slot."""
    out = np.array([[1.0 + 0j]])
    for i in range(N):
        out = np.kron(out, _S[axis] if i == site else np.eye(2))
    return out


def total_spin_operator(N: int, axis: str) -> np.ndarray:
    acc = np.zeros((2**N, 2**N), dtype=complex)
    for i in range(N):
        acc += spin_operator(N, i, axis)
    return acc


@dataclass(frozen=True)
class SystemHamiltonian:
    """On-site disorder h_i plus pair couplings (J^I, J^S, J^A), all rad/s.

    Pair tensors are (N, N) arrays read on i < j; the antisymmetric coupling's
    sign convention is tied to that ordering.
    """

    N: int
    h: np.ndarray
    j_ising: np.ndarray
    j_sym: np.ndarray
    j_anti: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        for name in ("j_ising", "j_sym", "j_anti"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.h.shape != (self.N,):
            raise ValueError("h must have length N")
        for name in ("j_ising", "j_sym", "j_anti"):
            if getattr(self, name).shape != (self.N, self.N):
                raise ValueError(f"{name} must be (N, N)")

    @classmethod
    def from_pairs(cls, N, h, pairs) -> "SystemHamiltonian":
        """pairs: iterable of (i, j, JI, JS, JA) with i < j."""
        ji = np.zeros((N, N))
        js = np.zeros((N, N))
        ja = np.zeros((N, N))
        for i, j, vI, vS, vA in pairs:
            if not 0 <= i < j < N:
                raise ValueError(f"pair ({i},{j}) must satisfy 0 <= i < j < N")
            ji[i, j], js[i, j], ja[i, j] = vI, vS, vA
        return cls(N, np.asarray(h, dtype=float), ji, js, ja)

    @classmethod
    def from_json(cls, text: str, units_scale: float = 1.0) -> "SystemHamiltonian":
        obj = json.loads(text)
        pairs = [(p["i"], p["j"], p.get("JI", 0.0), p.get("JS", 0.0), p.get("JA", 0.0))
                 for p in obj.get("pairs", [])]
        sys = cls.from_pairs(obj["N"], obj["h_rad_s"], pairs)
        if units_scale != 1.0:
            return sys.scaled(units_scale)
        return sys

    def to_json(self) -> str:
        pairs = []
        for i in range(self.N):
            for j in range(i + 1, self.N):
                if any(t[i, j] != 0 for t in (self.j_ising, self.j_sym, self.j_anti)):
                    pairs.append({"i": i, "j": j, "JI": self.j_ising[i, j],
                                  "JS": self.j_sym[i, j], "JA": self.j_anti[i, j]})
        return json.dumps({"N": self.N, "h_rad_s": list(self.h), "pairs": pairs})

    def scaled(self, factor: float) -> "SystemHamiltonian":
        return SystemHamiltonian(self.N, self.h * factor, self.j_ising * factor,
                                 self.j_sym * factor, self.j_anti * factor)

    def pair_list(self):
        for i in range(self.N):
            for j in range(i + 1, self.N):
                yield i, j, self.j_ising[i, j], self.j_sym[i, j], self.j_anti[i, j]


@dataclass(frozen=True)
class ControlErrorModel:
    """Systematic pulse imperfections: angle error(s), common axis tilt, Rabi."""

    epsilon: float | np.ndarray = 0.0
    zeta: float = 0.0

    def epsilon_for(self, N: int) -> np.ndarray:
        eps = np.asarray(self.epsilon, dtype=float)
        eps = np.full(N, float(eps)) if eps.ndim == 0 else eps
        if eps.shape != (N,):
            raise ValueError("epsilon must be scalar or length N")
        if np.any(np.abs(eps) >= math.pi / 2):
            raise ValueError("|epsilon| must stay below pi/2")
        return eps


@dataclass
class EffectiveHamiltonian:
    """Coefficient tensors of a one- plus two-body Hermitian operator."""

    N: int
    one_body: np.ndarray          # (N, 3), rad/s per S_i^mu
    two_body: np.ndarray          # (N, N, 3, 3), populated for i < j
    order: int = 0
    flags: tuple[str, ...] = ()

    @classmethod
    def zeros(cls, N: int, order: int = 0, flags: tuple[str, ...] = ()) -> "EffectiveHamiltonian":
        return cls(N, np.zeros((N, 3)), np.zeros((N, N, 3, 3)), order, flags)

    def max_abs_diff(self, other: "EffectiveHamiltonian") -> float:
        return max(np.max(np.abs(self.one_body - other.one_body), initial=0.0),
                   np.max(np.abs(self.two_body - other.two_body), initial=0.0))

    def max_abs(self) -> float:
        return max(np.max(np.abs(self.one_body), initial=0.0),
                   np.max(np.abs(self.two_body), initial=0.0))

    def __add__(self, other: "EffectiveHamiltonian") -> "EffectiveHamiltonian":
        if self.N != other.N:
            raise ValueError("spin count mismatch")
        return EffectiveHamiltonian(self.N, self.one_body + other.one_body,
                                    self.two_body + other.two_body, self.order,
                                    tuple(dict.fromkeys(self.flags + other.flags)))

    def to_report(self) -> dict:
        return {
            "order": self.order,
            "flags": list(self.flags),
            "one_body": self.one_body.tolist(),
            "two_body": {f"{i},{j}": self.two_body[i, j].tolist()
                         for i in range(self.N) for j in range(i + 1, self.N)
                         if np.any(self.two_body[i, j])},
            "max_abs": self.max_abs(),
        }


def _frame_one_body(F: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Disorder coefficients h_i F_mu for a (possibly mid-pulse) frame vector."""
    return np.outer(h, F)


def _frame_two_body(F: np.ndarray, jI: float, jS: float, jA: float) -> np.ndarray:
    """3x3 pair-coefficient matrix in the frame F (valid mid-pulse too):
    Ising -> outer(F, F), symmetric -> I - outer(F, F), antisymmetric ->
    sum_mu F_mu (S x S)^mu."""
    outer = np.outer(F, F)
    m = jI * outer + jS * (np.eye(3) - outer)
    if jA:
        m = m + jA * np.einsum("m,mns->ns", F, _EPS3)
    return m


def toggling_hamiltonian(seq: FrameSequence, sys: SystemHamiltonian, k: int) -> EffectiveHamiltonian:
    """System Hamiltonian conjugated into the k-th toggling frame (0-based)."""
    if not 0 <= k < seq.n:
        raise IndexError(f"frame index {k} out of range 0..{seq.n - 1}")
    F = np.array(seq.frames[k].vec3(), dtype=float)
    out = EffectiveHamiltonian.zeros(sys.N)
    out.one_body[:] = _frame_one_body(F, sys.h)
    for i, j, jI, jS, jA in sys.pair_list():
        out.two_body[i, j] = _frame_two_body(F, jI, jS, jA)
    return out


def effective_hamiltonian_zeroth(seq: FrameSequence, sys: SystemHamiltonian,
                                 finite_pulse: bool = False) -> EffectiveHamiltonian:
    """Leading-order average Hamiltonian; exact finite-pulse weights on demand."""
    T = float(seq.period if finite_pulse else seq.total_free)
    tp = float(seq.tp) if finite_pulse else 0.0
    out = EffectiveHamiltonian.zeros(sys.N, order=0,
                                     flags=("finite_pulse",) if finite_pulse else ())
    for k in range(seq.n):
        F = np.array(seq.frames[k].vec3(), dtype=float)
        tau = float(seq.durations[k])
        w_lin = tau + 4.0 * tp / math.pi
        w_quad = tau + tp
        out.one_body += w_lin * _frame_one_body(F, sys.h)
        for i, j, jI, jS, jA in sys.pair_list():
            out.two_body[i, j] += w_quad * _frame_two_body(F, jI, jS, 0.0)
            if jA:
                out.two_body[i, j] += w_lin * _frame_two_body(F, 0.0, 0.0, jA)
    if finite_pulse and tp > 0:
        for k in range(seq.n):
            P = _parity_matrix(seq, k)
            for i, j, jI, jS, _ in sys.pair_list():
                out.two_body[i, j] += tp * ((jI - jS) / math.pi) * P
    out.one_body /= T
    out.two_body /= T
    return out


def _parity_matrix(seq: FrameSequence, k: int) -> np.ndarray:
    a = np.array(seq.frames[k].vec3(), dtype=float)
    b = np.array(seq.frame_after(k).vec3(), dtype=float)
    return np.outer(a, b) + np.outer(b, a)


def control_error_hamiltonians(seq: FrameSequence, model: ControlErrorModel,
                               N: int = 1) -> EffectiveHamiltonian:
    """Leading-order error terms from rotation-angle and axis imperfections.

    Angle term: (1/T) sum_i eps_i sum_k beta_k . S_i. Axis term: (zeta/T) times
    the sum of (F_{k+1} - F_k) over pi/2 pulses that are not halves of a pi
    pulse (a common tilt on a full pi pulse re-enters through its own phase
    reference and drops out of this bookkeeping).
    """
    T = float(seq.period)
    eps = model.epsilon_for(N)
    ifaces = interface_data(seq)
    beta_sum = np.zeros(3)
    axis_sum = np.zeros(3)
    for iface in ifaces:
        beta_sum += np.array(iface.chirality.vec3(), dtype=float)
        if not iface.is_pi_pair_member:
            k = iface.index
            axis_sum += np.array(seq.frame_after(k).vec3(), dtype=float)
            axis_sum -= np.array(seq.frames[k].vec3(), dtype=float)
    out = EffectiveHamiltonian.zeros(N, order=0, flags=("angle_error", "axis_error"))
    out.one_body += np.outer(eps, beta_sum) / T
    out.one_body += model.zeta * axis_sum[None, :] / T
    return out


def to_dense(obj, cap: int = DENSE_CAP_DEFAULT) -> np.ndarray:
    """Dense Hermitian 2^N matrix of a SystemHamiltonian or EffectiveHamiltonian."""
    if isinstance(obj, SystemHamiltonian):
        eff = EffectiveHamiltonian.zeros(obj.N)
        eff.one_body[:, 2] = obj.h
        for i, j, jI, jS, jA in obj.pair_list():
            eff.two_body[i, j] = _frame_two_body(np.array([0.0, 0.0, 1.0]), jI, jS, jA)
        obj = eff
    N = obj.N
    if N > cap:
        raise DimensionCapError(f"N={N} exceeds dense cap {cap}")
    H = np.zeros((2**N, 2**N), dtype=complex)
    for i in range(N):
        for m, a in enumerate(AXES):
            c = obj.one_body[i, m]
            if c != 0:
                H += c * spin_operator(N, i, a)
    for i in range(N):
        for j in range(i + 1, N):
            blk = obj.two_body[i, j]
            if not np.any(blk):
                continue
            for m, a in enumerate(AXES):
                for nn, b in enumerate(AXES):
                    if blk[m, nn] != 0:
                        H += blk[m, nn] * (spin_operator(N, i, a) @ spin_operator(N, j, b))
    return H


# ---------------------------------------------------------------------------
# first-order Magnus term

def _theta_slots(seq: FrameSequence, sys: SystemHamiltonian, finite_pulse: bool):
    """Time-ordered slot integrals Theta_k (dense) for the commutator sum.

    Slot k bundles the k-th free block with the adjacent pulse pieces whose
    toggled content lives in frame k, plus the cross term of pulse k.
    """
    tp = float(seq.tp) if finite_pulse else 0.0
    thetas = []
    for k in range(seq.n):
        tau = float(seq.durations[k])
        eff = EffectiveHamiltonian.zeros(sys.N)
        F = np.array(seq.frames[k].vec3(), dtype=float)
        eff.one_body += (tau + 4.0 * tp / math.pi) * _frame_one_body(F, sys.h)
        for i, j, jI, jS, jA in sys.pair_list():
            eff.two_body[i, j] += (tau + tp) * _frame_two_body(F, jI, jS, 0.0)
            if jA:
                eff.two_body[i, j] += (tau + 4.0 * tp / math.pi) * _frame_two_body(F, 0.0, 0.0, jA)
            if tp > 0:
                eff.two_body[i, j] += tp * ((jI - jS) / math.pi) * _parity_matrix(seq, k)
        thetas.append(to_dense(eff, cap=sys.N))
    return thetas


def _split_origin(seq: FrameSequence, origin) -> FrameSequence:
    """Re-anchor the period at time ``origin`` (seconds into the free-evolution
    timeline), splitting the containing block. Only meaningful for tp = 0
    slots; finite-pulse paths keep origin at a block boundary."""
    s = Fraction(origin) % seq.total_free
    if s == 0:
        return seq
    acc = Fraction(0)
    for k in range(seq.n):
        tau = seq.durations[k]
        if s == acc:
            frames = seq.frames[k:] + seq.frames[:k]
            durs = seq.durations[k:] + seq.durations[:k]
            return FrameSequence(frames, durs, seq.tp, seq.name)
        if s < acc + tau:
            offset = s - acc
            first = (seq.frames[k],)
            frames = first + seq.frames[k + 1:] + seq.frames[:k] + first
            durs = ((seq.durations[k] - offset,) + seq.durations[k + 1:]
                    + seq.durations[:k] + (offset,))
            return FrameSequence(frames, durs, seq.tp, seq.name)
        acc += tau
    return seq


def magnus_first_order(seq: FrameSequence, sys: SystemHamiltonian,
                       finite_pulse: bool = False, origin: float = 0.0,
                       include_pulse_self_commutator: bool = False,
                       quadrature_nodes: int = 24,
                       cap: int = MAGNUS_CAP_DEFAULT) -> tuple[np.ndarray, float]:
    """First-order Magnus contribution -(i/2T) sum_{l<k} [Theta_l, Theta_k].

    Returns the dense Hermitian matrix and its Frobenius norm. The O(t_p^2)
    within-pulse self-commutator is omitted by default; enable
    ``include_pulse_self_commutator`` to add it by numerical quadrature.
    ``origin`` shifts the Floquet anchor in seconds along the free-evolution
    timeline (the term is origin dependent; reflection-symmetrized sequences
    vanish at their palindromic midpoint).
    """
    if sys.N > cap:
        raise DimensionCapError(f"N={sys.N} exceeds magnus cap {cap}")
    work = _split_origin(seq, origin) if origin else seq
    T = float(work.period if finite_pulse else work.total_free)
    thetas = _theta_slots(work, sys, finite_pulse)
    dim = 2**sys.N
    acc = np.zeros((dim, dim), dtype=complex)
    running = np.zeros((dim, dim), dtype=complex)
    for theta in thetas:
        acc += running @ theta - theta @ running
        running += theta
    H1 = -1j / (2.0 * T) * acc
    if include_pulse_self_commutator and finite_pulse and work.tp > 0:
        H1 = H1 + _pulse_self_commutators(work, sys, quadrature_nodes)
    return H1, float(np.linalg.norm(H1))


def _toggled_dense(sys: SystemHamiltonian, F: np.ndarray) -> np.ndarray:
    eff = EffectiveHamiltonian.zeros(sys.N)
    eff.one_body += _frame_one_body(F, sys.h)
    for i, j, jI, jS, jA in sys.pair_list():
        eff.two_body[i, j] = _frame_two_body(F, jI, jS, jA)
    return to_dense(eff, cap=sys.N)


def _toggled_antiderivative_dense(sys: SystemHamiltonian, a: np.ndarray,
                                  b: np.ndarray, theta: float) -> np.ndarray:
    """Dense integral_0^theta of the toggled Hamiltonian along the pulse ramp
    F(t) = cos t * a + sin t * b (closed form, no inner quadrature)."""
    lin = math.sin(theta) * a + (1.0 - math.cos(theta)) * b
    w_aa = theta / 2.0 + math.sin(2.0 * theta) / 4.0
    w_bb = theta / 2.0 - math.sin(2.0 * theta) / 4.0
    w_ab = math.sin(theta) ** 2 / 2.0
    W = w_aa * np.outer(a, a) + w_bb * np.outer(b, b) + w_ab * (np.outer(a, b) + np.outer(b, a))
    eff = EffectiveHamiltonian.zeros(sys.N)
    eff.one_body += _frame_one_body(lin, sys.h)
    for i, j, jI, jS, jA in sys.pair_list():
        eff.two_body[i, j] += jI * W + jS * (theta * np.eye(3) - W)
        if jA:
            eff.two_body[i, j] += jA * np.einsum("m,mns->ns", lin, _EPS3)
    return to_dense(eff, cap=sys.N)


def _pulse_self_commutators(seq: FrameSequence, sys: SystemHamiltonian,
                            nodes: int) -> np.ndarray:
    """-(i/2T) sum_k double integral over one pulse of [H(t2), H(t1)], t1 < t2.

    The inner integral G(theta) = int_0^theta H is closed form, so a single
    Gauss-Legendre pass over the analytic integrand [H(theta), G(theta)]
    converges to machine precision."""
    tp = float(seq.tp)
    T = float(seq.period)
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    theta = (xs + 1.0) * (math.pi / 4.0)   # map to [0, pi/2]
    wtheta = ws * (math.pi / 4.0)
    dim = 2**sys.N
    acc = np.zeros((dim, dim), dtype=complex)
    scale = (tp / (math.pi / 2.0)) ** 2    # dt = (2 tp / pi) dtheta, twice
    for k in range(seq.n):
        a = np.array(seq.frames[k].vec3(), dtype=float)
        b = np.array(seq.frame_after(k).vec3(), dtype=float)
        for t, w in zip(theta, wtheta):
            H = _toggled_dense(sys, math.cos(t) * a + math.sin(t) * b)
            G = _toggled_antiderivative_dense(sys, a, b, t)
            acc += (w * scale) * (H @ G - G @ H)
    return -1j / (2.0 * T) * acc


__all__ = [
    "SystemHamiltonian", "EffectiveHamiltonian", "ControlErrorModel",
    "toggling_hamiltonian", "effective_hamiltonian_zeroth",
    "control_error_hamiltonians", "magnus_first_order", "to_dense",
    "spin_operator", "total_spin_operator", "DimensionCapError",
]
