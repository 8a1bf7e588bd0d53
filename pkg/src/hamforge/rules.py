"""Algebraic decoupling/robustness conditions and engineered-Hamiltonian targets.

All sums are evaluated in exact rational arithmetic. The finite-pulse linear
weight tau_k + (4/pi) t_p mixes a rational and a pi-irrational part, which can
only vanish when both parts vanish separately, so condition 1 reduces to two
exact integer/rational tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .frames import AXES, FrameSequence, interface_data

CONDITION_KEYS = ("C1", "C2", "C3", "C4", "C5", "C6")
_PAIRS = (("x", "y"), ("x", "z"), ("y", "z"))
_ORDERED_PAIRS = tuple((a, b) for a in AXES for b in AXES if a != b)


@dataclass(frozen=True)
class SequenceSums:
    """Weighted row sums K and absolute row sums L of the frame matrix."""

    mode: str                       # "ideal" | "finite"
    K: tuple[float, float, float]
    L: tuple[float, float, float]
    K_tau: tuple[Fraction, ...]     # sum_k F tau_k (unnormalized)
    K_count: tuple[int, ...]        # sum_k F (pulse-width part of the weight)
    L_weighted: tuple[Fraction, ...]  # sum_k |F| (tau_k [+ t_p]) (unnormalized)
    period: Fraction

    def K_exact_zero(self) -> tuple[bool, bool, bool]:
        if self.mode == "ideal":
            return tuple(k == 0 for k in self.K_tau)
        return tuple(kt == 0 and kc == 0 for kt, kc in zip(self.K_tau, self.K_count))

    def L_exact_equal(self) -> bool:
        return self.L_weighted[0] == self.L_weighted[1] == self.L_weighted[2]


def sequence_sums(seq: FrameSequence, finite_pulse: bool = False) -> SequenceSums:
    k_tau = [Fraction(0)] * 3
    k_cnt = [0] * 3
    l_w = [Fraction(0)] * 3
    tp = seq.tp if finite_pulse else Fraction(0)
    for fv, tau in zip(seq.frames, seq.durations):
        m = fv.index
        k_tau[m] += fv.sign * tau
        k_cnt[m] += fv.sign
        l_w[m] += tau + tp
    T = seq.total_free + (seq.n * tp if finite_pulse else 0)
    Tf = float(T)
    K = tuple((float(k_tau[m]) + (4.0 / math.pi) * float(tp) * k_cnt[m]) / Tf
              for m in range(3))
    L = tuple(float(l_w[m]) / Tf for m in range(3))
    return SequenceSums("finite" if finite_pulse else "ideal", K, L,
                        tuple(k_tau), tuple(k_cnt), tuple(l_w), T)


@dataclass(frozen=True)
class RuleReport:
    """Residuals and verdicts for every decoupling/robustness condition."""

    passed: dict              # {"C1": bool, ...}
    residuals: dict           # per condition, axis/pair -> float residual
    class_label: str          # I | II | III | IV | unclassified
    tolerance: float
    sums: SequenceSums

    def to_json(self) -> str:
        obj = {
            "class": self.class_label,
            "tolerance": self.tolerance,
            "conditions": {k: self.passed[k] for k in CONDITION_KEYS},
            "residuals": {k: self.residuals[k] for k in CONDITION_KEYS},
            "K": list(self.sums.K),
            "L": list(self.sums.L),
            "mode": self.sums.mode,
        }
        return json.dumps(obj, sort_keys=True)

    def to_table(self) -> str:
        rows = [f"{'condition':<11}{'pass':<6}residuals"]
        names = {
            "C1": "C1 echo", "C2": "C2 symm", "C3": "C3 parity",
            "C4": "C4 chiral", "C5": "C5 axis", "C6": "C6 3body",
        }
        for key in CONDITION_KEYS:
            res = self.residuals[key]
            res_s = ", ".join(f"{k}={v:+g}" for k, v in res.items()) if res else "-"
            rows.append(f"{names[key]:<11}{str(self.passed[key]):<6}{res_s}")
        rows.append(f"{'class':<11}{self.class_label}")
        return "\n".join(rows)

    @property
    def all_decoupling(self) -> bool:
        return all(self.passed[k] for k in ("C1", "C2", "C3", "C4"))


def check_rules(seq: FrameSequence, finite_pulse: bool = True,
                tolerance: float = 1e-12) -> RuleReport:
    """Evaluate conditions C1-C6 and assign the robustness class.

    Classes presuppose C1 and C2; within that, I passes both C3 and C4, II
    fails C3 only, III fails C4 only, IV fails both. C5 and C6 are reported
    but excluded from the label.
    """
    sums = sequence_sums(seq, finite_pulse=finite_pulse)
    ifaces = interface_data(seq)

    c1_ok = all(sums.K_exact_zero())
    c2_ok = sums.L_exact_equal()

    parity_sums = {p: 0 for p in _PAIRS}
    for iface in ifaces:
        for p in _PAIRS:
            parity_sums[p] += iface.parity[p]
    c3_ok = all(v == 0 for v in parity_sums.values())

    chirality = [0, 0, 0]
    for iface in ifaces:
        chirality[iface.chirality.index] += iface.chirality.sign
    c4_ok = all(v == 0 for v in chirality)

    axis_sums = [0, 0, 0]
    for iface in ifaces:
        if iface.is_pi_pair_member:
            continue
        k = iface.index
        after = seq.frame_after(k).vec3()
        before = seq.frames[k].vec3()
        for m in range(3):
            axis_sums[m] += after[m] - before[m]
    c5_ok = all(v == 0 for v in axis_sums)

    cross3 = {p: 0 for p in _ORDERED_PAIRS}
    for k in range(seq.n):
        a = seq.frames[k].vec3()
        b = seq.frame_after(k).vec3()
        for mi, mu in enumerate(AXES):
            for ni, nu in enumerate(AXES):
                if mu == nu:
                    continue
                cross3[(mu, nu)] += a[mi] ** 2 * b[ni] + b[mi] ** 2 * a[ni]
    c6_ok = all(v == 0 for v in cross3.values())

    passed = {"C1": c1_ok, "C2": c2_ok, "C3": c3_ok, "C4": c4_ok,
              "C5": c5_ok, "C6": c6_ok}
    if not (c1_ok and c2_ok):
        label = "unclassified"
    elif c3_ok and c4_ok:
        label = "I"
    elif not c3_ok and c4_ok:
        label = "II"
    elif c3_ok and not c4_ok:
        label = "III"
    else:
        label = "IV"

    lmean = sum(sums.L) / 3.0
    residuals = {
        "C1": {m: sums.K[i] for i, m in enumerate(AXES)},
        "C2": {m: sums.L[i] - lmean for i, m in enumerate(AXES)},
        "C3": {f"{a}{b}": float(v) for (a, b), v in parity_sums.items()},
        "C4": {m: float(chirality[i]) for i, m in enumerate(AXES)},
        "C5": {m: float(axis_sums[i]) for i, m in enumerate(AXES)},
        "C6": {f"{a}{b}": float(v) for (a, b), v in cross3.items()},
    }
    return RuleReport(passed, residuals, label, tolerance, sums)


@dataclass(frozen=True)
class EngineeredTargets:
    """Interaction-type coefficient c and what it implies for the engineered
    Hamiltonian: tuned coupling forms, disorder scaling, max disorder bound."""

    c: float
    c_exact: Fraction
    jt_sym_form: tuple[float, float]    # J~S = a*J^S + b*J^I
    jt_ising_form: tuple[float, float]  # J~I = a*J^S + b*J^I
    h_eff_per_unit: tuple[float, float, float]
    w_eff_bound: float
    xy_balance_residual: float          # sum|Fx|(tau+tp) - sum|Fy|(tau+tp), /T

    def tuned_couplings(self, j_sym: float, j_ising: float) -> tuple[float, float]:
        a, b = self.jt_sym_form
        c, d = self.jt_ising_form
        return a * j_sym + b * j_ising, c * j_sym + d * j_ising

    def to_json(self) -> str:
        return json.dumps({
            "c": self.c,
            "jt_sym_form": list(self.jt_sym_form),
            "jt_ising_form": list(self.jt_ising_form),
            "h_eff_per_unit": list(self.h_eff_per_unit),
            "w_eff_bound": self.w_eff_bound,
            "xy_balance_residual": self.xy_balance_residual,
        }, sort_keys=True)


def w_eff_bound(c: float) -> float:
    """Maximal effective-disorder scale for tuning coefficient c."""
    return math.sqrt(c * c + (1.0 - c) ** 2 / 2.0)


def engineered_targets(seq: FrameSequence, finite_pulse: bool = True) -> EngineeredTargets:
    sums = sequence_sums(seq, finite_pulse=finite_pulse)
    c_exact = sums.L_weighted[2] / sums.period
    c = float(c_exact)
    balance = float((sums.L_weighted[0] - sums.L_weighted[1]) / sums.period)
    return EngineeredTargets(
        c=c,
        c_exact=c_exact,
        jt_sym_form=((1.0 + c) / 2.0, (1.0 - c) / 2.0),
        jt_ising_form=(1.0 - c, c),
        h_eff_per_unit=tuple(sums.K),
        w_eff_bound=w_eff_bound(c),
        xy_balance_residual=balance,
    )


__all__ = ["SequenceSums", "RuleReport", "EngineeredTargets", "sequence_sums",
           "check_rules", "engineered_targets", "w_eff_bound", "CONDITION_KEYS"]
