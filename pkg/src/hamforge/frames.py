"""Frame-matrix representation of periodic pi/2-pulse sequences.

A sequence is stored as the columns of a 3 x n matrix whose k-th column says
which signed axis the S^z operator occupies during the k-th evolution block,
together with the block durations and the pi/2 pulse width. Durations are kept
as exact ``Fraction`` seconds so that the algebraic rule sums evaluate exactly.

Rotation convention (fixed here, documented because the representation alone
does not pin it down): pulses are U = exp(-i theta sum_i S_i^nu), operators
transform as S~ = U^dag S U, right-handed axes. Anchor: a pi/2 pulse about +x
takes a z+ frame to y+. At the vector level a quarter turn about the lab axis
``a`` acts as v -> a (a.v) + v x a.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Sequence

AXES = ("x", "y", "z")
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


class SequenceSyntaxError(ValueError):
    """Malformed sequence file; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SequenceValidationError(ValueError):
    """Sequence violates canonical-form invariants."""

    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


def as_fraction(value) -> Fraction:
    """Exact rational from int/float/str/Fraction (floats convert exactly)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a duration")


@dataclass(frozen=True, order=True)
class FrameVector:
    """Signed coordinate axis: one nonzero component equal to +-1."""

    axis: str
    sign: int

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +-1, got {self.sign!r}")

    @classmethod
    def from_label(cls, label: str) -> "FrameVector":
        m = re.fullmatch(r"([xyz])([+-])", label.strip().lower())
        if not m:
            raise ValueError(f"bad frame label {label!r} (want e.g. 'z+')")
        return cls(m.group(1), 1 if m.group(2) == "+" else -1)

    @classmethod
    def from_vec3(cls, v) -> "FrameVector":
        nz = [(i, int(x)) for i, x in enumerate(v) if x != 0]
        if len(nz) != 1 or nz[0][1] not in (1, -1):
            raise ValueError(f"{v!r} is not a signed axis vector")
        return cls(AXES[nz[0][0]], nz[0][1])

    @property
    def label(self) -> str:
        return f"{self.axis}{'+' if self.sign > 0 else '-'}"

    @property
    def index(self) -> int:
        return _AXIS_INDEX[self.axis]

    def vec3(self) -> tuple[int, int, int]:
        v = [0, 0, 0]
        v[self.index] = self.sign
        return tuple(v)

    def dot(self, other: "FrameVector") -> int:
        return self.sign * other.sign if self.axis == other.axis else 0

    def cross(self, other: "FrameVector") -> "FrameVector | None":
        """self x other; None when parallel/antiparallel."""
        a, b = self.vec3(), other.vec3()
        v = (a[1] * b[2] - a[2] * b[1],
             a[2] * b[0] - a[0] * b[2],
             a[0] * b[1] - a[1] * b[0])
        if v == (0, 0, 0):
            return None
        return FrameVector.from_vec3(v)

    def __neg__(self) -> "FrameVector":
        return FrameVector(self.axis, -self.sign)

    def __repr__(self):
        return f"FrameVector({self.label!r})"


def quarter_turn(v: tuple[int, int, int], axis: FrameVector) -> tuple[int, int, int]:
    """One pi/2 pulse about lab axis ``axis`` acting on an integer 3-vector:
    v -> a (a.v) + v x a under the module's rotation convention."""
    a = axis.vec3()
    d = a[0] * v[0] + a[1] * v[1] + a[2] * v[2]
    cx = (v[1] * a[2] - v[2] * a[1],
          v[2] * a[0] - v[0] * a[2],
          v[0] * a[1] - v[1] * a[0])
    return (a[0] * d + cx[0], a[1] * d + cx[1], a[2] * d + cx[2])


@dataclass(frozen=True)
class FrameSequence:
    """Columns (frames + durations) of one Floquet period, plus pulse width.

    ``durations`` and ``tp`` are Fraction seconds. The object may hold a raw
    (non-canonical) sequence straight from a parser; ``canonicalize`` enforces
    the invariants (cyclic orthogonal adjacency, merged identical neighbours,
    some nonzero duration).
    """

    frames: tuple[FrameVector, ...]
    durations: tuple[Fraction, ...]
    tp: Fraction = Fraction(0)
    name: str | None = None

    def __post_init__(self):
        if len(self.frames) == 0:
            raise ValueError("a sequence needs at least one frame")
        if len(self.frames) != len(self.durations):
            raise ValueError("frames and durations length mismatch")
        if any(t < 0 for t in self.durations):
            raise ValueError("negative duration")
        if self.tp < 0:
            raise ValueError("negative pulse width")

    @classmethod
    def build(cls, spec: Iterable[tuple[str, object]], tp=0, name=None) -> "FrameSequence":
        """Convenience constructor from (label, duration) pairs."""
        frames, durs = [], []
        for label, tau in spec:
            frames.append(FrameVector.from_label(label))
            durs.append(as_fraction(tau))
        return cls(tuple(frames), tuple(durs), as_fraction(tp), name)

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def period(self) -> Fraction:
        """T = sum tau_k + n t_p."""
        return sum(self.durations, Fraction(0)) + self.n * self.tp

    @property
    def total_free(self) -> Fraction:
        return sum(self.durations, Fraction(0))

    def frame_after(self, k: int) -> FrameVector:
        """Frame following interface k (cyclic)."""
        return self.frames[(k + 1) % self.n]

    def labels(self) -> list[str]:
        return [f.label for f in self.frames]

    def with_name(self, name: str) -> "FrameSequence":
        return replace(self, name=name)


def validate(seq: FrameSequence) -> list[str]:
    """All canonical-form violations of ``seq`` (empty list when canonical)."""
    out = []
    if all(t == 0 for t in seq.durations):
        out.append("all durations zero")
    for k in range(seq.n):
        a, b = seq.frames[k], seq.frame_after(k)
        if a.axis == b.axis:
            where = f"interface {k + 1}"
            if a.sign == b.sign:
                if seq.n == 1:
                    out.append("single-frame sequence has no pulse (trivially constant)")
                else:
                    out.append(f"adjacent identical frames at {where} (merge them)")
            else:
                out.append(
                    f"antiparallel adjacency at {where}: a pi rotation must be "
                    "written as two pi/2 blocks with an intermediate frame")
    return out


def canonicalize(seq: FrameSequence) -> FrameSequence:
    """Merge cyclically-adjacent identical frames and check all invariants.

    The wrap merge folds the final block into the first one, matching the
    convention that a trailing free-evolution block on the starting axis
    belongs to the beginning of the period.
    """
    frames = list(seq.frames)
    durations = list(seq.durations)
    changed = True
    while changed and len(frames) > 1:
        changed = False
        for k in range(len(frames)):
            nxt = (k + 1) % len(frames)
            if frames[k] == frames[nxt] and k != nxt:
                if nxt == 0:  # wrap: fold the last block into the first
                    durations[0] += durations[k]
                    del frames[k], durations[k]
                else:
                    durations[k] += durations[nxt]
                    del frames[nxt], durations[nxt]
                changed = True
                break
    merged = FrameSequence(tuple(frames), tuple(durations), seq.tp, seq.name)
    violations = validate(merged)
    if violations:
        raise SequenceValidationError(violations)
    return merged


@dataclass(frozen=True)
class InterfaceData:
    """Geometry of the pulse between frames k and k+1 (0-based, cyclic)."""

    index: int
    chirality: FrameVector          # beta_k = F_{k+1} x F_k
    parity: dict                    # {(mu, nu): P_k^{mu nu}} for mu < nu
    is_pi_pair_member: bool

    @property
    def parity_pair(self) -> tuple[str, str]:
        """The unique axis pair with nonzero parity at this interface."""
        for key, val in self.parity.items():
            if val != 0:
                return key
        raise AssertionError("canonical interface must have one nonzero parity")


def interface_data(seq: FrameSequence) -> list[InterfaceData]:
    """Chirality, parities and pi-pair membership for all n interfaces."""
    betas = []
    for k in range(seq.n):
        a, b = seq.frames[k], seq.frame_after(k)
        beta = b.cross(a)
        if beta is None:
            raise SequenceValidationError(
                [f"interface {k + 1} joins parallel frames; canonicalize first"])
        betas.append(beta)
    out = []
    for k in range(seq.n):
        a, b = seq.frames[k], seq.frame_after(k)
        av, bv = a.vec3(), b.vec3()
        parity = {}
        for i in range(3):
            for j in range(i + 1, 3):
                parity[(AXES[i], AXES[j])] = av[i] * bv[j] + av[j] * bv[i]
        out.append(InterfaceData(k, betas[k], parity, _in_pi_pair(seq, betas, k)))
    return out


def _in_pi_pair(seq: FrameSequence, betas: list[FrameVector], k: int) -> bool:
    """Interface k belongs to a pi pulse: equal chirality with a neighbouring
    interface across a zero-duration intermediate frame."""
    n = seq.n
    nxt = (k + 1) % n
    prv = (k - 1) % n
    if betas[k] == betas[nxt] and seq.durations[nxt] == 0:
        return True
    if betas[k] == betas[prv] and seq.durations[k] == 0:
        return True
    return False


@dataclass(frozen=True)
class FrameTrajectoryX:
    """Trajectory of the transformed S^x operator, one column per block."""

    columns: tuple[FrameVector, ...]
    wrap: FrameVector  # G after one full period; equals columns[0] iff closed


def x_trajectory(seq: FrameSequence) -> FrameTrajectoryX:
    """Sequential construction of the S^x trajectory from the frame matrix.

    Rules: G_1 = +x; if the nonzero row of F_{k+1} differs from that of G_k,
    copy G_k, otherwise copy F_k negated when the nonzero entries of F_{k+1}
    and G_k share a sign.
    """
    if seq.frames[0].axis == "x":
        raise ValueError("x trajectory needs a first frame orthogonal to x "
                         "(start the period on the z or y axis)")
    g = [FrameVector("x", 1)]
    for k in range(seq.n):
        f_next = seq.frame_after(k)
        if f_next.axis != g[k].axis:
            g.append(g[k])
        else:
            flip = -1 if f_next.sign == g[k].sign else 1
            prev = seq.frames[k]
            g.append(FrameVector(prev.axis, flip * prev.sign))
    return FrameTrajectoryX(tuple(g[:seq.n]), g[seq.n])


def _toggling_rotation(beta: FrameVector):
    """3x3 integer matrix of the toggling-frame quarter turn about beta:
    v -> beta (beta.v) + v x beta."""
    b = beta.vec3()
    rows = []
    for i in range(3):
        row = [b[i] * b[j] for j in range(3)]
        rows.append(row)
    # add cross-product matrix for v x beta
    rows[0][1] += b[2]
    rows[0][2] += -b[1]
    rows[1][0] += -b[2]
    rows[1][2] += b[0]
    rows[2][0] += b[1]
    rows[2][1] += -b[0]
    return rows


def _matmul3(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)]
            for i in range(3)]


def cycle_order(seq: FrameSequence) -> int:
    """Smallest m with (net per-period frame rotation)^m = identity.

    The net rotation composes the per-interface toggling quarter turns in time
    order; spinor-level global phases are outside this frame-level criterion.
    """
    ident = [[1 if i == j else 0 for j in range(3)] for i in range(3)]
    net = ident
    for iface in interface_data(seq):
        net = _matmul3(_toggling_rotation(iface.chirality), net)
    power = net
    for m in range(1, 25):
        if power == ident:
            return m
        power = _matmul3(net, power)
    raise AssertionError("net rotation of a signed permutation has order <= 6")


@dataclass(frozen=True)
class PulseProgram:
    """Lab-frame pi/2 pulse list realizing a frame sequence."""

    pulses: tuple[FrameVector, ...]  # axes in the x-y plane, angle pi/2 each


def lab_pulse_program(seq: FrameSequence) -> PulseProgram:
    """Solve the lab rotation axes alpha_k from the chiralities beta_k.

    In the basis of the transformed operators (G_k, Y_k, F_k) the components
    are alpha_x = beta.G_k, alpha_y = beta.Y_k and alpha_z = beta.F_k; the last
    must vanish for a realizable sequence of x/y pulses.
    """
    gs = x_trajectory(seq).columns
    pulses = []
    for iface in interface_data(seq):
        k = iface.index
        g = gs[k]
        y = seq.frames[k].cross(g)
        if y is None:
            raise AssertionError("G_k must stay orthogonal to F_k")
        ax = iface.chirality.dot(g)
        ay = iface.chirality.dot(y)
        az = iface.chirality.dot(seq.frames[k])
        if az != 0 or abs(ax) + abs(ay) != 1:
            raise AssertionError(
                f"pulse {k + 1} solved to alpha=({ax},{ay},{az}); "
                "rotation bookkeeping is inconsistent")
        pulses.append(FrameVector("x", ax) if ax != 0 else FrameVector("y", ay))
    return PulseProgram(tuple(pulses))


def reflect_symmetrize(seq: FrameSequence) -> FrameSequence:
    """Append the time-reversed period to suppress odd Magnus orders.

    The output starts on the doubled copy of the input's final frame, so its
    time profile is palindromic about ``durations[0] / 2`` into the first
    block; pass that offset as ``origin`` to ``magnus_first_order`` to evaluate
    the first-order term at the symmetric point.
    """
    frames = list(seq.frames) + list(reversed(seq.frames))
    durations = list(seq.durations) + list(reversed(seq.durations))
    n = seq.n
    # rotate so the mirrored pair of the last input frame leads the period
    frames = frames[n - 1:] + frames[:n - 1]
    durations = durations[n - 1:] + durations[:n - 1]
    doubled = FrameSequence(tuple(frames), tuple(durations), seq.tp,
                            f"{seq.name}+mirror" if seq.name else None)
    return canonicalize(doubled)


# ---------------------------------------------------------------------------
# serialization

def parse_sequence(text: str) -> FrameSequence:
    """Parse the line-based sequence format (or its JSON equivalent).

    Returns the sequence exactly as written; run ``canonicalize`` to merge and
    validate. Durations are seconds.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _parse_json(stripped)
    tp = None
    frames: list[FrameVector] = []
    durations: list[Fraction] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "tp":
            if tp is not None:
                raise SequenceSyntaxError("duplicate tp declaration", lineno)
            if len(parts) != 2:
                raise SequenceSyntaxError("expected 'tp <seconds>'", lineno)
            tp = _parse_duration(parts[1], lineno, raw.index(parts[1]) + 1)
        elif parts[0] == "frame":
            if len(parts) != 3:
                raise SequenceSyntaxError("expected 'frame <axis><sign> <seconds>'", lineno)
            try:
                fv = FrameVector.from_label(parts[1])
            except ValueError as exc:
                raise SequenceSyntaxError(str(exc), lineno, raw.index(parts[1]) + 1) from None
            frames.append(fv)
            durations.append(_parse_duration(parts[2], lineno, raw.index(parts[2]) + 1))
        else:
            raise SequenceSyntaxError(f"unknown directive {parts[0]!r}", lineno)
    if not frames:
        raise SequenceSyntaxError("no frames in sequence", 1)
    return FrameSequence(tuple(frames), tuple(durations), tp if tp is not None else Fraction(0))


def _parse_duration(token: str, lineno: int, col: int) -> Fraction:
    try:
        value = Fraction(token) if "/" in token else Fraction(float(token))
    except (ValueError, ZeroDivisionError):
        raise SequenceSyntaxError(f"bad duration {token!r}", lineno, col) from None
    if value < 0:
        raise SequenceSyntaxError(f"negative duration {token!r}", lineno, col)
    return value


def _parse_json(text: str) -> FrameSequence:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SequenceSyntaxError(f"bad JSON: {exc.msg}", exc.lineno, exc.colno) from None
    try:
        frames = tuple(FrameVector(f["axis"], int(f["sign"])) for f in obj["frames"])
        durations = tuple(as_fraction(f["tau"]) for f in obj["frames"])
        tp = as_fraction(obj.get("tp", 0))
        name = obj.get("name")
    except (KeyError, TypeError, ValueError) as exc:
        raise SequenceSyntaxError(f"bad sequence JSON: {exc}", 1) from None
    if not frames:
        raise SequenceSyntaxError("no frames in sequence", 1)
    return FrameSequence(frames, durations, tp, name)


def _format_seconds(value: Fraction) -> str:
    """Shortest float string that round-trips the exact duration."""
    f = float(value)
    if Fraction(f) == value:
        return repr(f)
    return f"{value.numerator}/{value.denominator}"


def serialize_sequence(seq: FrameSequence) -> str:
    """Byte-stable text form: tp line, then one frame line per column."""
    lines = [f"tp {_format_seconds(seq.tp)}"]
    for fv, tau in zip(seq.frames, seq.durations):
        lines.append(f"frame {fv.label} {_format_seconds(tau)}")
    return "\n".join(lines) + "\n"


def sequence_to_json(seq: FrameSequence) -> str:
    obj = {
        "tp": float(seq.tp),
        "frames": [{"axis": f.axis, "sign": f.sign, "tau": float(t)}
                   for f, t in zip(seq.frames, seq.durations)],
    }
    if seq.name:
        obj["name"] = seq.name
    return json.dumps(obj, sort_keys=True)


# ---------------------------------------------------------------------------
# built-in sequences

BUILTIN_NAMES = ("cpmg", "wahuha", "echo-wahuha", "xy8", "opt6", "opt12",
                 "seq-e", "seq-f")


def _from_pi_train(axes: list[str], tau: Fraction, tp: Fraction, name: str) -> FrameSequence:
    """Frame matrix of an equidistant pi-pulse train starting on z+ (the
    half-interval at either end merges into one full interval across the wrap)."""
    cols: list[tuple[FrameVector, Fraction]] = [(FrameVector("z", 1), tau)]
    m = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    zhat = (0, 0, 1)
    for i, ax in enumerate(axes):
        pulse = FrameVector.from_label(ax if len(ax) == 2 else ax + "+")
        for half in range(2):
            # accumulate M <- M . R so that F_{k+1} = M z
            r = _toggling_rotation(pulse)  # same vector map as a lab quarter turn
            m = _matmul3(m, r)
            f = FrameVector.from_vec3(
                tuple(sum(m[r_][c] * zhat[c] for c in range(3)) for r_ in range(3)))
            last = i == len(axes) - 1 and half == 1
            if not last:
                cols.append((f, Fraction(0) if half == 0 else tau))
    frames = tuple(c[0] for c in cols)
    durations = tuple(c[1] for c in cols)
    return FrameSequence(frames, durations, tp, name)


def builtin(name: str, tau, tp=0) -> FrameSequence:
    """Named sequences with the symbolic tau resolved to ``tau`` seconds."""
    tau = as_fraction(tau)
    tp = as_fraction(tp)
    t0 = Fraction(0)
    key = name.strip().lower()
    if key == "cpmg":
        seq = FrameSequence.build(
            [("z+", tau), ("y+", t0), ("z-", tau), ("y-", t0)], tp, "cpmg")
    elif key == "wahuha":
        seq = canonicalize(FrameSequence.build(
            [("z+", tau), ("y+", tau), ("x+", 2 * tau), ("y+", tau), ("z+", tau)],
            tp, "wahuha"))
    elif key == "echo-wahuha":
        # WAHUHA-style walk out, time-mirrored inverted walk back; the two pi
        # pulses (x+ -> x- via z+, z- -> z+ via x-) take intermediates chosen
        # so every chirality sum cancels.
        seq = FrameSequence.build(
            [("z+", tau), ("y+", tau), ("x+", tau), ("z+", t0),
             ("x-", tau), ("y-", tau), ("z-", tau), ("x-", t0)],
            tp, "echo-wahuha")
    elif key == "xy8":
        seq = _from_pi_train(["x+", "y+", "x+", "y+", "y+", "x+", "y+", "x+"],
                             tau, tp, "xy8")
    elif key == "opt6":
        seq = FrameSequence.build(
            [("z+", tau), ("y+", tau), ("x+", t0), ("z-", t0), ("y-", tau),
             ("x-", t0), ("z-", tau), ("y+", t0), ("x-", tau), ("z+", t0),
             ("y-", t0), ("x+", tau)], tp, "opt6")
    elif key == "opt12":
        seq = FrameSequence.build(
            [("z+", tau), ("y+", tau), ("x+", tau), ("z-", tau), ("y-", tau),
             ("x-", tau), ("z-", tau), ("y+", tau), ("x-", tau), ("z+", tau),
             ("y-", tau), ("x+", tau)], tp, "opt12")
    elif key == "seq-e":
        seq = FrameSequence.build(
            [("z+", tau), ("y+", tau), ("x+", tau)], tp, "seq-e")
    elif key == "seq-f":
        seq = FrameSequence.build(
            [("z+", tau), ("x-", t0), ("y+", tau), ("z-", t0), ("x+", tau),
             ("y-", t0)], tp, "seq-f")
    else:
        raise KeyError(f"unknown builtin {name!r}; have {', '.join(BUILTIN_NAMES)}")
    return seq
