"""Pulse segments, protocol builders and the plain-text sequence format.

Three control strategies are supported:

``cc``
    conventional control, carrier at D - muB, pi/2 pulses of length
    T = pi/(sqrt(2) Omega) and pi pulses of length 2T;
``erc``
    effective Raman control, carrier at D, preparation pulse of length
    Tbar' (|0> -> |phi>), readout pulse Tbar'' = Tbar - Tbar' and a
    2pi phase gate of length T' = 2 pi / Omega_pi in place of pi pulses;
``two-level-reference``
    the conventional schedule on an ideal two-level system.

Segment durations and rates share one arbitrary time unit; rates are angular
frequencies in the inverse of that unit.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from . import models
from .spin import KET_0, equator_phase

STRATEGIES = ("cc", "erc", "two-level-reference")
PROTOCOLS = ("ramsey", "cpmg", "dq-prep", "dq-ramsey", "pulse", "custom")

DEFAULT_FRAME = {"cc": "rwa-cc", "erc": "rwa-erc", "two-level-reference": "two-level-reference"}


class SequenceError(ValueError):
    """Invalid pulse sequence or builder request."""


class SequenceSyntaxError(SequenceError):
    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class SequenceSemanticError(SequenceError):
    def __init__(self, message, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.message = message
        self.line = line


@dataclass(frozen=True)
class Segment:
    """One drive pulse or free-evolution interval.

    A drive segment of zero duration is an impulsive (delta) pulse and is
    described by its ``area`` = Omega * duration instead of a Rabi frequency.
    ``carrier`` is only used in the lab frame.
    """

    kind: str
    duration: float
    rabi: float | None = None
    carrier: float | None = None
    phase: float = 0.0
    axis: float = 0.0
    area: float | None = None

    def __post_init__(self):
        if self.kind not in ("drive", "free"):
            raise SequenceSemanticError(f"unknown segment kind {self.kind!r}")
        if not math.isfinite(self.duration) or self.duration < 0:
            raise SequenceSemanticError(f"segment duration must be finite and >= 0, got {self.duration!r}")
        if self.kind == "free":
            if self.duration == 0:
                raise SequenceSemanticError("free segments must have positive duration")
            if self.rabi is not None or self.carrier is not None or self.area is not None:
                raise SequenceSemanticError("free segments carry no drive fields")
            if self.phase != 0.0 or self.axis != 0.0:
                raise SequenceSemanticError("free segments carry no drive fields")
            return
        if self.duration == 0:
            if self.area is None or not math.isfinite(self.area):
                raise SequenceSemanticError("an impulsive drive needs a finite area")
        else:
            if self.area is not None:
                raise SequenceSemanticError("area is only meaningful for zero-duration drives")
            if self.rabi is None or not math.isfinite(self.rabi) or self.rabi < 0:
                raise SequenceSemanticError("drive segments need a finite rabi >= 0")

    @property
    def impulsive(self) -> bool:
        return self.kind == "drive" and self.duration == 0


def drive(duration, rabi, phase=0.0, carrier=None, axis=0.0) -> Segment:
    return Segment("drive", float(duration), rabi=float(rabi), carrier=carrier, phase=phase, axis=axis)


def impulse(area, phase=0.0, axis=0.0) -> Segment:
    return Segment("drive", 0.0, area=float(area), phase=phase, axis=axis)


def free(duration) -> Segment:
    return Segment("free", float(duration))


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple = ()
    frame: str = "rwa-cc"
    protocol: str = "custom"
    N: int = 0
    tau: float | None = None
    pulse_T: float | None = None
    strategy: str | None = None
    D: float | None = None
    muB: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.frame not in models.FRAMES:
            raise SequenceSemanticError(f"unknown frame {self.frame!r}")
        if self.protocol not in PROTOCOLS:
            raise SequenceSemanticError(f"unknown protocol {self.protocol!r}")
        if self.frame == "lab":
            if self.D is None:
                raise SequenceSemanticError("the lab frame requires D")
            for s in self.segments:
                if s.impulsive:
                    raise SequenceSemanticError("impulsive pulses are not defined in the lab frame")
                if s.kind == "drive" and s.carrier is None:
                    raise SequenceSemanticError("lab-frame drives need a carrier frequency")
        if self.protocol == "cpmg" and self.N < 1:
            raise SequenceSemanticError("cpmg needs N >= 1")

    @property
    def total_duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    def drive_count(self) -> int:
        return sum(s.kind == "drive" for s in self.segments)


@dataclass(frozen=True)
class ControlParams:
    """Physical knobs shared by the protocol builders.

    ``Omega`` sets the pi/2-type pulses. For ``erc`` the 2pi phase gates use
    ``Omega_pi`` (defaults to ``Omega``). ``Omega = inf`` requests impulsive
    conventional pulses. ``frame`` defaults to the strategy's rotating frame;
    ``"lab"`` needs ``D``.
    """

    muB: float
    Omega: float
    D: float | None = None
    Omega_pi: float | None = None
    frame: str | None = None

    def frame_for(self, strategy):
        return self.frame or DEFAULT_FRAME[strategy]


@dataclass(frozen=True)
class ErcTimings:
    OmegaBar: float
    Tbar: float
    TbarPrime: float
    TbarDoublePrime: float
    phi: float


def erc_timings(muB, Omega) -> ErcTimings:
    """Preparation/readout timing of a drive at the zero-field transition.

    Tbar' = arccos(-4 muB^2 / Omega^2) / OmegaBar with
    OmegaBar = sqrt(muB^2 + Omega^2/4); the prepared state is
    (|-1> - exp(i phi)|+1>)/sqrt 2 with cos(phi) = 8 muB^2/Omega^2 - 1.
    """
    if not (Omega > 0 and math.isfinite(Omega)):
        raise SequenceError("ERC timing needs a finite Omega > 0")
    if Omega < 2 * muB:
        raise SequenceError(f"ERC preparation needs Omega >= 2 muB (got Omega={Omega}, muB={muB})")
    r = (2.0 * muB / Omega) ** 2
    omega_bar = math.sqrt(muB * muB + 0.25 * Omega * Omega)
    t_bar = 2.0 * math.pi / omega_bar
    t1 = math.acos(-r) / omega_bar
    phi = math.acos(min(1.0, 2.0 * r - 1.0))
    t2 = t_bar - t1
    # summing the parts keeps Tbar' + Tbar'' == Tbar exact in floating point
    return ErcTimings(omega_bar, t1 + t2, t1, t2, phi)


def erc_omega_for_prep_time(muB, t_prep):
    """Invert Tbar'(Omega) for a requested preparation time."""
    from scipy.optimize import brentq

    t_max = math.pi / (math.sqrt(2.0) * muB) if muB > 0 else math.inf
    if not 0 < t_prep <= t_max * (1 + 1e-12):
        raise SequenceError(f"ERC preparation time must lie in (0, {t_max:.6g}]")
    if muB == 0:
        return math.pi / t_prep
    lo = 2.0 * muB
    if t_prep >= t_max:
        return lo
    hi = max(4.0 * lo, 2.0 * math.pi / t_prep)
    while erc_timings(muB, hi).TbarPrime > t_prep:
        hi *= 2.0
    return brentq(lambda om: erc_timings(muB, om).TbarPrime - t_prep, lo, hi, xtol=1e-14, rtol=1e-15)


def cc_pulse_durations(Omega):
    """(T_half_pi, T_pi) = (pi/(sqrt 2 Omega), 2 T_half_pi)."""
    if not Omega > 0:
        raise SequenceError("Omega must be positive")
    t = math.pi / (math.sqrt(2.0) * Omega)
    return t, 2.0 * t


def erc_phase_gate_duration(Omega, T_half_pi=None):
    """Length of the |+> -> -|+> gate, T' = 2 sqrt(2) T = 2 pi / Omega."""
    if not Omega > 0:
        raise SequenceError("Omega must be positive")
    if T_half_pi is None:
        T_half_pi = cc_pulse_durations(Omega)[0]
    return 2.0 * math.sqrt(2.0) * T_half_pi


def _require(cond, msg):
    if not cond:
        raise SequenceError(msg)


def _carrier(strategy, p: ControlParams, frame):
    if frame != "lab":
        return None
    _require(p.D is not None, "lab-frame sequences require D")
    return p.D if strategy == "erc" else p.D - p.muB


def _cc_pulse(p, frame, carrier, area_factor, phase=0.0):
    """pi/2 (area_factor 1) or pi (area_factor 2) conventional pulse."""
    if math.isinf(p.Omega):
        _require(frame != "lab", "impulsive pulses are not available in the lab frame")
        return impulse(area_factor * math.pi / math.sqrt(2.0), phase)
    t_half, _ = cc_pulse_durations(p.Omega)
    return drive(area_factor * t_half, p.Omega, phase, carrier)


def _free_or_nothing(duration, what):
    # tolerate round-off when a free interval closes up completely
    if duration < -1e-12 * max(1.0, abs(duration)):
        raise SequenceError(f"{what} would be negative ({duration:.6g}); pulses do not fit")
    return [free(duration)] if duration > 1e-15 else []


def _erc_readout_axis(segments, muB, phi_target):
    """Drive axis that lets the closing ERC pulse map the signal-free state to |0>.

    The closing pulse undoes the preparation only for the equator phase
    phi_target; free precession under muB Sz and the phase gates move the
    phase, which a rotation of the transverse drive axis compensates exactly.
    """
    psi = np.array(KET_0.amplitudes)
    for s in segments:
        if s.kind == "free":
            h = models.rwa_erc_hamiltonian(muB, 0.0)
        else:
            h = models.rwa_erc_hamiltonian(muB, s.rabi, s.phase, s.axis)
        psi = expm(-1j * h * s.duration) @ psi
    return 0.5 * (phi_target - equator_phase(psi))


def build_ramsey(strategy, tau, params: ControlParams) -> PulseSequence:
    """pi/2 - free - pi/2 with total duration ``tau``."""
    _require(strategy in STRATEGIES, f"unknown strategy {strategy!r}")
    _require(tau > 0, "tau must be positive")
    frame = params.frame_for(strategy)
    carrier = _carrier(strategy, params, frame)
    if strategy == "erc":
        tm = erc_timings(params.muB, params.Omega)
        _require(tm.Tbar <= tau * (1 + 1e-12), f"ERC pulses (Tbar={tm.Tbar:.6g}) exceed tau={tau:.6g}")
        segs = [drive(tm.TbarPrime, params.Omega, carrier=carrier)]
        segs += _free_or_nothing(tau - tm.TbarPrime - tm.TbarDoublePrime, "free evolution")
        axis = _erc_readout_axis(segs, params.muB, tm.phi)
        segs.append(drive(tm.TbarDoublePrime, params.Omega, carrier=carrier, axis=axis))
        pulse_T = tm.TbarPrime
    else:
        T = 0.0 if math.isinf(params.Omega) else cc_pulse_durations(params.Omega)[0]
        _require(2 * T <= tau * (1 + 1e-12), f"pulses (2T={2 * T:.6g}) exceed tau={tau:.6g}")
        half = _cc_pulse(params, frame, carrier, 1)
        segs = [half] + _free_or_nothing(tau - 2 * T, "free evolution") + [half]
        pulse_T = T
    return PulseSequence(tuple(segs), frame, "ramsey", 0, tau, pulse_T, strategy, params.D, params.muB)


def build_cpmg(strategy, N, tau, params: ControlParams) -> PulseSequence:
    """N pi pulses (N = 1 is the Hahn echo), half-period ``tau``.

    Consecutive Hahn blocks overlap by T so the total length is
    2 N tau - (N - 1) T. For ``erc`` the role of T is played by Tbar/2, the
    mean of the preparation and readout lengths, and the phase gate of length
    T' sits where the conventional pi pulse would be.
    """
    _require(strategy in STRATEGIES, f"unknown strategy {strategy!r}")
    _require(isinstance(N, (int, np.integer)) and N >= 1, "N must be a positive integer")
    _require(tau > 0, "tau must be positive")
    frame = params.frame_for(strategy)
    carrier = _carrier(strategy, params, frame)
    segs = []
    if strategy == "erc":
        tm = erc_timings(params.muB, params.Omega)
        om_pi = params.Omega_pi or params.Omega
        t_gate = 2.0 * math.pi / om_pi
        outer = tau - 0.5 * t_gate - 0.5 * tm.Tbar
        inner = 2.0 * tau - t_gate - 0.5 * tm.Tbar
        segs.append(drive(tm.TbarPrime, params.Omega, carrier=carrier))
        segs += _free_or_nothing(outer, "first free interval")
        for k in range(N):
            segs.append(drive(t_gate, om_pi, carrier=carrier))
            segs += _free_or_nothing(inner if k < N - 1 else outer, "free interval")
        axis = _erc_readout_axis(segs, params.muB, tm.phi)
        segs.append(drive(tm.TbarDoublePrime, params.Omega, carrier=carrier, axis=axis))
        pulse_T = tm.TbarPrime
    else:
        T = 0.0 if math.isinf(params.Omega) else cc_pulse_durations(params.Omega)[0]
        half = _cc_pulse(params, frame, carrier, 1)
        pi = _cc_pulse(params, frame, carrier, 2)
        segs.append(half)
        segs += _free_or_nothing(tau - 2 * T, "first free interval")
        for k in range(N):
            segs.append(pi)
            segs += _free_or_nothing(2 * tau - 3 * T if k < N - 1 else tau - 2 * T, "free interval")
        segs.append(half)
        pulse_T = T
    return PulseSequence(tuple(segs), frame, "cpmg", int(N), tau, pulse_T, strategy, params.D, params.muB)


def cpmg_total_duration(strategy, N, tau, params: ControlParams) -> float:
    if strategy == "erc":
        return 2 * N * tau - (N - 1) * 0.5 * erc_timings(params.muB, params.Omega).Tbar
    T = 0.0 if math.isinf(params.Omega) else cc_pulse_durations(params.Omega)[0]
    return 2 * N * tau - (N - 1) * T


def build_dq_prep(muB, Omega, D) -> PulseSequence:
    """Lab-frame double-quantum preparation |0> -> (|-1> + i|+1>)/sqrt 2.

    A pi/2 pulse of length T at D - muB followed by a pi pulse of length 2T at
    D + muB. The second carrier phase is -pi/2 so that, with both transitions
    resonant, the ideal map lands on the target in the interaction picture of
    D Sz^2 + muB Sz.
    """
    _require(Omega > 0 and math.isfinite(Omega), "Omega must be finite and positive")
    _require(D is not None and D > 0, "double-quantum preparation is simulated in the lab frame and needs D")
    T, T_pi = cc_pulse_durations(Omega)
    segs = (drive(T, Omega, 0.0, D - muB), drive(T_pi, Omega, -0.5 * math.pi, D + muB))
    return PulseSequence(segs, "lab", "dq-prep", 0, None, T, "dq", D, muB)


def build_dq_ramsey(tau, muB, Omega, D) -> PulseSequence:
    """DQ preparation, free evolution, and the inverted preparation."""
    prep = build_dq_prep(muB, Omega, D)
    T = prep.pulse_T
    _require(6 * T <= tau * (1 + 1e-12), "double-quantum pulses exceed tau")
    undo = (drive(2 * T, Omega, 0.5 * math.pi, D + muB), drive(T, Omega, math.pi, D - muB))
    segs = prep.segments + tuple(_free_or_nothing(tau - 6 * T, "free evolution")) + undo
    return PulseSequence(segs, "lab", "dq-ramsey", 0, tau, T, "dq", D, muB)


def build_preparation(strategy, params: ControlParams, amplitude_scale=1.0, phase=0.0) -> PulseSequence:
    """Single state-preparation pulse starting from |0>.

    Durations come from the nominal ``params.Omega``; the drive itself is
    scaled by ``amplitude_scale`` (Omega (1 + alpha) for amplitude errors).
    """
    frame = params.frame_for(strategy)
    carrier = _carrier(strategy, params, frame)
    if strategy == "erc":
        t = erc_timings(params.muB, params.Omega).TbarPrime
    else:
        t = cc_pulse_durations(params.Omega)[0]
    seg = drive(t, params.Omega * amplitude_scale, phase, carrier)
    return PulseSequence((seg,), frame, "pulse", 0, None, t, strategy, params.D, params.muB)


# ---------------------------------------------------------------------------
# text format

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf"
_KV = re.compile(r"^([A-Za-z_]+)=(.*)$")


def _parse_float(tok, lineno, col):
    if not re.fullmatch(_NUM, tok):
        raise SequenceSyntaxError(f"expected a number, got {tok!r}", lineno, col)
    return float(tok)


def _tokens(line):
    """Whitespace tokens with 1-based start columns."""
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def _keyvals(toks, allowed, lineno, numeric=True):
    out = {}
    for tok, col in toks:
        m = _KV.match(tok)
        if not m:
            raise SequenceSyntaxError(f"expected key=value, got {tok!r}", lineno, col)
        key, val = m.groups()
        if key not in allowed:
            raise SequenceSyntaxError(f"unknown key {key!r}", lineno, col)
        if key in out:
            raise SequenceSyntaxError(f"duplicate key {key!r}", lineno, col)
        out[key] = _parse_float(val, lineno, col + len(key) + 1) if (numeric and key not in ("strategy",)) else val
    return out


def parse_sequence(text: str) -> PulseSequence:
    """Parse the line-oriented sequence format.

    ::

        frame rwa-erc
        params D=2870 muB=10
        protocol ramsey tau=1 T=0.1 N=0 strategy=erc
        drive 0.1 rabi=20 phase=0
        free 0.8
        drive 0 area=1.11
        # comment
    """
    frame = None
    meta = {}
    params = {}
    segs = []
    seg_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        word, col = toks[0]
        rest = toks[1:]
        if word == "frame":
            if len(rest) != 1:
                raise SequenceSyntaxError("frame takes exactly one name", lineno, col)
            if frame is not None:
                raise SequenceSemanticError("frame given twice", lineno)
            if rest[0][0] not in models.FRAMES:
                raise SequenceSemanticError(f"unknown frame {rest[0][0]!r}", lineno)
            frame = rest[0][0]
        elif word == "params":
            params.update(_keyvals(rest, ("D", "muB"), lineno))
        elif word == "protocol":
            if not rest:
                raise SequenceSyntaxError("protocol needs a name", lineno, col)
            name, ncol = rest[0]
            if name not in PROTOCOLS:
                raise SequenceSemanticError(f"unknown protocol {name!r}", lineno)
            kv = _keyvals(rest[1:], ("tau", "T", "N", "strategy"), lineno)
            meta = {"protocol": name, **kv}
        elif word in ("drive", "free"):
            if not rest:
                raise SequenceSyntaxError(f"{word} needs a duration", lineno, col)
            dur = _parse_float(rest[0][0], lineno, rest[0][1])
            try:
                if word == "free":
                    if len(rest) > 1:
                        raise SequenceSyntaxError("free takes only a duration", lineno, rest[1][1])
                    segs.append(free(dur))
                else:
                    kv = _keyvals(rest[1:], ("rabi", "carrier", "phase", "axis", "area"), lineno)
                    segs.append(
                        Segment(
                            "drive",
                            dur,
                            rabi=kv.get("rabi"),
                            carrier=kv.get("carrier"),
                            phase=kv.get("phase", 0.0),
                            axis=kv.get("axis", 0.0),
                            area=kv.get("area"),
                        )
                    )
            except SequenceSemanticError as exc:
                raise SequenceSemanticError(str(exc), lineno) from None
            seg_lines.append(lineno)
        else:
            raise SequenceSyntaxError(f"unknown directive {word!r}", lineno, col)
    if frame is None and not segs:
        raise SequenceSemanticError("empty sequence description")
    if frame is None:
        raise SequenceSemanticError("missing 'frame' directive")
    N = meta.get("N", 0)
    if N != int(N):
        raise SequenceSemanticError("N must be an integer")
    try:
        return PulseSequence(
            tuple(segs),
            frame,
            meta.get("protocol", "custom"),
            int(N),
            meta.get("tau"),
            meta.get("T"),
            meta.get("strategy"),
            params.get("D"),
            params.get("muB", 0.0),
        )
    except SequenceSemanticError as exc:
        raise SequenceSemanticError(str(exc)) from None


def _fmt(x):
    return repr(float(x))


def serialize_sequence(seq: PulseSequence) -> str:
    lines = [f"frame {seq.frame}"]
    par = []
    if seq.D is not None:
        par.append(f"D={_fmt(seq.D)}")
    par.append(f"muB={_fmt(seq.muB)}")
    lines.append("params " + " ".join(par))
    if seq.protocol != "custom" or seq.tau is not None or seq.strategy is not None:
        meta = [f"protocol {seq.protocol}"]
        if seq.tau is not None:
            meta.append(f"tau={_fmt(seq.tau)}")
        if seq.pulse_T is not None:
            meta.append(f"T={_fmt(seq.pulse_T)}")
        meta.append(f"N={seq.N}")
        if seq.strategy is not None:
            meta.append(f"strategy={seq.strategy}")
        lines.append(" ".join(meta))
    for s in seq.segments:
        if s.kind == "free":
            lines.append(f"free {_fmt(s.duration)}")
            continue
        parts = [f"drive {_fmt(s.duration)}"]
        if s.impulsive:
            parts.append(f"area={_fmt(s.area)}")
        else:
            parts.append(f"rabi={_fmt(s.rabi)}")
        if s.carrier is not None:
            parts.append(f"carrier={_fmt(s.carrier)}")
        parts.append(f"phase={_fmt(s.phase)}")
        if s.axis:
            parts.append(f"axis={_fmt(s.axis)}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def with_segments(seq: PulseSequence, segments) -> PulseSequence:
    return replace(seq, segments=tuple(segments))
