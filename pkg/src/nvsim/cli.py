"""Command-line entry point ``nvsim``.

Frequencies are in units of 1/tau unless stated otherwise; ``--tau`` rescales
the time unit. Grids use the inclusive range syntax ``start:stop:count``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import filters, noise, propagator, sequences, tables
from .models import SignalProbe
from .spin import KET_0, KET_M1, KET_P1, superpose

FILTER_COLUMNS = filters.FilterCurve.CSV_HEADER.split(",")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_range(text):
    """``start:stop:count`` (inclusive), a comma list, or a single number."""
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ValueError
            return np.linspace(start, stop, count) if count > 1 else np.array([start])
        vals = [float(v) for v in text.split(",") if v.strip()]
        if not vals:
            raise ValueError
        return np.array(vals)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}; use start:stop:count or a comma list") from None


def parse_probe(text):
    kv = {}
    for part in text.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(f"invalid probe field {part!r}; expected key=value")
        k, v = part.split("=", 1)
        kv[k.strip()] = v.strip()
    unknown = set(kv) - {"omega", "eps", "quad"}
    if unknown or "omega" not in kv or "eps" not in kv:
        raise argparse.ArgumentTypeError("probe needs omega=<float>,eps=<float>[,quad=cos|sin]")
    try:
        return SignalProbe(float(kv["omega"]), float(kv["eps"]), kv.get("quad", "cos"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def resolve_threads(value):
    value = value if value is not None else os.environ.get("NVSIM_THREADS", "1")
    if str(value) == "auto":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise CliError(f"--threads expects a positive integer or 'auto', got {value!r}") from None
    if n < 1:
        raise CliError("--threads must be at least 1")
    return n


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("output and execution")
    g.add_argument("--out", help="output file (default: standard output)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--threads", help="worker threads, an integer or 'auto' (env NVSIM_THREADS)")
    g.add_argument("--max-step", type=positive_float, default=None, help="integrator step bound")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="nvsim", description="Spin-1 NV pulse-sequence simulations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fidelity-sweep", parents=[common], help="preparation fidelity against T muB")
    p.add_argument("--strategy", choices=("cc", "erc", "dq"), required=True)
    p.add_argument("--tmub", type=parse_range, required=True)
    p.add_argument("--frame", choices=("lab", "rwa"), default="rwa")
    p.add_argument("--d-ratio", type=positive_float, default=287.0, help="D / muB for lab-frame runs")
    p.set_defaults(func=cmd_fidelity_sweep)

    p = sub.add_parser("filter-function", parents=[common], help="analytic and numeric filter functions")
    p.add_argument("--protocol", choices=("ramsey", "cpmg"), default="ramsey")
    p.add_argument("-N", "--n-pulses", dest="N", type=int, default=1)
    p.add_argument("--strategy", choices=("cc", "erc", "two-level-reference", "dq"), default="two-level-reference")
    p.add_argument("--source", choices=("analytic", "numeric", "both"), default="analytic")
    p.add_argument("--tau", type=positive_float, default=1.0)
    p.add_argument("--mub", type=float, default=10.0, help="muB in units of 1/tau")
    p.add_argument("--t", dest="T", type=parse_range, default=np.array([0.0]), help="pulse lengths in units of tau")
    p.add_argument("--omega", type=parse_range, default=None, help="grid in units of 1/tau")
    p.add_argument("--omega-pi", type=positive_float, default=None, help="ERC phase-gate Rabi frequency (1/tau)")
    p.add_argument("--epsilon", type=positive_float, default=None, help="probe amplitude (1/tau)")
    p.add_argument("--d-ratio", type=positive_float, default=287.0)
    p.set_defaults(func=cmd_filter_function)

    p = sub.add_parser("coherence", parents=[common], help="T2 and sensitivity sweep")
    p.add_argument("--strategy", choices=("cc", "erc", "two-level-reference"), action="append")
    p.add_argument("--tmub", type=parse_range, required=True)
    p.add_argument("--gamma", type=positive_float, action="append", help="Lorentzian width (1/tau); repeatable")
    p.add_argument("--flat", action="store_true", help="also evaluate flat noise")
    p.add_argument("--s0", type=positive_float, default=0.01)
    p.add_argument("--tau", type=positive_float, default=1.0)
    p.add_argument("--mub", type=positive_float, default=10.0)
    p.add_argument("--protocol", choices=("ramsey", "cpmg"), default="cpmg")
    p.add_argument("-N", "--n-pulses", dest="N", type=int, default=1)
    p.add_argument("--omega", type=parse_range, default=None)
    p.add_argument("--omega-pi", type=positive_float, default=1e5)
    p.add_argument("--epsilon", type=positive_float, default=None)
    p.add_argument("--eta-opt", type=positive_float, default=1.0)
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("robustness", parents=[common], help="amplitude and phase error checks")
    p.add_argument("--strategy", choices=("cc", "erc"), action="append")
    p.add_argument("--cc-tmub", type=parse_range, default=np.array([10.0]), help="T muB of the conventional pulse")
    p.add_argument("--erc-omega", type=parse_range, default=np.array([2.5, 10.0]), help="ERC Rabi frequencies in units of muB")
    p.add_argument("--alpha", type=parse_range, default=parse_range("-0.2:0.2:41"))
    p.add_argument("--phi", type=parse_range, default=parse_range(f"0:{2 * math.pi}:13"))
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("simulate", parents=[common], help="run a sequence file")
    p.add_argument("sequence", help="sequence description file")
    p.add_argument("--initial", default="0", help="0, +1, -1 or three comma-separated complex amplitudes")
    p.add_argument("--probe", type=parse_probe, default=None, help="omega=...,eps=...,quad=cos|sin")
    p.set_defaults(func=cmd_simulate)
    return parser


def _cfg(args):
    return propagator.IntegratorConfig(max_step=args.max_step) if args.max_step else None


# ---------------------------------------------------------------------------
# commands; each returns (rows, columns) or raw text


def cmd_fidelity_sweep(args):
    frame = "lab" if (args.frame == "lab" or args.strategy == "dq") else None
    rows = noise.fidelity_sweep(
        args.strategy, args.tmub, muB=1.0, frame=frame, d_ratio=args.d_ratio, cfg=_cfg(args), threads=args.threads
    )
    for r in rows:
        r["frame"] = "lab" if frame == "lab" else "rwa"
    return rows, ["strategy", "frame", "TmuB", "fidelity"]


def _ff_params(args, T):
    muB = args.mub / args.tau
    if args.strategy == "erc":
        if T <= 0:
            raise CliError("ERC needs a positive preparation time T")
        Omega = sequences.erc_omega_for_prep_time(muB, T)
    else:
        Omega = math.inf if T == 0 else math.pi / (math.sqrt(2.0) * T)
    D = args.d_ratio * muB if args.strategy == "dq" else None
    om_pi = args.omega_pi / args.tau if args.omega_pi else None
    return sequences.ControlParams(muB, Omega, D, om_pi)


def cmd_filter_function(args):
    tau = args.tau
    omega = filters.default_omega_grid(tau) if args.omega is None else args.omega / tau
    if args.protocol == "cpmg" and args.N < 1:
        raise CliError("cpmg needs N >= 1")
    N = args.N if args.protocol == "cpmg" else 0
    rows = []
    for T_rel in args.T:
        T = float(T_rel) * tau
        if args.source in ("analytic", "both"):
            curve = filters.analytic_curve(args.protocol, tau, T, N, omega, args.strategy)
            rows.extend(curve.rows())
        if args.source in ("numeric", "both"):
            params = _ff_params(args, T)
            curve = filters.numeric_ff(
                args.strategy, args.protocol, tau, params, omega, args.epsilon and args.epsilon / tau, N, _cfg(args), args.threads
            )
            rows.extend(curve.rows())
    return rows, FILTER_COLUMNS


def cmd_coherence(args):
    strategies = args.strategy or ["cc", "erc"]
    noises = [noise.NoiseSpectrum.lorentzian(args.s0, g / args.tau) for g in (args.gamma or [1.0, 3.0, 10.0])]
    if args.flat:
        noises.append(noise.NoiseSpectrum.flat(args.s0))
    tau = args.tau
    omega = np.linspace(0.0, 1000.0, 8001) / tau if args.omega is None else args.omega / tau
    rows = []
    for s in strategies:
        rows += noise.coherence_sensitivity_sweep(
            s,
            args.tmub,
            noises,
            tau=tau,
            muB=args.mub / tau,
            protocol=args.protocol,
            N=args.N,
            Omega_pi=args.omega_pi / tau if s == "erc" else None,
            omega_grid=omega,
            epsilon=args.epsilon and args.epsilon / tau,
            eta_opt=args.eta_opt,
            cfg=_cfg(args),
            threads=args.threads,
        )
    return rows, ["strategy", "TmuB", "kind", "S0", "Gamma", "chi", "T2", "eta_ratio"]


def cmd_robustness(args):
    strategies = args.strategy or ["cc", "erc"]
    rows = []
    for s in strategies:
        if s == "cc":
            cases = [(noise.control_for("cc", tm, 1.0), float(tm)) for tm in args.cc_tmub]
        else:
            cases = []
            for om in args.erc_omega:
                params = sequences.ControlParams(1.0, float(om))
                cases.append((params, sequences.erc_timings(1.0, float(om)).TbarPrime))
        for params, tm in cases:
            common = {"strategy": s, "TmuB": tm, "Omega": params.Omega}
            for r in noise.amplitude_error_sweep(s, args.alpha, params, _cfg(args), args.threads):
                cert = None
                if s == "erc":
                    cert = noise.equator_certificate(noise.prepared_state(s, params, 1.0 + r["alpha"]))
                rows.append({"test": "amplitude", **common, "param": r["alpha"], "fidelity": r["fidelity"], "certificate": cert})
            if s == "erc":
                for mode in ("prep", "split"):
                    for r in noise.phase_error_check(args.phi, params, mode):
                        rows.append({"test": f"phase-{mode}", **common, "param": r["phi_p"], "fidelity": r["fidelity"], "certificate": None})
    return rows, ["test", "strategy", "TmuB", "Omega", "param", "fidelity", "certificate"]


def _initial_state(text):
    named = {"0": KET_0, "+1": KET_P1, "1": KET_P1, "-1": KET_M1}
    if text in named:
        return named[text]
    try:
        amps = [complex(v.replace(" ", "")) for v in text.split(",")]
    except ValueError:
        raise CliError(f"cannot read initial state {text!r}") from None
    if len(amps) != 3:
        raise CliError("initial state needs three amplitudes (c+1, c0, c-1)")
    return superpose(amps)


def cmd_simulate(args):
    try:
        with open(args.sequence, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"{args.sequence}: {exc.strerror}") from None
    try:
        seq = sequences.parse_sequence(text)
    except sequences.SequenceError as exc:
        line = getattr(exc, "line", None)
        if line is None:
            raise CliError(f"{args.sequence}: {exc}") from None
        where = f"{args.sequence}:{line}"
        if getattr(exc, "column", None):
            where += f":{exc.column}"
        raise CliError(f"{where}: {exc.message}") from None
    psi = propagator.run_sequence(seq, _initial_state(args.initial), args.probe, _cfg(args))
    amps = np.asarray(psi)
    result = {
        "frame": seq.frame,
        "total_duration": seq.total_duration,
        "amplitudes": [[float(a.real), float(a.imag)] for a in amps],
        "populations": [float(p) for p in np.abs(amps) ** 2],
    }
    return json.dumps(result, indent=1) + "\n"


# ---------------------------------------------------------------------------


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".nvsim-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.threads = resolve_threads(args.threads)
        out = args.func(args)
        text = out if isinstance(out, str) else tables.render(*out, args.format)
        _write(text, args.out)
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"nvsim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
