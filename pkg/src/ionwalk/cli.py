"""Command-line front end.

Every output CSV starts with a ``# {json}`` provenance line (package version,
subcommand, fully resolved configuration) followed by a header row and values
written with 17 significant digits. Nothing time-dependent is recorded, so
identical arguments give byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical or truncation
error, 4 I/O or parse error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from importlib import metadata

import numpy as np

from . import decoherence, fock, iontrap, readout, walker, wigner
from .errors import ConfigError, IonWalkError, NumericError

log = logging.getLogger("ionwalk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("ideal", "ion", "sweep", "readout", "wigner", "fit")
GLOBAL_KEYS = ("dim", "seed", "out_dir", "threads", "verbose")
# options that cannot change results stay out of the provenance record
_NOT_PROVENANCE = ("func", "config", "out_dir", "threads", "verbose")


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


# -- output helpers -----------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def provenance(args, **extra):
    cfg = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in _NOT_PROVENANCE}
    head = {"program": "ionwalk", "version": _version(), "config": cfg}
    head.update(extra)
    return head


def write_table(path, header, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    log.info("wrote %s", path)


def read_table(path):
    """Read a CSV written by this tool (or any headed CSV); ``#`` lines are skipped.

    Returns ``(columns, float array)``. Malformed content raises ValueError.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    reader = csv.reader(io.StringIO("".join(lines)))
    try:
        columns = next(reader)
    except StopIteration:
        raise ValueError(f"{path}: no header row") from None
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(columns):
            raise ValueError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
        rows.append([float(x) for x in row])
    return [c.strip() for c in columns], np.array(rows, dtype=float).reshape(-1, len(columns))


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


# -- shared physics plumbing --------------------------------------------------


def _truncation(args):
    return fock.TruncationConfig(dim=args.dim)


def _ion_params(args):
    to_rad = 2e6 * math.pi
    delta = args.delta if args.delta is not None else args.delta_mhz * to_rad
    omega_z = args.omega_z if args.omega_z is not None else args.omega_z_mhz * to_rad
    omega_up = args.omega_up if args.omega_up is not None else args.omega_up_mhz * to_rad
    return iontrap.IonParams(
        delta=delta, omega_z=omega_z, omega_up=omega_up, eta=args.eta, pulse_t=args.pulse_t,
        laser_phase=args.laser_phase, include_B=not args.no_B, include_Uoff=not args.no_Uoff,
        uoff_evaluation=args.uoff_evaluation,
    )


def _moment_row(n, m):
    return (n, m.mean_x, m.var_x, m.var_p, m.mean_n)


MOMENT_COLUMNS = ("N", "mean_x", "var_x", "var_p", "mean_n")


def _walk_tables(args, prefix, states, alpha_scale, head):
    cfg = _truncation(args)
    s0 = walker.initial_state(cfg)
    rows = [_moment_row(0, walker.walker_moments(s0))]
    rows += [_moment_row(k, walker.walker_moments(s)) for k, s in enumerate(states, start=1)]
    write_table(_out(args, f"{prefix}_moments.csv"), head, MOMENT_COLUMNS, rows)

    final = states[-1] if states else s0
    n_steps = len(states)
    extent = math.sqrt(2) * abs(alpha_scale) * n_steps + 8.0
    grid = np.linspace(-extent, extent, args.x_points)
    px = fock.branch_position_distribution(list(final.branches), grid)
    write_table(_out(args, f"{prefix}_position.csv"), head, ("x", "P_x"), zip(grid, px))
    pn = np.sum(np.abs(final.branches) ** 2, axis=0)
    write_table(_out(args, f"{prefix}_pn.csv"), head, ("n", "P_n"), zip(range(len(pn)), pn))


def _ideal_states(args, phi, steps):
    cfg = _truncation(args)
    stepper = walker.IdealStepper(args.alpha, cfg)
    return list(walker.run_walk(stepper, [phi] * steps, walker.initial_state(cfg)))


def _ion_states(args, p, phi, steps, oracle=False):
    cfg = _truncation(args)
    stepper = iontrap.IonStepper.from_params(p, cfg, oracle=oracle)
    return list(walker.run_walk(stepper, [phi] * steps, walker.initial_state(cfg)))


# -- subcommands --------------------------------------------------------------


def cmd_ideal(args):
    states = _ideal_states(args, args.phi, args.steps)
    _walk_tables(args, "ideal", states, args.alpha, provenance(args))
    return EXIT_OK


def cmd_ion(args):
    p = _ion_params(args)
    diag = iontrap.ld_validity(p, max(args.steps, 1))
    log.info("step amplitude 3*Omega_up*eta*t = %.6f, Lamb-Dicke margin %.3f",
             p.step_amplitude, diag.ld_margin)
    head = provenance(args, step_amplitude=p.step_amplitude, ld_margin=diag.ld_margin)
    states = _ion_states(args, p, args.phi, args.steps, oracle=args.oracle)
    if args.oracle:
        product = _ion_states(args, p, args.phi, args.steps)
        fids = [iontrap.fidelity(a, b) for a, b in zip(states, product)]
        for k, f in enumerate(fids, start=1):
            level = logging.INFO if f >= 0.999 else logging.WARNING
            log.log(level, "step %d: fidelity(product, integrated) = %.12f", k, f)
        write_table(_out(args, "ion_oracle_fidelity.csv"), head, ("N", "fidelity"),
                    zip(range(1, len(fids) + 1), fids))
    _walk_tables(args, "ion", states, p.step_amplitude, head)
    return EXIT_OK


def _parse_q_list(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok in ("inf", "infinity", "oo"):
            out.append(math.inf)
        else:
            try:
                out.append(float(tok))
            except ValueError:
                raise ConfigError(f"cannot parse q value {tok!r}") from None
    return out


def _q_label(q):
    return "inf" if math.isinf(q) else f"{q:g}"


def cmd_sweep(args):
    cfg_t = _truncation(args)
    ion_p = _ion_params(args) if args.walk == "ion" else None
    alpha = ion_p.step_amplitude if ion_p else args.alpha
    fits = []
    for q in _parse_q_list(args.q):
        cfg = decoherence.DecoherenceConfig(
            q=q, n_traj=args.n_traj, master_seed=args.seed, n_steps=args.steps,
            walk_kind=args.walk, alpha_step=args.alpha, ion_params=ion_p, truncation=cfg_t,
        )
        acc = decoherence.run_ensemble(cfg, threads=args.threads)
        obs = decoherence.mixture_observables(acc)
        head = provenance(args, q=_q_label(q), trajectories_run=acc.count)
        vac = walker.walker_moments(walker.initial_state(cfg_t))
        rows = [(0, vac.mean_x, vac.var_x, vac.var_p, vac.mean_n, 0.0)]
        rows += list(zip(obs.steps, obs.mean_x, obs.var_x, obs.var_p, obs.mean_n, obs.spread_x))
        write_table(_out(args, f"sweep_q{_q_label(q)}.csv"), head,
                    MOMENT_COLUMNS + ("spread_x",), rows)
        fit_max = args.fit_max or args.steps
        spread, xi = decoherence.ensemble_slopes(acc, args.fit_min, fit_max)
        raw, _ = decoherence.ensemble_slopes(acc, args.fit_min, fit_max, subtract_zero_point=False)
        fits.append((_q_label(q), spread.slope, spread.stderr, xi.slope, xi.stderr, raw.slope, raw.stderr))
        log.info("q=%s: varsigma=%.4f (raw sigma_x %.4f), xi=%.4f", _q_label(q), spread.slope,
                 raw.slope, xi.slope)
    write_table(
        _out(args, "sweep_fits.csv"), provenance(args, step_amplitude=alpha),
        ("q", "varsigma", "varsigma_err", "xi", "xi_err", "varsigma_raw", "varsigma_raw_err"), fits,
    )
    return EXIT_OK


def _readout_config(args, n_max=None):
    times = None
    if args.duration is not None or args.samples is not None:
        duration = args.duration if args.duration is not None else (
            readout.DEFAULT_DURATION_RAD / args.omega0)
        times = np.linspace(0.0, duration, args.samples or readout.DEFAULT_SAMPLES)
    return readout.ReadoutConfig(eta=args.eta, omega0=args.omega0, sample_times=times,
                                 noise_sigma=args.noise_sigma, n_max=n_max or args.n_max,
                                 seed=args.seed)


def _dump_result(args, res, head):
    rows = zip(range(len(res.p_n_hat)), res.p_n_hat, res.ambiguity_flags)
    head = dict(head, residual_norm=res.residual_norm, condition_number=res.condition_number,
                deficit=res.deficit)
    write_table(_out(args, "readout_pn.csv"), head, ("n", "p_hat", "ambiguous"), rows)
    if res.flagged:
        bad = [int(i) for i in np.nonzero(res.ambiguity_flags)[0]]
        msg = f"ambiguous bins {bad}; condition number {res.condition_number:.3e}"
        if not args.allow_ambiguous:
            raise NumericError(msg)
        log.warning(msg)


def cmd_readout(args):
    if args.mode == "synthesize":
        if not args.pn:
            raise ConfigError("synthesize needs --pn")
        cols, data = read_table(args.pn)
        if "P_n" not in cols and "p" not in cols:
            raise ValueError(f"{args.pn}: needs a P_n column")
        p_n = data[:, cols.index("P_n" if "P_n" in cols else "p")]
        cfg = _readout_config(args, n_max=max(1, len(p_n)))
        channels = (readout.Channel.CARRIER, readout.Channel.BLUE_SIDEBAND) if args.channel == "both" \
            else (readout.Channel(args.channel),)
        rng = np.random.default_rng(args.seed)
        for ch in channels:
            sig = readout.synthesize_signal(p_n, ch, cfg, rng=rng)
            sig.to_csv(_out(args, f"signal_{ch.value}.csv"), provenance(args))
        return EXIT_OK

    cfg = _readout_config(args)
    if args.mode == "reconstruct":
        if not args.signal:
            raise ConfigError("reconstruct needs --signal")
        sig = readout.SignalTrace.from_csv(args.signal)
        res = readout.reconstruct(sig, cfg)
    else:
        if not (args.signal and args.bsb):
            raise ConfigError("hybrid needs --signal (carrier) and --bsb")
        car = readout.SignalTrace.from_csv(args.signal, channel=readout.Channel.CARRIER)
        bsb = readout.SignalTrace.from_csv(args.bsb, channel=readout.Channel.BLUE_SIDEBAND)
        res = readout.hybrid_reconstruct(car, bsb, cfg)
    _dump_result(args, res, provenance(args))
    return EXIT_OK


def _wigner_state(args):
    cfg = _truncation(args)
    if args.source == "vacuum":
        return fock.FockState.vacuum(cfg)
    if args.source == "fock":
        return fock.FockState.number(args.fock_n, cfg)
    if args.source == "ideal":
        states = _ideal_states(args, args.phi, args.steps)
    else:
        states = _ion_states(args, _ion_params(args), args.phi, args.steps)
    return walker.reduce_walker(states[-1] if states else walker.initial_state(cfg))


def cmd_wigner(args):
    state = _wigner_state(args)
    axis = wigner.uniform_axis(args.extent, args.points)
    grid = wigner.wigner_grid(state, axis, axis, threads=args.threads)
    asym_x, asym_p = wigner.symmetry_metrics(grid)
    extra = provenance(args, asym_x=asym_x, asym_p=asym_p,
                       sideband_energy=wigner.sideband_energy(grid, (args.band, math.inf)))
    grid.write(_out(args, "wigner.csv"), _out(args, "wigner.json"), extra)
    print(json.dumps({"min": grid.min, "max": grid.max}))
    return EXIT_OK


def cmd_fit(args):
    cols, data = read_table(args.input)
    for c in (args.x_col, args.y_col):
        if c not in cols:
            raise ValueError(f"{args.input}: no column {c!r} (have {cols})")
    n, y = data[:, cols.index(args.x_col)], data[:, cols.index(args.y_col)]
    if args.subtract:
        y = y - args.subtract
    keep = n >= args.n_min
    if args.n_max is not None:
        keep &= n <= args.n_max
    fit = decoherence.power_law_fit(n[keep], y[keep])
    row = (args.y_col, fit.slope, fit.intercept, fit.r_squared, fit.slope_stderr)
    write_table(_out(args, "fit.csv"), provenance(args),
                ("quantity", "slope", "intercept", "r_squared", "slope_stderr"), [row])
    print(json.dumps({"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared}))
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _ion_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("ion-trap parameters")
    g.add_argument("--delta-mhz", type=float, default=4.0, help="delta/2pi in MHz")
    g.add_argument("--omega-z-mhz", type=float, default=4.0, help="omega_z/2pi in MHz")
    g.add_argument("--omega-up-mhz", type=float, default=0.3, help="Omega_up/2pi in MHz")
    g.add_argument("--delta", type=float, default=None, help="delta in rad/s (overrides MHz)")
    g.add_argument("--omega-z", type=float, default=None, help="omega_z in rad/s")
    g.add_argument("--omega-up", type=float, default=None, help="Omega_up in rad/s")
    g.add_argument("--eta", type=float, default=0.1)
    g.add_argument("--pulse-t", type=float, default=1e-6, help="pulse duration in seconds")
    g.add_argument("--laser-phase", type=float, default=0.0)
    g.add_argument("--no-B", dest="no_B", action="store_true")
    g.add_argument("--no-Uoff", dest="no_Uoff", action="store_true")
    g.add_argument("--uoff-evaluation", choices=iontrap.UOFF_EVALUATIONS, default="interval")
    return p


def _walk_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--alpha", type=float, default=0.565, help="coherent amplitude of one step")
    p.add_argument("--phi", type=float, default=walker.DEFAULT_PHI, help="coin phase (rad)")
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="ionwalk", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file; command-line flags take precedence")
    parser.add_argument("--dim", type=int, default=fock.DEFAULT_DIM, help="Fock-space dimension")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    ion_parent, walk_parent = _ion_parent(), _walk_parent()
    x_points = argparse.ArgumentParser(add_help=False)
    x_points.add_argument("--x-points", type=int, default=801)

    p = sub.add_parser("ideal", parents=[walk_parent, x_points], help="ideal Fock-space walk")
    p.add_argument("--steps", type=int, default=17)
    p.set_defaults(func=cmd_ideal)

    p = sub.add_parser("ion", parents=[ion_parent, walk_parent, x_points], help="ion-trap walk")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--oracle", action="store_true",
                   help="use the integrated Hamiltonian and log per-step fidelity to the product")
    p.set_defaults(func=cmd_ion)

    p = sub.add_parser("sweep", parents=[ion_parent, walk_parent], help="decoherence sweep over q")
    p.add_argument("--walk", choices=decoherence.WALK_KINDS, default="ideal")
    p.add_argument("--q", default="1,5,20", help="comma-separated q values; 'inf' allowed")
    p.add_argument("--n-traj", type=int, default=400)
    p.add_argument("--steps", type=int, default=17)
    p.add_argument("--fit-min", type=int, default=3)
    p.add_argument("--fit-max", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("readout", help="synthesize or invert shelving signals")
    p.add_argument("--mode", choices=("synthesize", "reconstruct", "hybrid"), required=True)
    p.add_argument("--pn", help="P_n CSV (columns n, P_n) for synthesize")
    p.add_argument("--signal", help="signal CSV (t_seconds, p_down); the carrier in hybrid mode")
    p.add_argument("--bsb", help="blue-sideband signal CSV for hybrid mode")
    p.add_argument("--channel", choices=("carrier", "blue_sideband", "both"), default="both")
    p.add_argument("--eta", type=float, default=0.2)
    p.add_argument("--omega0", type=float, default=2 * math.pi * 50e3, help="rad/s")
    p.add_argument("--n-max", type=int, default=readout.CARRIER_SPLIT)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--allow-ambiguous", action="store_true",
                   help="exit 0 even if some bins are flagged")
    p.set_defaults(func=cmd_readout)

    p = sub.add_parser("wigner", parents=[ion_parent, walk_parent], help="Wigner function grid")
    p.add_argument("--source", choices=("ideal", "ion", "vacuum", "fock"), default="ion")
    p.add_argument("--fock-n", type=int, default=1)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--extent", type=float, default=wigner.DEFAULT_EXTENT)
    p.add_argument("--points", type=int, default=wigner.DEFAULT_POINTS)
    p.add_argument("--band", type=float, default=2.0, help="lower |p| edge of the sideband band")
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("fit", help="ln-ln power-law fit of a CSV column")
    p.add_argument("--input", required=True)
    p.add_argument("--x-col", default="N")
    p.add_argument("--y-col", default="var_x")
    p.add_argument("--subtract", type=float, default=0.0,
                   help="constant removed from y before fitting (0.5 gives the zero-point-free spread)")
    p.add_argument("--n-min", type=int, default=3)
    p.add_argument("--n-max", type=int, default=None)
    p.set_defaults(func=cmd_fit)
    return parser


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use ``_`` or ``-``."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _config_tokens(parser, values):
    """argv tokens reproducing ``values`` for the options known to ``parser``."""
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    tokens, unused = [], {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            unused[key] = value
        elif action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(action.option_strings[-1])
            elif value.lower() not in ("0", "false", "no", "off"):
                raise ConfigError(f"flag {key} needs a boolean value, got {value!r}")
        else:
            tokens += [action.option_strings[-1], value]
    return tokens, unused


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    values = read_config(known.config)
    split = next((i for i, tok in enumerate(argv) if tok in SUBCOMMANDS), None)
    if split is None:
        return argv
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    glob_tokens, rest = _config_tokens(parser, {k: v for k, v in values.items() if k in GLOBAL_KEYS})
    sub_tokens, unknown = _config_tokens(subparsers.choices[argv[split]],
                                         {k: v for k, v in values.items() if k not in GLOBAL_KEYS})
    unknown.update(rest)
    if unknown:
        raise ConfigError(f"unknown config keys for '{argv[split]}': {sorted(unknown)}")
    return glob_tokens + argv[:split + 1] + sub_tokens + argv[split + 1:]


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_apply_config(parser, argv))
    except ConfigError as exc:
        print(f"ionwalk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ionwalk: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.dim < 2 or args.threads < 1:
            raise ConfigError("--dim must be >= 2 and --threads >= 1")
        return args.func(args)
    except IonWalkError as exc:
        print(f"ionwalk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, csv.Error) as exc:
        print(f"ionwalk: input error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
