"""Command-line driver.

Exit codes: 0 success, 1 validation failure, 2 runtime blow-up, 3 check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_INVALID, EXIT_BLOWUP, EXIT_CHECK = 0, 1, 2, 3

IDENTITY_TOL = 1e-11
REPRESENTATION_TOL = 0.10
WAVE_ORDER_MIN = 1.9

log = logging.getLogger("nordvlas")


def _set_threads(n: int) -> int:
    import numba

    n = max(1, int(n))
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def _load(args):
    from .io import ConfigError, load_config

    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out_dir=Path(args.out))
        cfg.validate()
    except (OSError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None
    return cfg


def _vector(text: str) -> tuple:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(parts)


# --------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    from .io import DiagnosticsWriter, format_config, write_snapshot
    from .simulation import Simulation
    from .state import CausalityError, InstabilityError

    cfg = _load(args)
    if cfg is None:
        return EXIT_INVALID
    threads = _set_threads(args.threads)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(format_config(cfg))
    sim = Simulation(cfg, n_threads=threads)
    last = None
    t0 = time.perf_counter()
    with DiagnosticsWriter(out / "diagnostics.csv") as writer:
        try:
            for level in sim.iterate():
                n = level.index
                final = n == cfg.n_steps
                if n % cfg.output_every == 0 or final:
                    writer.write(level.record)
                if cfg.snapshot_every and (n % cfg.snapshot_every == 0 or final):
                    write_snapshot(out / f"snapshot_{n:06d}.bin", level.field)
                last = level.record
        except (InstabilityError, CausalityError) as exc:
            print(f"error: {exc} (after t={last.time if last else 0.0!r})", file=sys.stderr)
            return EXIT_BLOWUP
    print(f"t_end={last.time:.6g}  steps={cfg.n_steps}  particles={len(sim.ensemble)}  "
          f"wall={time.perf_counter() - t0:.1f}s")
    print(f"max P(t)={last.P_max!r}  max Ptilde(t)={last.Ptilde_max!r}")
    drift = max(r.energy_drift_rel for r in sim.records)
    print(f"energy drift: final={last.energy_drift_rel:.3e}  max={drift:.3e}")
    print(f"diagnostics: {out / 'diagnostics.csv'}")
    return EXIT_OK


def cmd_check_identities(args) -> int:
    from .checks import identity_sweep

    t0 = time.perf_counter()
    res = identity_sweep(args.trials, args.seed)
    ok = True
    print(f"identity sweep: {args.trials} trials, seed {args.seed}")
    for name, val in res.items():
        good = val <= IDENTITY_TOL
        ok &= good
        print(f"  {name:26s} max rel residual {val:.3e}  {'ok' if good else 'FAIL'}")
    print(f"runtime {time.perf_counter() - t0:.2f}s")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_check_bab(args) -> int:
    from .checks import bab_report

    t0 = time.perf_counter()
    rep = bab_report()
    print("B_ab(R) / envelope(R) at R = 1e1, 1e2, 1e3, 1e4")
    for (a, b), r in rep.ratios.items():
        print(f"  (a, b) = ({a:g}, {b:g}): " + "  ".join(f"{v:.4f}" for v in r)
              + f"   max/first {np.max(r) / r[0]:.3f}")
    print(f"B_00(2) = {rep.spot_value!r}  (32 pi / 3, rel err {rep.spot_rel_error:.2e})")
    print(f"runtime {time.perf_counter() - t0:.2f}s")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_verify_representation(args) -> int:
    from .diagnostics import dtphi_representation
    from .simulation import Simulation
    from .state import CausalityError, InstabilityError

    cfg = _load(args)
    if cfg is None:
        return EXIT_INVALID
    threads = _set_threads(args.threads)
    ts = args.t or [0.5]
    xs = args.x or [tuple(cfg.grid.center)]
    t_max = max(ts)
    if t_max > cfg.t_end + 1e-12:
        print(f"error: t={t_max} exceeds t_end={cfg.t_end}", file=sys.stderr)
        return EXIT_INVALID
    # run only as far as the latest requested time needs
    n_run = min(cfg.n_steps, math.ceil(t_max / cfg.dt - 1e-9) + 1)
    run_cfg = dataclasses.replace(cfg, t_end=n_run * cfg.dt, history_t_max=t_max + cfg.dt)
    vertices = [(t, x) for t in ts for x in xs]
    try:
        sim = Simulation(run_cfg, n_threads=threads, cone_vertices=vertices)
        for _ in sim.iterate():
            pass
        rows = [dtphi_representation(t, x, sim.history, mh, cfg.data)
                for (t, x), mh in zip(vertices, sim.moment_histories)]
    except (InstabilityError, CausalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    ok = True
    print("t        x                      repr          grid          rel_err   "
          + "  ".join(f"Z{i:<10d}" for i in range(6)))
    for r in rows:
        good = r.rel_error <= REPRESENTATION_TOL
        ok &= good
        xs_txt = ",".join(f"{v:g}" for v in r.x)
        print(f"{r.t:<8.4g} {xs_txt:22s} {r.value_repr:+.6e} {r.value_grid:+.6e} {r.rel_error:.3e}  "
              + "  ".join(f"{z:+.3e}" for z in r.Z) + ("" if good else "  FAIL"))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_convergence(args) -> int:
    from .checks import energy_ladder, wave_ladder

    _set_threads(args.threads)
    ok = True
    wave = wave_ladder()
    print("traveling wave (cells per axis, max error):")
    for n, e in zip(wave.levels, wave.errors):
        print(f"  {n:4d}  {e:.4e}")
    print("  pairwise orders " + "  ".join(f"{o:.3f}" for o in wave.orders)
          + f"   fitted {wave.fitted_order:.3f}")
    ok &= min(wave.orders) >= WAVE_ORDER_MIN
    if args.config is not None:
        cfg = _load(args)
        if cfg is None:
            return EXIT_INVALID
        en = energy_ladder(cfg, n_threads=args.threads)
        print("energy drift (cells per axis, max relative drift):")
        for n, e in zip(en.levels, en.errors):
            print(f"  {n:4d}  {e:.4e}")
        all_zero = all(e == 0.0 for e in en.errors)
        good = all_zero or en.monotone
        print("  " + ("all zero" if all_zero else "monotone" if en.monotone else "NOT monotone"))
        ok &= good
    return EXIT_OK if ok else EXIT_CHECK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (INI)")
    common.add_argument("--threads", type=int, default=1, help="worker count (default 1)")
    common.add_argument("--out", type=Path, default=None, help="output directory override")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="nordvlas", description="Nordstrom-Vlasov particle simulator and checks")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the coupled time loop")
    p.set_defaults(func=cmd_simulate, needs_config=True)

    p = sub.add_parser("check-identities", parents=[common], help="random sweeps of the algebraic identities")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=20240601)
    p.set_defaults(func=cmd_check_identities, needs_config=False)

    p = sub.add_parser("check-bab", parents=[common], help="momentum-ball integral ladder")
    p.set_defaults(func=cmd_check_bab, needs_config=False)

    p = sub.add_parser("verify-representation", parents=[common],
                       help="rebuild dt(phi) from cone integrals and compare with the grid")
    p.add_argument("--t", type=float, nargs="+", help="vertex times (default 0.5)")
    p.add_argument("--x", type=_vector, nargs="+", help="vertex points x,y,z (default grid center)")
    p.set_defaults(func=cmd_verify_representation, needs_config=True)

    p = sub.add_parser("convergence", parents=[common],
                       help="wave-solver ladder, plus the energy ladder when --config is given")
    p.set_defaults(func=cmd_convergence, needs_config=False)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.needs_config and args.config is None:
        print(f"error: {args.command} requires --config", file=sys.stderr)
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
