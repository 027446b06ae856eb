"""Command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 key provisioning / size rule,
4 overflow abort, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from . import config as cfgmod
from .errors import (ConfigError, EquivalenceError, GridOverflowError, KeyGenerationError, ProvisioningError,
                     SynthesisError)
from .keyring import audit, export_dealer_keys, export_parties, import_parties
from .sim import (Trajectory, bound_check, equivalence_audit, read_trajectory_csv, run, summary, trajectory_csv,
                  write_trace, write_trajectory)
from .synthesis import required_paillier_bound, stability_bounds

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVISIONING = 3
EXIT_OVERFLOW = 4
EXIT_VERIFY = 5

log = logging.getLogger("duallayer")


def _overrides(args) -> list[str]:
    out = list(args.set or [])
    if args.seed is not None:
        out.append(f"run.seed={args.seed}")
    if args.horizon is not None:
        out.append(f"run.horizon={args.horizon}")
    if getattr(args, "timing", False):
        out.append("run.timing=true")
    return out


def _effective(args) -> dict:
    base = cfgmod.load_dict(args.config) if args.config else cfgmod.example_dict()
    return cfgmod.apply_overrides(base, _overrides(args))


def _prepare(args):
    """Parse the effective config and write its snapshot into the output directory."""
    data = _effective(args)
    cfg = cfgmod.config_from_dict(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.save_config(cfg, out / "effective-config.toml")
    return cfg, out


def _keyring(args, cfg):
    if args.keys:
        paths = sorted(Path(args.keys).glob("*.json"))
        if not paths:
            raise ConfigError(f"no party key files in {args.keys}")
        return import_parties(paths)
    return cfg.provision()


def cmd_keygen(args) -> int:
    cfg, out = _prepare(args)
    bound = required_paillier_bound(cfg.gains, cfg.params.n)
    print(f"required Paillier modulus > {bound} (~2^{math.log2(bound):.2f})")
    ring = cfg.provision()
    dealer = export_dealer_keys(ring, out)
    parties = export_parties(ring, out / "parties")
    print(f"wrote {len(dealer)} key files and {len(parties)} party files to {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg, out = _prepare(args)
    b = stability_bounds(cfg.plant, cfg.gains, cfg.params, strict=False)
    data = cfgmod.config_to_dict(cfg)
    data["bounds"] = {
        "M": b.M, "rho": b.rho, "sigma": b.sigma, "beta": b.beta, "R_o": b.R_o, "d": b.d,
        "certified_at": b.certified_at, "residual": b.residual(cfg.params.m),
        "required_paillier_bound": str(required_paillier_bound(cfg.gains, cfg.params.n)),
    }
    (out / "synthesis.toml").write_text(cfgmod.dumps(data))
    print(json.dumps(data["bounds"], indent=2))
    if b.R_o <= 0:
        print(f"warning: word length n={cfg.params.n} leaves no admissible initial region", file=sys.stderr)
    return EXIT_OK


def _write_run(traj: Trajectory, out: Path) -> dict:
    write_trajectory(traj, out / "trajectory.csv")
    write_trace(traj, out / "trace.txt")
    s = summary(traj)
    (out / "summary.json").write_text(json.dumps(s, indent=2, sort_keys=True) + "\n")
    return s


def cmd_run(args) -> int:
    cfg, out = _prepare(args)
    ring = _keyring(args, cfg)
    try:
        traj = run(cfg, keyring=ring)
    except (GridOverflowError, EquivalenceError) as exc:
        partial = getattr(exc, "trajectory", None)
        if partial is not None:
            _write_run(partial, out)
        raise
    s = _write_run(traj, out)
    print(f"steps: {s['steps']}")
    if s["steps"]:
        print(f"final ||x||_inf: {s['final_x_inf']:.6g}")
    print(f"residual bound: {s['residual_bound']:.6g}")
    print(f"bound satisfied at every step: {s['bound_ok']} (max ratio {s['bound_max_ratio']:.4g})")
    if s["equivalence_ok"] is not None:
        print(f"encrypted/plain identical steps: {s['equivalent_steps']}/{s['steps']}")
    for w in s["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg, out = _prepare(args)
    failures = []
    ring = _keyring(args, cfg)
    report = audit(ring)
    for rule, party, signal, i in sorted(report.violation_set(), key=str):
        failures.append(f"access rule '{rule}': {party} can read {signal.value}_{i}")
    try:
        traj = run(cfg, keyring=ring, abort_on_mismatch=False)
    except GridOverflowError as exc:
        traj = getattr(exc, "trajectory", None)
        failures.append(f"overflow: {exc}")
    if traj is not None:
        eq = equivalence_audit(traj)
        if not eq.ok:
            failures.append(f"encrypted loop differs from plaintext shadow at steps {eq.mismatches}")
        bc = bound_check(traj)
        if not bc.ok:
            failures.append(f"state bound violated at steps {bc.failures}")
        previous = out / "trajectory.csv"
        if args.compare and previous.exists() and previous.read_text() != trajectory_csv(traj):
            failures.append(f"{previous} does not match a fresh run of the effective config")
        print(f"equivalence: {eq.identical}/{eq.total} steps identical")
        print(f"bound: {'ok' if bc.ok else 'violated'} (max ratio {bc.max_ratio:.4g})")
    print(f"key access: {'ok' if report.ok else f'{len(report.violations)} violation(s)'}")
    for f in failures:
        print(f"FAIL {f}", file=sys.stderr)
    return EXIT_VERIFY if failures else EXIT_OK


def cmd_audit(args) -> int:
    cfg, _ = _prepare(args)
    report = audit(_keyring(args, cfg))
    print(report.render())
    return EXIT_OK if report.ok else EXIT_VERIFY


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_export_plot(args) -> int:
    src = Path(args.trajectory) if args.trajectory else Path(args.out) / "trajectory.csv"
    if not src.exists():
        raise ConfigError(f"no trajectory at {src}; run first or pass --trajectory")
    with open(src, newline="") as fh:
        header = next(csv.reader(fh), [])
    rows = read_trajectory_csv(src)
    xcols = [c for c in header if c.startswith("x_")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def xs(r):
        from fractions import Fraction
        return [float(Fraction(r[c])) for c in xcols]

    _write_rows(out / "state_norms.csv", ["k", "norm_x", "norm_x_inf", "norm_xc"],
                [[r["k"], repr(math.sqrt(sum(v * v for v in xs(r)))), repr(max(map(abs, xs(r)))), r["norm_xc"]]
                 for r in rows])
    _write_rows(out / "residual_zoom.csv", ["k"] + xcols,
                [[r["k"]] + [r[c] for c in xcols] for r in rows if int(r["k"]) >= args.zoom_from])
    _write_rows(out / "bound_curve.csv", ["k", "bound", "norm_xc"], [[r["k"], r["bound"], r["norm_xc"]] for r in rows])
    print(f"wrote state_norms.csv, residual_zoom.csv, bound_curve.csv to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run config (default: bundled two-entity example)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value, e.g. grid.m=9")
    common.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
    common.add_argument("--horizon", type=int, help="shorthand for --set run.horizon=K")
    common.add_argument("--keys", help="directory of party key files to use instead of fresh provisioning")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="duallayer", description="Double-layer encrypted networked control toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("keygen", parents=[common], help="provision keys and write one file per keypair and per party")
    sub.add_parser("synth", parents=[common], help="compute stability bounds and write them with the gains")
    r = sub.add_parser("run", parents=[common], help="simulate the encrypted closed loop")
    r.add_argument("--timing", action="store_true", help="record per-phase wall-clock timings")
    v = sub.add_parser("verify", parents=[common], help="equivalence, bound and key-access checks")
    v.add_argument("--compare", action="store_true", help="also compare against trajectory.csv in --out")
    sub.add_parser("audit", parents=[common], help="key-access audit of the keyring")
    e = sub.add_parser("export-plot", parents=[common], help="plot-ready data files from a trajectory")
    e.add_argument("--trajectory", help="trajectory CSV (default: <out>/trajectory.csv)")
    e.add_argument("--zoom-from", type=int, default=40, help="first step of the residual zoom (default: 40)")
    return p


COMMANDS = {
    "keygen": cmd_keygen, "synth": cmd_synth, "run": cmd_run, "verify": cmd_verify,
    "audit": cmd_audit, "export-plot": cmd_export_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProvisioningError, KeyGenerationError) as exc:
        print(f"provisioning error: {exc}", file=sys.stderr)
        return EXIT_PROVISIONING
    except GridOverflowError as exc:
        print(f"overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except EquivalenceError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except SynthesisError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
