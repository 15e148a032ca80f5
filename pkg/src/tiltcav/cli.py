"""Command-line interface: ``tiltcav {evolve,classify,ws,antires,sweep}``.

Exit status is 0 on success, 2 on usage or configuration errors and 1 when a
run fails. All numbers are in units of the hopping J; CSV output uses ``.``
as decimal separator regardless of locale.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import CumulantState, IntegrationError, MeanFieldState, Trajectory, simulate
from .integrator import IntegratorStats
from .model import (ConfigError, LatticeParams, PumpProfile, RunSettings, config_from_mapping,
                    dump_config, parse_toml, validate)
from .observables import classify
from .sweep import SweepGrid, SweepMismatchError, axis_values, export, run_sweep
from .wannier_stark import build_basis, find_anti_resonances, steady_state_profile

log = logging.getLogger("tiltcav")


class UsageError(Exception):
    """Bad arguments or configuration; reported with exit status 2."""


# --------------------------------------------------------------------------
# manifests


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance record written next to every file-producing run."""

    subcommand: str
    config: str
    argv: list
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def finish(self, paths) -> None:
        self.finished = _now()
        self.outputs = {str(p): _digest(p) for p in paths}

    def write(self, path) -> None:
        rec = dataclasses.asdict(self)
        rec["tool"] = "tiltcav"
        Path(path).write_text(json.dumps(rec, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# argument parsing


def _range(text: str, parts: int):
    try:
        fields_ = [p for p in text.split(":")]
        if len(fields_) != parts:
            raise ValueError
        values = [float(v) for v in fields_[:2]]
        if parts == 3:
            count = int(fields_[2])
            return values[0], values[1], count
        return tuple(values)
    except ValueError:
        shape = "lo:hi" if parts == 2 else "lo:hi:count"
        raise argparse.ArgumentTypeError(f"expected {shape}, got {text!r}") from None


def _range2(text):
    return _range(text, 2)


def _range3(text):
    return _range(text, 3)


def _float_list(text: str):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _lattice_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model (override the config file)")
    g.add_argument("--config", metavar="PATH",
                   help="TOML config, or a manifest.json from an earlier run")
    g.add_argument("--sites", "-L", type=int, help="number of cavities L (odd)")
    g.add_argument("--hopping", "-J", type=float, help="tunnelling J")
    g.add_argument("--deltaomega", "--tilt", dest="tilt", type=float, help="frequency step per site")
    g.add_argument("--chi", "--kerr", dest="kerr", type=float, help="Kerr interaction")
    g.add_argument("--kappa", "--loss", dest="loss", type=float, help="amplitude loss rate")
    g.add_argument("--j0", dest="pump_center", type=float, help="detuning origin j0")
    g.add_argument("--eta", type=float, help="pump amplitude (single-site pump)")
    g.add_argument("--pump-site", type=int, help="pumped site label (single-site pump)")


def _run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("integration and classification")
    g.add_argument("--method", choices=["meanfield", "cumulant2"])
    g.add_argument("--t-end", type=float, help="evolution time (default 12/kappa)")
    g.add_argument("--window-start", type=float, help="start of the analysis window (default 6/kappa)")
    g.add_argument("--rtol", type=float)
    g.add_argument("--atol", type=float)
    g.add_argument("--sample-dt", type=float, help="output sampling interval")
    g.add_argument("--seed-amplitude", type=float, help="rms size of a random initial coherent seed")
    g.add_argument("--seed", type=int, help="RNG seed for the initial seed")
    g.add_argument("--stationary-threshold", type=float)
    g.add_argument("--peak-fraction", type=float)
    g.add_argument("--min-periods", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tiltcav", description=__doc__.splitlines()[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog="Exit status: 0 success, 2 usage/config error, 1 run failure.")
    parser.add_argument("--version", action="version", version=f"tiltcav {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("evolve", help="integrate one trajectory and write it as CSV")
    _lattice_flags(p)
    _run_flags(p)
    p.add_argument("--snapshot-stride", type=int, help="store full states every this many samples")
    p.add_argument("-o", "--output", required=True, metavar="CSV",
                   help="trajectory CSV: time, N, n_j for every site")
    p.add_argument("--amplitudes", metavar="CSV",
                   help="amplitude CSV (default: <output stem>.amplitudes.csv)")
    p.add_argument("--no-amplitudes", action="store_true", help="do not write the amplitude CSV")
    p.add_argument("--snapshots", metavar="JSON", help="write full-state snapshots as JSON")
    p.add_argument("--manifest", metavar="JSON", help="manifest path (default: <output stem>.manifest.json)")

    p = sub.add_parser("classify", help="label a trajectory Stationary, Oscillatory or Chaotic")
    _lattice_flags(p)
    _run_flags(p)
    p.add_argument("--trajectory", metavar="CSV",
                   help="trajectory CSV from 'evolve'; without it the run is simulated inline")
    p.add_argument("--amplitudes", metavar="CSV", help="amplitude CSV (default: next to the trajectory)")
    p.add_argument("--snapshots", metavar="JSON", help="snapshots JSON (for N0_over_N of cumulant runs)")
    p.add_argument("-o", "--output", metavar="JSON", help="write the record here instead of stdout")

    p = sub.add_parser("ws", help="Wannier-Stark tables: basis matrix, steady-state profile, anti-resonances")
    _lattice_flags(p)
    what = p.add_mutually_exclusive_group()
    what.add_argument("--matrix", action="store_true", help="basis coefficients, one row per mode")
    what.add_argument("--profile", action="store_true", help="non-interacting steady-state occupations (default)")
    what.add_argument("--antires", action="store_true", help="anti-resonance tilts in --range")
    p.add_argument("--order", type=int, action="append", help="anti-resonance order (repeatable; default 0 and 1)")
    p.add_argument("--range", type=_range2, default=(0.15, 0.6), metavar="LO:HI", help="tilt range")
    p.add_argument("-o", "--output", metavar="CSV")

    p = sub.add_parser("antires", help="tilts at which mode |n| = order decouples from a single-site pump")
    p.add_argument("--order", type=int, action="append", help="Bessel order (repeatable; default 1)")
    p.add_argument("--range", type=_range2, default=(0.15, 0.6), metavar="LO:HI", help="tilt range")
    p.add_argument("--hopping", "-J", type=float, default=1.0)
    p.add_argument("-o", "--output", metavar="CSV")

    p = sub.add_parser("sweep", help="phase-diagram scan over (chi, deltaomega)")
    _lattice_flags(p)
    _run_flags(p)
    p.add_argument("--chi-range", type=_range3, metavar="LO:HI:COUNT")
    p.add_argument("--chi-values", type=_float_list, metavar="V1,V2,...")
    p.add_argument("--deltaomega-range", type=_range3, metavar="LO:HI:COUNT")
    p.add_argument("--deltaomega-values", type=_float_list, metavar="V1,V2,...")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--checkpoint", metavar="JSON", help="checkpoint file updated after every cell")
    p.add_argument("--resume", action="store_true", help="skip cells already in the checkpoint")
    p.add_argument("-o", "--output-dir", required=True, metavar="DIR")
    return parser


# --------------------------------------------------------------------------
# configuration


_RUN_FLAGS = ["method", "t_end", "window_start", "rtol", "atol", "sample_dt", "seed_amplitude", "seed",
              "stationary_threshold", "peak_fraction", "min_periods", "snapshot_stride"]


def _read_document(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    if str(path).endswith(".json"):
        try:
            rec = json.loads(text)
            text = rec["config"]
        except (ValueError, KeyError, TypeError):
            raise UsageError(f"{path}: not a tiltcav manifest") from None
    return parse_toml(text)


def _resolve(args) -> tuple[LatticeParams, RunSettings, dict]:
    doc = _read_document(args.config) if getattr(args, "config", None) else {}
    sweep_section = doc.pop("sweep", {}) if isinstance(doc, dict) else {}
    params, settings = config_from_mapping(doc)

    changes = {k: getattr(args, k) for k in ("sites", "hopping", "tilt", "kerr", "loss", "pump_center")
               if getattr(args, k, None) is not None}
    if getattr(args, "eta", None) is not None or getattr(args, "pump_site", None) is not None:
        current = params.pump.amplitudes
        amp = args.eta if args.eta is not None else (current[0][1] if len(current) == 1 else 1.0)
        site = args.pump_site if args.pump_site is not None else (current[0][0] if len(current) == 1 else 0)
        changes["pump"] = PumpProfile.single_site(amp, site)
    params = params.with_(**changes)
    problems = validate(params)
    if problems:
        raise UsageError("invalid parameters: " + "; ".join(problems))

    run_changes = {k: getattr(args, k) for k in _RUN_FLAGS if getattr(args, k, None) is not None}
    settings = dataclasses.replace(settings, **run_changes)
    if not float(params.pump_center).is_integer():
        print(f"warning: j0 = {params.pump_center} is not an integer; the Wannier-Stark mode "
              "selection assumes an integer detuning origin", file=sys.stderr)
    return params, settings, sweep_section


# --------------------------------------------------------------------------
# CSV helpers


def _num(x: float) -> str:
    return repr(float(x))


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _site_header(params: LatticeParams, prefix: str) -> list[str]:
    return [f"{prefix}{int(j)}" for j in params.site_labels]


def write_trajectory_csv(path, traj: Trajectory) -> None:
    header = ["time", "N"] + _site_header(traj.params, "n_")
    rows = ([_num(t), _num(n)] + [_num(v) for v in occ]
            for t, n, occ in zip(traj.times, traj.total, traj.occupations))
    _write_csv(path, header, rows)


def write_amplitude_csv(path, traj: Trajectory) -> None:
    header = ["time"] + _site_header(traj.params, "re_") + _site_header(traj.params, "im_")
    rows = ([_num(t)] + [_num(v) for v in a.real] + [_num(v) for v in a.imag]
            for t, a in zip(traj.times, traj.alpha))
    _write_csv(path, header, rows)


def _complex_list(a) -> dict:
    a = np.asarray(a)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def _from_complex(rec) -> np.ndarray:
    return np.asarray(rec["re"], dtype=float) + 1j * np.asarray(rec["im"], dtype=float)


def snapshot_records(traj: Trajectory) -> list[dict]:
    out = []
    for s in traj.snapshots:
        rec = {"time": float(s.time), "method": traj.method, "alpha": _complex_list(s.alpha)}
        if isinstance(s, CumulantState):
            rec["normal"] = _complex_list(s.normal)
            rec["anomalous"] = _complex_list(s.anomalous)
        out.append(rec)
    return out


def state_from_record(rec: dict):
    alpha = _from_complex(rec["alpha"])
    if rec.get("method") == "cumulant2":
        return CumulantState(alpha, _from_complex(rec["normal"]), _from_complex(rec["anomalous"]), rec["time"])
    return MeanFieldState(alpha, rec["time"])


def _read_table(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    if len(rows) < 2:
        raise UsageError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError:
        raise UsageError(f"{path}: non-numeric entry") from None
    return rows[0], data


def read_trajectory(params: LatticeParams, path, amplitudes=None, snapshots=None) -> Trajectory:
    """Rebuild a :class:`Trajectory` from the CSV (and optional JSON) files of ``evolve``."""
    header, data = _read_table(path)
    expected = ["time", "N"] + _site_header(params, "n_")
    if header != expected:
        raise UsageError(f"{path}: columns do not match a lattice of {params.sites} sites")
    times, total, occ = data[:, 0], data[:, 1], data[:, 2:]
    L = params.sites
    if amplitudes is not None:
        a_header, a_data = _read_table(amplitudes)
        if a_data.shape != (times.size, 1 + 2 * L) or not np.array_equal(a_data[:, 0], times):
            raise UsageError(f"{amplitudes}: does not match {path}")
        alpha = a_data[:, 1:1 + L] + 1j * a_data[:, 1 + L:]
    else:
        alpha = np.full((times.size, L), np.nan, dtype=complex)
    snaps, method = [], "meanfield"
    if snapshots is not None:
        try:
            recs = json.loads(Path(snapshots).read_text(encoding="utf-8"))
            snaps = [state_from_record(r) for r in recs]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read snapshots {snapshots}: {exc}") from None
        if recs:
            method = recs[-1].get("method", "meanfield")
    edge = occ[:, :3].sum(axis=1) + occ[:, -3:].sum(axis=1)
    edge_fraction = float(np.max(np.where(total > 0, edge / np.where(total > 0, total, 1), 0)))
    return Trajectory(params, method, times, total, occ, alpha, snaps, IntegratorStats(), edge_fraction)


# --------------------------------------------------------------------------
# subcommands


def _stem_path(output: str, suffix: str) -> Path:
    p = Path(output)
    return p.with_name(p.stem + suffix)


def cmd_evolve(args, argv) -> int:
    params, settings, _ = _resolve(args)
    settings = settings.resolved(params)
    manifest = RunManifest("evolve", dump_config(params, settings), list(argv))
    t0 = time.perf_counter()
    traj = simulate(params, settings)
    outputs = [Path(args.output)]
    write_trajectory_csv(args.output, traj)
    if not args.no_amplitudes:
        amp = Path(args.amplitudes) if args.amplitudes else _stem_path(args.output, ".amplitudes.csv")
        write_amplitude_csv(amp, traj)
        outputs.append(amp)
    if args.snapshots:
        Path(args.snapshots).write_text(json.dumps(snapshot_records(traj)) + "\n", encoding="utf-8")
        outputs.append(Path(args.snapshots))
    manifest.extra = {"method": traj.method, "steps": traj.stats.accepted, "rejected": traj.stats.rejected,
                      "boundary_contaminated": traj.boundary_contaminated,
                      "wall_time": round(time.perf_counter() - t0, 3)}
    manifest.finish(outputs)
    manifest.write(args.manifest or _stem_path(args.output, ".manifest.json"))
    if traj.boundary_contaminated:
        print(f"warning: {traj.edge_fraction:.2%} of the photons reached the lattice edge", file=sys.stderr)
    return 0


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def cmd_classify(args, argv) -> int:
    if args.trajectory and not args.config:
        sibling = _stem_path(args.trajectory, ".manifest.json")
        if sibling.exists():
            args.config = str(sibling)
    params, settings, _ = _resolve(args)
    settings = settings.resolved(params)
    if args.trajectory:
        amp = args.amplitudes
        if amp is None:
            guess = _stem_path(args.trajectory, ".amplitudes.csv")
            amp = guess if guess.exists() else None
        if amp is None:
            print("warning: no amplitude CSV; fidelity columns are undefined", file=sys.stderr)
        traj = read_trajectory(params, args.trajectory, amp, args.snapshots)
    else:
        traj = simulate(params, settings)
    with np.errstate(invalid="ignore"):
        result = classify(traj, build_basis(params), t_start=settings.window_start,
                          stationary_threshold=settings.stationary_threshold,
                          peak_fraction=settings.peak_fraction, min_periods=settings.min_periods)
    rec = result.to_record()
    keys = ["label", "delta_n", "avg_max_fidelity", "theta", "period", "N0_over_N", "peak_fraction", "diagnostics"]
    text = json.dumps({k: _json_safe(rec[k]) for k in keys}, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _antires_rows(orders, lo, hi, hopping):
    rows = []
    for k in orders:
        for dw in find_anti_resonances(lo, hi, k, hopping=hopping):
            rows.append([k, _num(dw), _num(2.0 * hopping / dw)])
    return rows


def cmd_ws(args, argv) -> int:
    params, _, _ = _resolve(args)
    if args.antires:
        rows = _antires_rows(args.order or [0, 1], *args.range, params.hopping)
        _write_csv(args.output, ["order", "deltaomega", "gamma"], rows)
    elif args.matrix:
        basis = build_basis(params)
        header = ["n"] + [f"j_{int(j)}" for j in basis.sites]
        rows = ([int(n)] + [_num(v) for v in row] for n, row in zip(basis.mode_range, basis.coefficients))
        _write_csv(args.output, header, rows)
    else:
        basis = build_basis(params)
        prof = steady_state_profile(params, basis)
        rows = ([int(n), _num(v)] for n, v in zip(basis.mode_range, prof))
        _write_csv(args.output, ["n", "occupation"], rows)
    return 0


def cmd_antires(args, argv) -> int:
    lo, hi = args.range
    if not (0 < lo < hi):
        raise UsageError(f"--range needs 0 < lo < hi, got {lo}:{hi}")
    rows = _antires_rows(args.order or [1], lo, hi, args.hopping)
    _write_csv(args.output, ["order", "deltaomega", "gamma"], rows)
    return 0


def _axis_from(values, rng, section, key, default):
    if values is not None and rng is not None:
        raise UsageError(f"give either --{key}-values or --{key}-range")
    if values is not None:
        return tuple(values)
    if rng is not None:
        return rng
    if f"{key}_values" in section:
        return tuple(float(v) for v in section[f"{key}_values"])
    if key in section:
        lo, hi, count = section[key]
        return float(lo), float(hi), int(count)
    return default


def cmd_sweep(args, argv) -> int:
    params, settings, section = _resolve(args)
    unknown = set(section) - {"chi", "chi_values", "deltaomega", "deltaomega_values", "workers"}
    if unknown:
        raise UsageError(f"[sweep]: unknown keys {sorted(unknown)}")
    try:
        chi = _axis_from(args.chi_values, args.chi_range, section, "chi", (0.0, 0.15, 31))
        dw = _axis_from(args.deltaomega_values, args.deltaomega_range, section, "deltaomega", (0.15, 0.6, 31))

        def expand(axis):
            return axis_values(*axis) if len(axis) == 3 and isinstance(axis[2], int) else axis

        grid = SweepGrid(expand(chi), expand(dw), params, settings)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid sweep grid: {exc}") from None
    workers = args.workers if args.workers is not None else int(section.get("workers", 1))
    if workers < 1:
        raise UsageError("--workers must be >= 1")

    manifest = RunManifest("sweep", dump_config(params, settings), list(argv))
    start = time.perf_counter()

    def progress(cell):
        print(f"chi={cell.chi:.6g} deltaomega={cell.tilt:.6g}: {cell.label}", file=sys.stderr)

    results = run_sweep(grid, workers, checkpoint=args.checkpoint, resume=args.resume, progress=progress)
    wall = time.perf_counter() - start
    outdir = Path(args.output_dir)
    summary = export(results, outdir, grid, wall_time=round(wall, 3))
    manifest.extra = summary
    manifest.finish([outdir / "results.csv", outdir / "timings.csv", outdir / "failures.log"])
    manifest.write(outdir / "manifest.json")
    failed = summary["failed"]
    if failed:
        print(f"{failed} of {len(results)} cells failed; see failures.log", file=sys.stderr)
    return 0


_COMMANDS = {"evolve": cmd_evolve, "classify": cmd_classify, "ws": cmd_ws,
             "antires": cmd_antires, "sweep": cmd_sweep}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args, argv)
    except (UsageError, ConfigError, SweepMismatchError) as exc:
        print(f"tiltcav {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, OSError, ArithmeticError, ValueError) as exc:
        print(f"tiltcav {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
