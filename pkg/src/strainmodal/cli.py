"""``strainmodal`` command line.

Exit codes: 0 success, 2 configuration/usage error, 3 simulation error,
4 identification or fit degeneracy.  Set ``STRAINMODAL_LOG`` (e.g. ``INFO``)
for progress messages on standard error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ParseError, StrainModalError
from .pipeline import compare_sets, fit_shapes, identify
from .schemas import (
    PipelineConfig,
    load_config,
    mode_to_dict,
    read_json,
    read_modes,
    scenario_from_dict,
    scenario_to_dict,
    write_json,
    write_modes,
)
from .signal import AccelRecord, StrainRecord, load_record, save_record
from .sim import default_scenario, simulate
from .ssi import ModalEstimate

logger = logging.getLogger("strainmodal")

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_DEGENERATE = 0, 2, 3, 4


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_samples_csv(path: Path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def cmd_simulate(args) -> int:
    scenario = scenario_from_dict(read_json(args.config)) if args.config else default_scenario()
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    out = _out_dir(args.out)
    result = simulate(scenario)
    save_record(result.strain, out / "strain.smr")
    files = ["strain.smr"]
    if result.accel is not None:
        save_record(result.accel, out / "accel.smr")
        files.append("accel.smr")
    x = result.strain.positions
    xa = result.accel.positions if result.accel is not None else None
    modes = []
    for m in result.modes:
        est = ModalEstimate(m.frequency_hz, m.damping_ratio, m.sms(x), 0)
        dms = {"truth": {"positions_m": x, "values": m.dms(x)}}
        if xa is not None:
            dms["truth_accel"] = {"positions_m": xa, "values": m.dms(xa)}
        modes.append(mode_to_dict(est, x, "SMS", beta=m.beta, shape_model=m.model.to_dict(), dms=dms))
    write_modes(out / "truth.json", modes, {"source": "simulate", "scenario": scenario_to_dict(scenario)})
    files.append("truth.json")
    logger.info("wrote %s", ", ".join(files))
    return EXIT_OK


def cmd_identify(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    record_path = args.record or config.io.get("record")
    if not record_path:
        raise _ConfigError("no record given (--record or io.record in config)")
    kind = AccelRecord if args.kind == "accel" else StrainRecord
    record = load_record(record_path, kind=kind)
    result = identify(record, config)
    out = _out_dir(args.out or config.io.get("output_dir", "."))
    shape_kind = "DMS" if args.kind == "accel" else "SMS"
    modes = [mode_to_dict(m, record.positions, shape_kind) for m in result.modes]
    meta = {"source": "identify", "record": Path(record_path).name,
            "n_requested": config.n_modes, "config": config.to_dict(),
            "failed_orders": {str(k): v for k, v in result.diagram.failures.items()}}
    if result.error is not None:
        meta["error"] = str(result.error)
    write_modes(out / "modes.json", modes, meta)
    result.diagram.to_csv(out / "stabilization.csv")
    if result.error is not None:
        print(f"strainmodal identify: {result.error}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_fit_shapes(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    if config.layout is None:
        raise _ConfigError("config has no 'layout'; fit-shapes needs the span geometry")
    entries, meta = read_modes(args.modes or config.io.get("modes", ""))
    out = _out_dir(args.out or config.io.get("output_dir", "."))
    fitted = fit_shapes(entries, config)
    for k, mode in enumerate(fitted, start=1):
        if "shape_model" in mode:
            write_json(out / f"mode{k}_shape_model.json", mode["shape_model"])
            _write_samples_csv(out / f"mode{k}_sms.csv", ["position_m", "measured", "fitted"],
                               [mode["positions_m"],
                                np.real(np.asarray(mode["shape_re"])),
                                mode["sms_fit"]["values"]])
        for route, samples in mode["dms"].items():
            _write_samples_csv(out / f"mode{k}_dms_{route}.csv", ["position_m", "dms"],
                               [samples["positions_m"], samples["values"]])
        if mode["fit_status"] != "ok":
            print(f"strainmodal fit-shapes: mode {k}: {mode['errors'].get('physics')}", file=sys.stderr)
    write_modes(out / "shapes.json", fitted,
                {"source": "fit-shapes", "modes_meta": meta, "config": config.to_dict()})
    n_ok = sum(m["fit_status"] == "ok" for m in fitted)
    return EXIT_OK if n_ok >= 1 else EXIT_DEGENERATE


def cmd_compare(args) -> int:
    set_a, _ = read_modes(args.set_a)
    set_b, _ = read_modes(args.set_b)
    result = compare_sets(set_a, set_b)
    out = _out_dir(args.out)
    write_json(out / "comparison.json", result.to_dict())
    lines = [result.comparison.table(args.label_a, args.label_b)]
    for route, value in result.route_macs.items():
        lines.append(f"mean MAC ({route}): {value:.4f}")
    for name, value in result.improvements.items():
        lines.append(f"improvement {name.replace('_', ' ')}: {value:+.1f} %")
    text = "\n".join(lines) + "\n"
    (out / "comparison.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


class _ConfigError(StrainModalError):
    exit_code = EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strainmodal",
        description="Modal identification from distributed strain records.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic strain/accel record and ground truth")
    p.add_argument("--config", help="scenario JSON (default: built-in 3-span scenario)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="SSI with stabilization-based mode selection")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--record", help="record file (.csv or binary)")
    p.add_argument("--kind", choices=("strain", "accel"), default="strain")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="accepted for interface symmetry; identification is deterministic")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("fit-shapes", help="physics-guided fit plus baseline integrations")
    p.add_argument("--config", help="pipeline config JSON (needs 'layout')")
    p.add_argument("--modes", help="modes JSON from identify")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_fit_shapes)

    p = sub.add_parser("compare", help="pair two mode sets and report MAC/MAD")
    p.add_argument("set_a", help="modes JSON (e.g. fit-shapes output)")
    p.add_argument("set_b", help="modes JSON (e.g. ground truth or accelerometer modes)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--label-a", default="a")
    p.add_argument("--label-b", default="b")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("STRAINMODAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"strainmodal {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StrainModalError as exc:
        print(f"strainmodal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
