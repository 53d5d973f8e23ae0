"""Command-line front end for the detection pipeline.

Subcommands cover the pipeline stages (ingest, detect-sts, make-tiles,
dark-scan), the scenario generator (synth), and a self-checking end-to-end
run (e2e). Thresholds come from built-in defaults, overridden by a config
file ([darksts] section), overridden again by flags; the effective values
are echoed on stdout and embedded in every GeoJSON report.

Exit codes: 0 success, 1 validation or config error (with a machine-readable
"error: <Kind>: <message>" line on stderr), 2 e2e truth mismatch.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .dark import AuditParams, dark_report_geojson, load_detections, scan
from .errors import ConfigInvalid, DarkStsError
from .ingest import (
    FixTable,
    build_tracks,
    fixes_from_nmea,
    load_position_table,
    load_registry,
    write_position_csv,
)
from .scenes import build_manifest, load_scenes, write_tiles_csv
from .sts import StsParams, detect_sts, load_sts_csv, sts_geojson, write_sts_csv
from .synth import SynthConfig, export_scenario, generate_scenario, load_truth
from .timestamps import format_utc

log = logging.getLogger("darksts")

_SECTION = "darksts"
_FIELD_TYPES = {"int": int, "float": float}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable threshold, with the documented defaults."""

    max_distance_m: float = 500.0
    min_duration_s: int = 7_200
    max_sog_kn: float = 1.0
    resample_step_s: int = 300
    max_gap_s: int = 1_800
    match_window_s: int = 7_200
    tile_buffer_m: float = 500.0
    cloud_limit: float = 0.7
    audit_radius_m: float = 500.0
    audit_window_s: int = 43_200
    min_identities: int = 2

    def __post_init__(self):
        # parameter bundles validate themselves; the xref knobs are local
        self.sts_params()
        self.audit_params()
        if self.match_window_s <= 0 or self.tile_buffer_m <= 0:
            raise ConfigInvalid("match window and tile buffer must be positive")
        if not 0.0 <= self.cloud_limit <= 1.0:
            raise ConfigInvalid("cloud_limit must lie in [0, 1]")

    def sts_params(self) -> StsParams:
        return StsParams(max_distance=self.max_distance_m,
                         min_duration=self.min_duration_s,
                         max_sog=self.max_sog_kn,
                         resample_step=self.resample_step_s,
                         max_gap=self.max_gap_s)

    def audit_params(self) -> AuditParams:
        return AuditParams(radius=self.audit_radius_m,
                           window=self.audit_window_s,
                           min_identities=self.min_identities)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name)
                for f in dataclasses.fields(self)}


def _read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config file {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigInvalid(f"config file {path}: {exc}") from None
    if not parser.has_section(_SECTION):
        raise ConfigInvalid(f"config file {path}: missing [{_SECTION}] section")
    types = {f.name: _FIELD_TYPES[f.type]
             for f in dataclasses.fields(RunConfig)}
    values = {}
    for key, raw in parser.items(_SECTION):
        if key not in types:
            raise ConfigInvalid(f"config file {path}: unknown key {key!r}")
        try:
            values[key] = types[key](raw)
        except ValueError:
            raise ConfigInvalid(
                f"config file {path}: bad value for {key}: {raw!r}") from None
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config))
    for f in dataclasses.fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    hours = getattr(args, "window_hours", None)
    if hours is not None:
        values["audit_window_s"] = int(round(hours * 3600.0))
    return RunConfig(**values)


def _echo(cfg: RunConfig) -> None:
    print("config: " + json.dumps(cfg.as_dict()))


def _write_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, indent=2)
        handle.write("\n")


def _load_tracks(positions_path, registry_path):
    table = load_position_table(positions_path)
    registry = load_registry(registry_path) if registry_path else []
    return table, build_tracks(table, registry)


# stage helpers shared between the individual subcommands and e2e

def _stage_detect(tracks, cfg: RunConfig, workers: int, out_dir):
    events = detect_sts(tracks, cfg.sts_params(), workers=workers)
    csv_path = os.path.join(out_dir, "sts_events.csv")
    geo_path = os.path.join(out_dir, "sts_events.geojson")
    write_sts_csv(events, csv_path)
    report = sts_geojson(events, cfg.sts_params())
    report["run_config"] = cfg.as_dict()
    _write_json(report, geo_path)
    return events, [csv_path, geo_path]


def _stage_tiles(tracks, scenes, events, cfg: RunConfig, out_dir):
    tiles = build_manifest(scenes, tracks, events,
                           buffer_m=cfg.tile_buffer_m,
                           cloud_limit=cfg.cloud_limit,
                           max_delta=cfg.match_window_s)
    path = os.path.join(out_dir, "tiles_manifest.csv")
    write_tiles_csv(tiles, path)
    return tiles, [path]


def _stage_dark(detections, tracks, cfg: RunConfig, workers: int, out_dir):
    report = scan(detections, tracks, cfg.audit_params(), workers=workers)
    path = os.path.join(out_dir, "dark_report.geojson")
    obj = dark_report_geojson(report)
    obj["run_config"] = cfg.as_dict()
    _write_json(obj, path)
    return report, [path]


def _cmd_ingest(args, cfg: RunConfig) -> int:
    _echo(cfg)
    tables = []
    rejected = 0
    if args.nmea:
        with open(args.nmea, encoding="utf-8") as handle:
            table, counters = fixes_from_nmea(handle)
        tables.append(table)
        rejected += table.rejected_rows
        print(f"nmea: decoded={counters.decoded}"
              f" checksum_errors={counters.checksum_errors}"
              f" unsupported={counters.unsupported}"
              f" truncated={counters.truncated}"
              f" pending_fragments={counters.pending_fragments}")
    if args.positions:
        table = load_position_table(args.positions)
        tables.append(table)
        rejected += table.rejected_rows
    if len(tables) == 1:
        merged = tables[0]
    else:
        merged = FixTable.from_fixes(list(tables[0]) + list(tables[1]),
                                     rejected_rows=rejected)
    registry = load_registry(args.registry) if args.registry else []
    tracks = build_tracks(merged, registry)
    for track in tracks:
        if len(track.t):
            log.info("track %s: %d fixes, %s .. %s", track.vessel.vessel_id,
                     len(track.t), format_utc(int(track.t[0])),
                     format_utc(int(track.t[-1])))
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "positions.csv")
    write_position_csv(merged, out_path)
    print(f"fixes: {len(merged)}")
    print(f"rejected_rows: {rejected}")
    print(f"vessels: {len(merged.vessel_ids)}")
    print(f"tracks: {len(tracks)}")
    print(f"wrote: {out_path}")
    return 0


def _cmd_detect_sts(args, cfg: RunConfig) -> int:
    _echo(cfg)
    _, tracks = _load_tracks(args.positions, args.registry)
    os.makedirs(args.out, exist_ok=True)
    events, paths = _stage_detect(tracks, cfg, args.workers, args.out)
    print(f"events: {len(events)}")
    for path in paths:
        print(f"wrote: {path}")
    return 0


def _cmd_make_tiles(args, cfg: RunConfig) -> int:
    _echo(cfg)
    _, tracks = _load_tracks(args.positions, args.registry)
    scenes = load_scenes(args.scenes)
    events = load_sts_csv(args.events) if args.events else []
    os.makedirs(args.out, exist_ok=True)
    tiles, paths = _stage_tiles(tracks, scenes, events, cfg, args.out)
    census = Counter(tile.label for tile in tiles)
    print(f"tiles: {len(tiles)}")
    print("labels: " + json.dumps(dict(sorted(census.items()))))
    for path in paths:
        print(f"wrote: {path}")
    return 0


def _cmd_dark_scan(args, cfg: RunConfig) -> int:
    _echo(cfg)
    _, tracks = _load_tracks(args.positions, args.registry)
    scenes = load_scenes(args.scenes)
    detections = load_detections(args.detections, scenes)
    os.makedirs(args.out, exist_ok=True)
    report, paths = _stage_dark(detections, tracks, cfg, args.workers,
                                args.out)
    print(f"detections: {report.total_detections}")
    print(f"sts_detections: {report.sts_detections}")
    print(f"dark: {report.dark_count}")
    for note in report.notes:
        print(f"note: {note}")
    for path in paths:
        print(f"wrote: {path}")
    return 0


def _synth_config(args, cfg: RunConfig) -> SynthConfig:
    return SynthConfig(n_vessels=args.n_vessels,
                       duration=int(round(args.duration_h * 3600.0)),
                       n_sts=args.n_sts,
                       dark_fraction=args.dark_fraction,
                       fix_interval=args.fix_interval_s,
                       sts=cfg.sts_params(),
                       audit=cfg.audit_params())


def _cmd_synth(args, cfg: RunConfig) -> int:
    _echo(cfg)
    scenario = generate_scenario(args.seed, _synth_config(args, cfg))
    paths = export_scenario(scenario, args.out)
    dark = sum(t.is_dark for t in scenario.truth)
    print(f"vessels: {len(scenario.registry)}")
    print(f"fixes: {len(scenario.fixes)}")
    print(f"planted: {len(scenario.truth)} (dark {dark})")
    for name in ("positions", "registry", "scenes", "detections", "truth"):
        print(f"wrote: {paths[name]}")
    return 0


def _cmd_e2e(args, cfg: RunConfig) -> int:
    _echo(cfg)
    scenario = generate_scenario(args.seed, _synth_config(args, cfg))
    paths = export_scenario(scenario, os.path.join(args.out, "scenario"))
    planted_dark = sum(t.is_dark for t in scenario.truth)
    print(f"planted: {len(scenario.truth)} (dark {planted_dark})")

    # every stage consumes the exported files, exercising the loaders
    _, tracks = _load_tracks(paths["positions"], paths["registry"])
    events, _ = _stage_detect(tracks, cfg, args.workers, args.out)
    print(f"events: {len(events)}")
    scenes = load_scenes(paths["scenes"])
    tiles, _ = _stage_tiles(tracks, scenes, events, cfg, args.out)
    print(f"tiles: {len(tiles)}")
    detections = load_detections(paths["detections"], scenes)
    report, _ = _stage_dark(detections, tracks, cfg, args.workers, args.out)
    print(f"dark: {report.dark_count}")

    truth = load_truth(paths["truth"])
    failures = []
    by_pair = {(t.vessel_a, t.vessel_b): t for t in truth}
    visible = {pair for pair, t in by_pair.items() if not t.is_dark}
    found = {(e.vessel_a, e.vessel_b) for e in events}
    if found != visible:
        failures.append(f"event pairs {sorted(found)} != planted "
                        f"{sorted(visible)}")
    for e in events:
        t = by_pair.get((e.vessel_a, e.vessel_b))
        if t is None:
            continue
        if e.start > t.start or e.end < t.end:
            failures.append(f"event {e.vessel_a}/{e.vessel_b} interval "
                            f"misses planted window")
        if e.sts_class is not t.sts_class:
            failures.append(f"event {e.vessel_a}/{e.vessel_b} classed "
                            f"{e.sts_class.value}, planted {t.sts_class.value}")
    if report.dark_count != planted_dark:
        failures.append(f"dark count {report.dark_count} != planted "
                        f"{planted_dark}")
    dark_scenes = {v.detection.scene_id for v in report.verdicts if v.is_dark}
    truth_dark = {t.scene_id for t in truth if t.is_dark}
    if dark_scenes != truth_dark:
        failures.append(f"dark scenes {sorted(dark_scenes)} != planted "
                        f"{sorted(truth_dark)}")
    if failures:
        for failure in failures:
            print(f"assert-failed: {failure}", file=sys.stderr)
        return 2
    print("e2e: ok")
    return 0


class _Parser(argparse.ArgumentParser):
    """Exit 1 on usage problems; 2 is reserved for e2e mismatches."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: UsageError: {message}", file=sys.stderr)
        raise SystemExit(1)


def _knob_parent() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", metavar="FILE",
                   help="config file with a [darksts] section; flags win")
    g = p.add_argument_group("thresholds")
    g.add_argument("--max-distance-m", type=float, dest="max_distance_m",
                   help="pairing distance ceiling in meters (default 500)")
    g.add_argument("--min-duration-s", type=int, dest="min_duration_s",
                   help="minimum co-location duration (default 7200)")
    g.add_argument("--max-sog-kn", type=float, dest="max_sog_kn",
                   help="speed ceiling in knots, exclusive (default 1.0)")
    g.add_argument("--resample-step-s", type=int, dest="resample_step_s",
                   help="track resampling step (default 300)")
    g.add_argument("--max-gap-s", type=int, dest="max_gap_s",
                   help="largest gap bridged when resampling (default 1800)")
    g.add_argument("--match-window-s", type=int, dest="match_window_s",
                   help="scene-to-fix matching half-window (default 7200)")
    g.add_argument("--tile-buffer-m", type=float, dest="tile_buffer_m",
                   help="half-extent of cut tiles in meters (default 500)")
    g.add_argument("--cloud-limit", type=float, dest="cloud_limit",
                   help="scenes cloudier than this are skipped (default 0.7)")
    g.add_argument("--audit-radius-m", type=float, dest="audit_radius_m",
                   help="identity search radius in meters (default 500)")
    g.add_argument("--window-hours", type=float, dest="window_hours",
                   help="identity search half-window in hours (default 12)")
    g.add_argument("--min-identities", type=int, dest="min_identities",
                   help="AIS identities needed to clear a detection (default 2)")
    p.add_argument("--workers", type=int, default=1,
                   help="thread count; results are identical at any value")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="-v for progress, -vv for debug (stderr)")
    return p


def _add_synth_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--n-vessels", type=int, default=20, dest="n_vessels")
    sp.add_argument("--n-sts", type=int, default=4, dest="n_sts")
    sp.add_argument("--dark-fraction", type=float, default=0.0,
                    dest="dark_fraction")
    sp.add_argument("--duration-h", type=float, default=48.0,
                    dest="duration_h")
    sp.add_argument("--fix-interval-s", type=int, default=300,
                    dest="fix_interval_s")


def build_parser() -> argparse.ArgumentParser:
    knobs = _knob_parent()
    parser = _Parser(prog="darksts",
                     description="AIS ship-to-ship transfer detection and "
                                 "dark-vessel auditing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[knobs],
                       help="normalize NMEA and/or CSV positions")
    p.add_argument("--nmea", metavar="FILE", help="timestamped !AIVDM capture")
    p.add_argument("--positions", metavar="FILE", help="positions CSV")
    p.add_argument("--registry", metavar="FILE", help="vessel registry CSV")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("detect-sts", parents=[knobs],
                       help="find transfer events in tracks")
    p.add_argument("--positions", required=True, metavar="FILE")
    p.add_argument("--registry", metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_detect_sts)

    p = sub.add_parser("make-tiles", parents=[knobs],
                       help="cut labeled detection tiles from scenes")
    p.add_argument("--positions", required=True, metavar="FILE")
    p.add_argument("--registry", metavar="FILE")
    p.add_argument("--scenes", required=True, metavar="FILE")
    p.add_argument("--events", metavar="FILE", help="detect-sts CSV output")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_make_tiles)

    p = sub.add_parser("dark-scan", parents=[knobs],
                       help="audit detections against AIS presence")
    p.add_argument("--detections", required=True, metavar="FILE")
    p.add_argument("--positions", required=True, metavar="FILE")
    p.add_argument("--registry", metavar="FILE")
    p.add_argument("--scenes", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_dark_scan)

    p = sub.add_parser("synth", parents=[knobs],
                       help="generate a deterministic scenario")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, metavar="DIR")
    _add_synth_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("e2e", parents=[knobs],
                       help="synthesize, run every stage, check planted truth")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, metavar="DIR")
    _add_synth_flags(p)
    p.set_defaults(func=_cmd_e2e)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s",
                        level=max(logging.WARNING - 10 * args.verbose,
                                  logging.DEBUG))
    try:
        cfg = resolve_config(args)
        if args.command == "ingest" and not (args.nmea or args.positions):
            raise ConfigInvalid("ingest needs --nmea and/or --positions")
        return args.func(args, cfg)
    except DarkStsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoFailure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
