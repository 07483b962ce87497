# tfqkd/main.py
# Command-line entry point: keyrate, analyze, simulate, optimize, scan, history.

import argparse
import json
import logging
import math
import sys
from typing import List, Optional, Tuple

from pydantic import ValidationError

from . import config
from .core import PARAMETER_SETS, db_to_eta, distance_channel, transmittance
from .estimation.keyrate import analyze, secure_key_rate
from .exceptions import DomainError, TfqkdError, UsageError, VacuousBoundError
from .models import archive_report, get_db, list_runs
from .optimization.optimizer import optimize, parse_distances, scan, scan_csv
from .schemas import (
    V,
    Y,
    ChannelConfig,
    KeyRateInput,
    KeyRateReport,
    RunConfig,
    SessionConfig,
    SourceParams,
    TallyMetadata,
    TallyRecord,
)
from .simulation.session import simulate_session, summarize_truth
from .utils.tally_io import dump_tally, emit_report, load_run_config, read_tally_file, write_atomic

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so run_cli controls the status."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="tfqkd", description="SNS-TF-QKD finite-key analysis toolkit")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)

    def common(p, tally=False, archive=False):
        if tally:
            p.add_argument("--tally", required=True, help="tally JSON file")
        p.add_argument("--config", default=None, help="run configuration JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=["mean", "finite"], default=None)
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        if archive:
            p.add_argument("--archive", nargs="?", const=config.DATABASE_URL, default=None,
                           help="store the result in the run archive (optional database URL)")

    common(sub.add_parser("keyrate", help="key rate from published after-AOPP values"), tally=True, archive=True)
    common(sub.add_parser("analyze", help="full decoy + AOPP + key-rate pipeline"), tally=True, archive=True)
    common(sub.add_parser("simulate", help="Monte Carlo session -> tally + truth summary"))
    common(sub.add_parser("optimize", help="search source parameters"))
    scan_parser = sub.add_parser("scan", help="rate versus distance as CSV")
    common(scan_parser)
    scan_parser.add_argument("--distances", required=True, help="a:b:step or comma list (km)")
    history = sub.add_parser("history", help="list archived runs")
    history.add_argument("--archive", default=config.DATABASE_URL)
    history.add_argument("--limit", type=int, default=20)
    return parser


# --- Helpers ---

def _source_for(cfg: RunConfig, metadata: Optional[TallyMetadata] = None) -> SourceParams:
    if cfg.source is not None:
        return cfg.source
    label = metadata.parameter_set if metadata else None
    if label in PARAMETER_SETS:
        return PARAMETER_SETS[label]
    if metadata is None:
        return PARAMETER_SETS["1"]
    raise UsageError("no source parameters: give 'source' in --config or a known parameter_set in the tally")


def _channel_for(cfg: RunConfig, metadata: TallyMetadata) -> ChannelConfig:
    ch = cfg.channel
    if metadata.distance_km is not None:
        ch = distance_channel(ch, metadata.distance_km)
    if metadata.clock_hz is not None:
        ch = ch.model_copy(update={"clock_hz": metadata.clock_hz})
    return ch


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _archive(args, report: KeyRateReport, text: str, metadata: Optional[TallyMetadata] = None) -> None:
    if not args.archive:
        return
    db = next(get_db(args.archive))
    try:
        row = archive_report(
            db,
            args.command,
            text,
            source_path=getattr(args, "tally", None),
            distance_km=metadata.distance_km if metadata else None,
            seed=args.seed,
            r_per_pulse=report.r_per_pulse,
            total_secure_bits=report.total_secure_bits,
            vacuous=int(report.vacuous),
        )
        logger.info("archived run %d", row.id)
    finally:
        db.close()


# --- Subcommands ---

def cmd_keyrate(args, cfg: RunConfig) -> int:
    tally, metadata = read_tally_file(args.tally)
    if cfg.published is None:
        logger.info("no published after-AOPP values in config; running the full pipeline")
        return cmd_analyze(args, cfg, (tally, metadata))
    ch = _channel_for(cfg, metadata)
    eta = db_to_eta(metadata.attenuation_db) if metadata.attenuation_db is not None else transmittance(ch)
    pub = cfg.published
    report = secure_key_rate(KeyRateInput(
        n_total=pub.n_total or tally.n_total,
        n1=pub.n1,
        e1ph=pub.e1ph,
        n_t=pub.n_t,
        e_t=pub.e_t,
        n_vy=tally.detected[V][Y],
        n_yv=tally.detected[Y][V],
        sec=cfg.security,
        clock_hz=ch.clock_hz,
        eta=eta,
    ))
    text = emit_report(report, args.format)
    _emit(text, args.out)
    _archive(args, report, text, metadata)
    return 0


def cmd_analyze(args, cfg: RunConfig, loaded: Optional[Tuple[TallyRecord, TallyMetadata]] = None) -> int:
    tally, metadata = loaded or read_tally_file(args.tally)
    params = _source_for(cfg, metadata)
    ch = _channel_for(cfg, metadata)
    report = analyze(tally, params, cfg.security, ch, mode=args.mode or cfg.mode, delta_slice=cfg.delta_slice)
    text = emit_report(report, args.format)
    _emit(text, args.out)
    _archive(args, report, text, metadata)
    return VacuousBoundError.exit_code if report.vacuous else 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else (cfg.seed if cfg.seed is not None else config.DEFAULT_SEED)
    session = SessionConfig(
        source=_source_for(cfg),
        channel=cfg.channel,
        n_pairs=cfg.n_pairs,
        phase_model=cfg.phase_model,
        schedule=cfg.schedule,
        delta_slice=cfg.delta_slice or math.pi / 8,
        seed=seed,
        workers=config.WORKERS,
    )
    truth = simulate_session(session)
    ch = cfg.channel
    metadata = TallyMetadata(
        distance_km=ch.length_a_km + ch.length_b_km,
        attenuation_db=(ch.length_a_km + ch.length_b_km) * ch.atten_db_per_km,
        clock_hz=ch.clock_hz,
        note=f"simulated, seed {seed}",
    )
    summary = summarize_truth(truth)
    _emit(dump_tally(truth.tally, metadata), args.out)
    if args.out:
        write_atomic(args.out + ".truth.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        # stdout carries the tally; the truth goes to stderr as one JSON line.
        sys.stderr.write(json.dumps(summary, sort_keys=True) + "\n")
    logger.info("simulated %d windows: %d detections, %d raw key bits",
                truth.tally.n_total, truth.tally.total_detected, truth.keys.length)
    return 0


def cmd_optimize(args, cfg: RunConfig) -> int:
    opt = cfg.optimizer
    if args.seed is not None:
        opt = opt.model_copy(update={"seed": args.seed})
    if cfg.source is not None and not opt.warm_starts:
        opt = opt.model_copy(update={"warm_starts": [cfg.source]})
    result = optimize(opt, cfg.channel, cfg.n_total, cfg.security)
    _emit(result.model_dump_json(indent=2) + "\n", args.out)
    return 0


def cmd_scan(args, cfg: RunConfig) -> int:
    try:
        distances = parse_distances(args.distances)
    except ValueError as e:
        raise UsageError(str(e))
    rows = scan(_source_for(cfg), cfg.channel, distances, cfg.n_total, cfg.security,
                cfg.delta_slice or math.pi / 8)
    _emit(scan_csv(rows), args.out)
    return 0


def cmd_history(args) -> int:
    db = next(get_db(args.archive))
    try:
        for row in list_runs(db, args.limit):
            sys.stdout.write(json.dumps({
                "id": row.id,
                "command": row.command,
                "source_path": row.source_path,
                "distance_km": row.distance_km,
                "r_per_pulse": row.r_per_pulse,
                "total_secure_bits": row.total_secure_bits,
                "vacuous": bool(row.vacuous),
                "created_at": row.created_at.isoformat() if row.created_at else None,
            }) + "\n")
    finally:
        db.close()
    return 0


COMMANDS = {
    "keyrate": cmd_keyrate,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "scan": cmd_scan,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; errors become a JSON line on stderr and an exit code."""
    try:
        args = build_parser().parse_args(argv)
        config.configure_logging(args.log_level)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if args.command == "history":
            return cmd_history(args)
        cfg = load_run_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except TfqkdError as e:
        sys.stderr.write(json.dumps(e.to_dict()) + "\n")
        return e.exit_code
    except ValidationError as e:
        error = DomainError(str(e.errors()[0]["msg"]))
        sys.stderr.write(json.dumps(error.to_dict()) + "\n")
        return error.exit_code
