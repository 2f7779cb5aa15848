"""Command-line front door.

Each subcommand is a thin adapter over one library operation: load state
from an event stream or a snapshot, call the operation, format rows as
CSV or JSON. No balance arithmetic happens here. Diagnostics and replay
warnings go to standard error; only the requested table goes to the
chosen output.

Exit codes: 0 success, 1 domain or evaluation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Any, Sequence

from . import __version__
from .analytics import concentration, efficiency_cdf, funds_time_series, track_efficiency
from .engine import ReplayError, replay, replay_prefix
from .events import EventParseError, EventRecord, StreamOrderError, read_events
from .fixedpoint import ONE, ZERO, Dec, DecParseError
from .leverage import quote
from .model import GlobalState, MissingPriceError
from .risk import liquidable_accounts, price_sensitivity
from .scenarios import (
    GenerationError,
    default_spec,
    generate,
    spec_from_dict,
)
from .snapshots import SnapshotError, load_snapshot, save_snapshot, verify_snapshot


class CliError(Exception):
    """Domain failure surfaced with exit code 1."""


# -- Flag value parsers (argparse type callbacks; failures exit 2) ------------


def _dec_arg(text: str) -> Dec:
    try:
        return Dec(text)
    except DecParseError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg_dec_arg(text: str) -> Dec:
    value = _dec_arg(text)
    if value.is_negative():
        raise argparse.ArgumentTypeError("value must not be negative")
    return value


def _delta_arg(text: str) -> Dec:
    value = _dec_arg(text)
    if value <= ONE:
        raise argparse.ArgumentTypeError("delta must exceed 1")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("value must not be negative")
    return value


def _positive_int(text: str) -> int:
    value = _nonneg_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return value


def _shock_list(text: str) -> list[Dec]:
    shocks = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            raise argparse.ArgumentTypeError("empty shock entry")
        value = _dec_arg(piece)
        if value.is_negative() or value >= ONE:
            raise argparse.ArgumentTypeError(f"shock {piece} outside [0, 1)")
        shocks.append(value)
    if not shocks:
        raise argparse.ArgumentTypeError("at least one shock required")
    return shocks


# -- State loading and output formatting --------------------------------------


def _read_stream(path: str) -> list[EventRecord]:
    try:
        return read_events(path)
    except OSError as exc:
        raise CliError(f"cannot read events from {path}: {exc.strerror or exc}") from None
    except (EventParseError, StreamOrderError) as exc:
        raise CliError(f"{path}: {exc}") from None


def _replayed_state(events_path: str, at_block: int | None) -> GlobalState:
    events = _read_stream(events_path)
    state = GlobalState.fresh()
    try:
        if at_block is None:
            _, report = replay(state, events)
        else:
            _, report = replay_prefix(state, events, at_block)
    except ReplayError as exc:
        raise CliError(str(exc)) from None
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return state


def _state_from_args(args: argparse.Namespace) -> GlobalState:
    if getattr(args, "snapshot", None):
        try:
            return load_snapshot(args.snapshot)
        except (SnapshotError, OSError) as exc:
            raise CliError(f"cannot load snapshot {args.snapshot}: {exc}") from None
    return _replayed_state(args.events, getattr(args, "at_block", None))


def _encode_cell(value: Any, for_csv: bool) -> Any:
    if isinstance(value, Dec):
        return str(value)
    if value is None:
        return "" if for_csv else None
    return value


def _write_rows(args: argparse.Namespace, columns: Sequence[str], rows: list[dict[str, Any]]) -> None:
    if args.format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_encode_cell(row[c], for_csv=True) for c in columns])
        text = buffer.getvalue()
    else:
        payload = [{c: _encode_cell(row[c], for_csv=False) for c in columns} for row in rows]
        text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


# -- Subcommand bodies ---------------------------------------------------------

_REPLAY_COLUMNS = ("events_applied", "final_block", "final_tx_index", "final_log_index", "digest")


def _cursor_cells(cursor) -> tuple[Any, Any, Any]:
    if cursor is None:
        return None, None, None
    return cursor.block, cursor.tx_index, cursor.log_index


def cmd_replay(args: argparse.Namespace) -> int:
    events = _read_stream(args.events)
    if args.snapshot_in:
        try:
            state = load_snapshot(args.snapshot_in)
        except (SnapshotError, OSError) as exc:
            raise CliError(f"cannot load snapshot {args.snapshot_in}: {exc}") from None
        cursor = state.cursor
        if cursor is not None:
            events = [e for e in events if e.key > cursor]
    else:
        state = GlobalState.fresh()
    if args.at_block is not None:
        events = [e for e in events if e.key.block <= args.at_block]
    try:
        _, report = replay(state, events)
    except ReplayError as exc:
        raise CliError(str(exc)) from None
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.snapshot_out:
        save_snapshot(state, args.snapshot_out)
    block, tx_index, log_index = _cursor_cells(state.cursor)
    _write_rows(
        args,
        _REPLAY_COLUMNS,
        [
            {
                "events_applied": report.events_applied,
                "final_block": block,
                "final_tx_index": tx_index,
                "final_log_index": log_index,
                "digest": report.digest,
            }
        ],
    )
    return 0


def cmd_liquidable(args: argparse.Namespace) -> int:
    state = _state_from_args(args)
    try:
        unhealthy = liquidable_accounts(state)
    except MissingPriceError as exc:
        raise CliError(str(exc)) from None
    columns = (
        "account",
        "collateral_power_usd",
        "borrow_value_usd",
        "surplus_usd",
        "collateral_value_usd",
        "ratio",
    )
    rows = [
        {
            "account": account,
            "collateral_power_usd": health.collateral_power_usd,
            "borrow_value_usd": health.borrow_value_usd,
            "surplus_usd": health.surplus_usd,
            "collateral_value_usd": health.collateral_value_usd,
            "ratio": health.ratio,
        }
        for account, health in unhealthy.items()
    ]
    _write_rows(args, columns, rows)
    return 0


def cmd_sensitivity(args: argparse.Namespace) -> int:
    state = _state_from_args(args)
    if args.asset not in state.markets:
        raise CliError(f"no market listed for asset {args.asset!r}")
    try:
        table = price_sensitivity(state, args.asset, args.shocks)
    except MissingPriceError as exc:
        raise CliError(str(exc)) from None
    columns = ("shock", "liquidable_accounts", "liquidable_collateral_usd")
    rows = [
        {
            "shock": row.shock,
            "liquidable_accounts": row.liquidable_accounts,
            "liquidable_collateral_usd": row.liquidable_collateral_usd,
        }
        for row in table
    ]
    _write_rows(args, columns, rows)
    return 0


def cmd_efficiency(args: argparse.Namespace) -> int:
    events = _read_stream(args.events)
    if args.at_block is not None:
        events = [e for e in events if e.key.block <= args.at_block]
    state = GlobalState.fresh()
    try:
        timeline = track_efficiency(state, events, full_reeval=args.full_reeval)
    except (ReplayError, MissingPriceError) as exc:
        raise CliError(str(exc)) from None
    for warning in timeline.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    points = efficiency_cdf(timeline, weighting=args.weighting)
    columns = ("blocks", "cumulative_fraction")
    rows = [{"blocks": p.blocks, "cumulative_fraction": p.cumulative_fraction} for p in points]
    _write_rows(args, columns, rows)
    return 0


def cmd_concentration(args: argparse.Namespace) -> int:
    state = _state_from_args(args)
    try:
        report = concentration(state, args.side, args.top)
    except MissingPriceError as exc:
        raise CliError(str(exc)) from None
    print(
        f"side={report.side} total_usd={report.total_usd} "
        f"top1_share={report.top1_share} top{report.top_n}_share={report.topn_share}",
        file=sys.stderr,
    )
    columns = ("rank", "account", "value_usd", "share")
    rows = [
        {"rank": i + 1, "account": row.account, "value_usd": row.value_usd, "share": row.share}
        for i, row in enumerate(report.rows)
    ]
    _write_rows(args, columns, rows)
    return 0


def cmd_timeseries(args: argparse.Namespace) -> int:
    events = _read_stream(args.events)
    state = GlobalState.fresh()
    try:
        rows_out = funds_time_series(state, events, stride=args.stride)
    except (ReplayError, MissingPriceError) as exc:
        raise CliError(str(exc)) from None
    columns = ("block", "supplied_usd", "borrowed_usd", "locked_usd")
    rows = [
        {
            "block": row.block,
            "supplied_usd": row.supplied_usd,
            "borrowed_usd": row.borrowed_usd,
            "locked_usd": row.locked_usd,
        }
        for row in rows_out
    ]
    _write_rows(args, columns, rows)
    return 0


def cmd_leverage(args: argparse.Namespace) -> int:
    result = quote(args.alpha, args.delta, args.rounds, args.premium)
    columns = (
        "alpha",
        "delta",
        "rounds",
        "premium",
        "total_collateral",
        "total_debt",
        "max_exposure",
    )
    _write_rows(
        args,
        columns,
        [
            {
                "alpha": args.alpha,
                "delta": args.delta,
                "rounds": args.rounds,
                "premium": args.premium,
                "total_collateral": result.total_collateral,
                "total_debt": result.total_debt,
                "max_exposure": result.max_exposure,
            }
        ],
    )
    return 0


def cmd_gen_scenario(args: argparse.Namespace) -> int:
    if args.spec:
        try:
            with open(args.spec, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except OSError as exc:
            raise CliError(f"cannot read spec {args.spec}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.spec}: invalid JSON: {exc.msg}") from None
        try:
            spec = spec_from_dict(raw)
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{args.spec}: bad scenario spec: {exc}") from None
        if args.seed is not None:
            spec.seed = args.seed
    else:
        if args.seed is None:
            raise CliError("either --spec or --seed is required")
        spec = default_spec(args.seed, event_count=args.event_count, accounts=args.accounts)
    try:
        result = generate(spec, args.events_out, args.annotations_out)
    except GenerationError as exc:
        raise CliError(str(exc)) from None
    _write_rows(
        args,
        ("events_path", "annotations_path", "event_count", "final_block"),
        [
            {
                "events_path": result.events_path,
                "annotations_path": result.annotations_path,
                "event_count": result.event_count,
                "final_block": result.final_block,
            }
        ],
    )
    return 0


_SNAPSHOT_COLUMNS = ("path", "format_version", "final_block", "final_tx_index", "final_log_index", "digest")


def _snapshot_row(args: argparse.Namespace, path: str, meta) -> None:
    block, tx_index, log_index = _cursor_cells(meta.cursor)
    _write_rows(
        args,
        _SNAPSHOT_COLUMNS,
        [
            {
                "path": path,
                "format_version": meta.format_version,
                "final_block": block,
                "final_tx_index": tx_index,
                "final_log_index": log_index,
                "digest": meta.digest,
            }
        ],
    )


def cmd_snapshot_save(args: argparse.Namespace) -> int:
    state = _replayed_state(args.events, args.at_block)
    meta = save_snapshot(state, args.out_path)
    _snapshot_row(args, args.out_path, meta)
    return 0


def cmd_snapshot_load(args: argparse.Namespace) -> int:
    try:
        state = load_snapshot(args.snapshot)
        meta = verify_snapshot(args.snapshot)
    except (SnapshotError, OSError) as exc:
        raise CliError(f"cannot load snapshot {args.snapshot}: {exc}") from None
    print(
        f"markets={len(state.markets)} participants={len(state.participants)}",
        file=sys.stderr,
    )
    _snapshot_row(args, args.snapshot, meta)
    return 0


def cmd_snapshot_verify(args: argparse.Namespace) -> int:
    try:
        meta = verify_snapshot(args.snapshot)
    except (SnapshotError, OSError) as exc:
        raise CliError(f"snapshot verification failed: {exc}") from None
    _snapshot_row(args, args.snapshot, meta)
    return 0


# -- Parser wiring -------------------------------------------------------------


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    parser.add_argument("--out", metavar="FILE", help="write output here instead of stdout")


def _add_state_source(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--events", metavar="FILE", help="replay this JSONL event stream")
    group.add_argument("--snapshot", metavar="FILE", help="load state from this snapshot")
    parser.add_argument(
        "--at-block",
        type=_nonneg_int,
        metavar="N",
        help="with --events, replay only blocks <= N",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plfkit",
        description="Replay loanable-funds protocol event logs and analyze the resulting state.",
    )
    parser.add_argument("--version", action="version", version=f"plfkit {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("replay", help="replay an event stream and report the state digest")
    p.add_argument("--events", metavar="FILE", required=True)
    p.add_argument("--at-block", type=_nonneg_int, metavar="N")
    p.add_argument("--snapshot-in", metavar="FILE", help="resume from this snapshot")
    p.add_argument("--snapshot-out", metavar="FILE", help="save the final state here")
    _add_output_flags(p)
    p.set_defaults(func=cmd_replay)

    p = subparsers.add_parser("liquidable", help="list accounts eligible for liquidation")
    _add_state_source(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_liquidable)

    p = subparsers.add_parser("sensitivity", help="liquidable collateral under price shocks")
    _add_state_source(p)
    p.add_argument("--asset", required=True, metavar="SYM", help="asset whose price is shocked")
    p.add_argument(
        "--shocks",
        type=_shock_list,
        required=True,
        metavar="LIST",
        help="comma-separated relative drops, each in [0, 1)",
    )
    _add_output_flags(p)
    p.set_defaults(func=cmd_sensitivity)

    p = subparsers.add_parser("efficiency", help="liquidation-speed CDF from an event stream")
    p.add_argument("--events", metavar="FILE", required=True)
    p.add_argument("--at-block", type=_nonneg_int, metavar="N")
    p.add_argument("--weighting", choices=("value", "count"), default="value")
    p.add_argument(
        "--full-reeval",
        action="store_true",
        help="re-evaluate every account after every event (slow, for cross-checks)",
    )
    _add_output_flags(p)
    p.set_defaults(func=cmd_efficiency)

    p = subparsers.add_parser("concentration", help="top-account share of supply or borrows")
    _add_state_source(p)
    p.add_argument("--side", choices=("supply", "borrow"), required=True)
    p.add_argument("--top", type=_positive_int, default=10, metavar="N")
    _add_output_flags(p)
    p.set_defaults(func=cmd_concentration)

    p = subparsers.add_parser("timeseries", help="supplied/borrowed/locked USD per block")
    p.add_argument("--events", metavar="FILE", required=True)
    p.add_argument("--stride", type=_positive_int, default=1, metavar="N")
    _add_output_flags(p)
    p.set_defaults(func=cmd_timeseries)

    p = subparsers.add_parser("leverage", help="collateral/debt totals for iterated borrowing")
    p.add_argument("--alpha", type=_nonneg_dec_arg, required=True, help="initial funds")
    p.add_argument("--delta", type=_delta_arg, required=True, help="collateralization ratio, > 1")
    p.add_argument("--rounds", type=_nonneg_int, required=True, help="borrowing rounds")
    p.add_argument(
        "--premium",
        type=_nonneg_dec_arg,
        default=ZERO,
        help="liquidity premium applied to debt (default 0)",
    )
    _add_output_flags(p)
    p.set_defaults(func=cmd_leverage)

    p = subparsers.add_parser("gen-scenario", help="generate an annotated synthetic stream")
    p.add_argument("--seed", type=_nonneg_int, help="RNG seed (unsigned 64-bit)")
    p.add_argument("--spec", metavar="FILE", help="scenario spec JSON (overrides defaults)")
    p.add_argument("--events-out", required=True, metavar="FILE")
    p.add_argument("--annotations-out", required=True, metavar="FILE")
    p.add_argument("--event-count", type=_positive_int, default=400, metavar="N")
    p.add_argument("--accounts", type=_positive_int, default=8, metavar="N")
    _add_output_flags(p)
    p.set_defaults(func=cmd_gen_scenario)

    p = subparsers.add_parser("snapshot", help="save, load, or verify state snapshots")
    snap_sub = p.add_subparsers(dest="snapshot_command", required=True)

    sp = snap_sub.add_parser("save", help="replay events and write a snapshot")
    sp.add_argument("--events", metavar="FILE", required=True)
    sp.add_argument("--at-block", type=_nonneg_int, metavar="N")
    sp.add_argument("--out-path", required=True, metavar="FILE", help="snapshot destination")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_snapshot_save)

    sp = snap_sub.add_parser("load", help="load a snapshot and report its digest")
    sp.add_argument("--snapshot", metavar="FILE", required=True)
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_snapshot_load)

    sp = snap_sub.add_parser("verify", help="check a snapshot's digest")
    sp.add_argument("--snapshot", metavar="FILE", required=True)
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_snapshot_verify)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
