"""Liquidation efficiency, concentration, and locked-funds analytics.

track_efficiency replays a stream while watching account health after
every event, timing how long positions stay liquidable before someone
liquidates them. Only accounts whose inputs changed are re-evaluated
unless the caller forces full re-evaluation (the oracle-test mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from .engine import apply_event
from .events import EventRecord, OrderingKey
from .fixedpoint import ZERO, Dec
from .model import GlobalState
from .risk import account_health

NOT_LIQUIDABLE_WARNING = "not-liquidable-at-engine-precision"


@dataclass(frozen=True)
class Streak:
    """One stretch of time an account spent liquidable."""

    account: str
    start: OrderingKey
    end: OrderingKey | None  # closing liquidation's key; None if still open


@dataclass(frozen=True)
class LiquidationRecord:
    """One executed liquidation and how stale its streak was."""

    account: str
    key: OrderingKey
    blocks_elapsed: int
    seized_value_usd: Dec
    warning: str | None = None


@dataclass
class EfficiencyTimeline:
    streaks: list[Streak] = field(default_factory=list)
    liquidations: list[LiquidationRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _seized_value(state: GlobalState, event: EventRecord) -> Dec:
    # Valued at the exchange rate and price in force when the liquidation
    # executes; the event itself changes neither.
    market = state.markets[event.payload["collateral_market"]]
    price = state.price_table.get(market.asset.symbol)
    return (event.payload["seized_ctokens"] * market.exchange_rate) * price


def track_efficiency(
    state: GlobalState,
    events: Iterable[EventRecord],
    full_reeval: bool = False,
) -> EfficiencyTimeline:
    """Replay a stream (mutating ``state``) and time liquidable streaks.

    A streak opens at the first event leaving an account's surplus
    negative. Recovery closes it silently; a LiquidateBorrow closes it
    with a record of blocks elapsed and the USD value seized. A
    liquidation that finds no open streak records zero blocks and a
    warning: at engine precision the account was never liquidable.
    """
    timeline = EfficiencyTimeline()
    open_streaks: dict[str, OrderingKey] = {}
    members: dict[str, set[str]] = {}  # market symbol -> accounts ever positioned

    for account, holdings in state.participants.items():
        for symbol in holdings:
            members.setdefault(symbol, set()).add(account)
    for account in state.participants:
        if account_health(state, account).liquidable:
            key = state.cursor if state.cursor is not None else OrderingKey(0, 0, 0)
            open_streaks[account] = key

    for event in events:
        payload = event.payload
        if event.kind == "LiquidateBorrow":
            borrower = payload["borrower"]
            start = open_streaks.pop(borrower, None)
            if start is None:
                record = LiquidationRecord(
                    account=borrower,
                    key=event.key,
                    blocks_elapsed=0,
                    seized_value_usd=_seized_value(state, event),
                    warning=NOT_LIQUIDABLE_WARNING,
                )
                timeline.warnings.append(
                    f"event {event.key.block}:{event.key.tx_index}:{event.key.log_index}: "
                    f"{NOT_LIQUIDABLE_WARNING}: {borrower}"
                )
            else:
                record = LiquidationRecord(
                    account=borrower,
                    key=event.key,
                    blocks_elapsed=event.key.block - start.block,
                    seized_value_usd=_seized_value(state, event),
                )
                timeline.streaks.append(Streak(account=borrower, start=start, end=event.key))
            timeline.liquidations.append(record)

        apply_event(state, event)

        if full_reeval:
            dirty = set(state.participants)
        elif event.kind in ("Mint", "Redeem", "Borrow", "RepayBorrow"):
            dirty = {payload["account"]}
        elif event.kind == "LiquidateBorrow":
            dirty = {payload["borrower"], payload["liquidator"]}
        elif event.kind in ("AccrueInterest", "NewCollateralFactor", "PriceUpdate"):
            dirty = set(members.get(event.market or "", ()))
        else:
            dirty = set()

        if event.kind in ("Mint", "Redeem", "Borrow", "RepayBorrow"):
            members.setdefault(event.market, set()).add(payload["account"])
        elif event.kind == "LiquidateBorrow":
            members.setdefault(event.market, set()).add(payload["borrower"])
            members.setdefault(payload["collateral_market"], set()).update(
                (payload["borrower"], payload["liquidator"])
            )

        for account in sorted(dirty):
            liquidable = account_health(state, account).liquidable
            if liquidable and account not in open_streaks:
                open_streaks[account] = event.key
            elif not liquidable and account in open_streaks:
                del open_streaks[account]  # recovered: closes without record

    for account in sorted(open_streaks):
        timeline.streaks.append(Streak(account=account, start=open_streaks[account], end=None))
    return timeline


@dataclass(frozen=True)
class CdfPoint:
    blocks: int
    cumulative_fraction: Dec


def efficiency_cdf(
    timeline: EfficiencyTimeline, weighting: Literal["value", "count"] = "value"
) -> list[CdfPoint]:
    """Cumulative distribution of blocks-to-liquidation.

    Weighted by seized USD value or by liquidation count. Points appear at
    each distinct blocks_elapsed; the final fraction is exactly 1 whenever
    any mass exists.
    """
    if weighting not in ("value", "count"):
        raise ValueError("weighting must be 'value' or 'count'")
    mass: dict[int, Dec] = {}
    for record in timeline.liquidations:
        weight = record.seized_value_usd if weighting == "value" else Dec(1)
        mass[record.blocks_elapsed] = mass.get(record.blocks_elapsed, ZERO) + weight
    total = ZERO
    for weight in mass.values():
        total = total + weight
    if total.is_zero():
        return []
    points: list[CdfPoint] = []
    cumulative = ZERO
    for blocks in sorted(mass):
        cumulative = cumulative + mass[blocks]
        points.append(CdfPoint(blocks=blocks, cumulative_fraction=cumulative / total))
    return points


@dataclass(frozen=True)
class ConcentrationRow:
    rank: int
    account: str
    value_usd: Dec
    share: Dec


@dataclass
class ConcentrationReport:
    """How concentrated one side of the book is across accounts."""

    side: Literal["supply", "borrow"]
    total_usd: Dec
    top1_share: Dec
    topn_share: Dec
    top_n: int
    rows: list[ConcentrationRow]
    undefined: bool = False  # true when the side's total is zero


def concentration(
    state: GlobalState, side: Literal["supply", "borrow"], top_n: int
) -> ConcentrationReport:
    """Rank accounts by USD value on one side of the book."""
    if side not in ("supply", "borrow"):
        raise ValueError("side must be 'supply' or 'borrow'")
    if top_n < 1:
        raise ValueError("top_n must be at least 1")

    values: list[tuple[str, Dec]] = []
    for account in sorted(state.participants):
        health = account_health(state, account)
        value = health.collateral_value_usd if side == "supply" else health.borrow_value_usd
        values.append((account, value))
    # Descending by value; address breaks ties for a stable ranking.
    values.sort(key=lambda item: (-item[1].mantissa, item[0]))

    total = ZERO
    for _, value in values:
        total = total + value
    undefined = total.is_zero()

    rows: list[ConcentrationRow] = []
    top_sum = ZERO
    for rank, (account, value) in enumerate(values, start=1):
        share = ZERO if undefined else value / total
        rows.append(ConcentrationRow(rank=rank, account=account, value_usd=value, share=share))
        if rank <= top_n:
            top_sum = top_sum + value
    top1 = rows[0].share if rows and not undefined else ZERO
    topn = ZERO if undefined else top_sum / total
    return ConcentrationReport(
        side=side,
        total_usd=total,
        top1_share=top1,
        topn_share=topn,
        top_n=top_n,
        rows=rows,
        undefined=undefined,
    )


@dataclass(frozen=True)
class FundsRow:
    """Aggregate USD funds at one sampled block."""

    block: int
    supplied_usd: Dec
    borrowed_usd: Dec
    locked_usd: Dec  # supplied - borrowed; negative when borrows exceed supply


def _funds_row(state: GlobalState, block: int) -> FundsRow:
    supplied = ZERO
    borrowed = ZERO
    for symbol in sorted(state.markets):
        market = state.markets[symbol]
        if market.total_ctoken_supply.is_zero() and market.total_borrows.is_zero():
            continue
        price = state.price_table.get(symbol)
        supplied = supplied + (market.total_ctoken_supply * market.exchange_rate) * price
        borrowed = borrowed + market.total_borrows * price
    return FundsRow(
        block=block, supplied_usd=supplied, borrowed_usd=borrowed, locked_usd=supplied - borrowed
    )


def funds_time_series(
    state: GlobalState, events: Sequence[EventRecord], stride: int = 1
) -> list[FundsRow]:
    """Supplied / borrowed / locked USD sampled every ``stride`` blocks.

    Samples start at the first event's block and always include the final
    block; each row values the state after all events with block <= the
    sample block. With no events a single all-zero row is returned.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    if not events:
        return [FundsRow(0, ZERO, ZERO, ZERO)]

    first = events[0].key.block
    last = events[-1].key.block
    samples = list(range(first, last + 1, stride))
    if samples[-1] != last:
        samples.append(last)

    rows: list[FundsRow] = []
    position = 0
    for sample in samples:
        while position < len(events) and events[position].key.block <= sample:
            apply_event(state, events[position])
            position += 1
        rows.append(_funds_row(state, sample))
    return rows
