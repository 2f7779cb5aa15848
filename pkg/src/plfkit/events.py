"""Normalized protocol event streams: kinds, JSONL codec, ordering checks.

One event per line, flat JSON objects. Amounts, rates and factors are
decimal strings (see :mod:`plfkit.fixedpoint`); ordering is the triple
(block, tx_index, log_index) and must be strictly increasing within a
stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .fixedpoint import Dec, DecParseError

KINDS = frozenset(
    {
        "MarketListed",
        "Mint",
        "Redeem",
        "Borrow",
        "RepayBorrow",
        "LiquidateBorrow",
        "AccrueInterest",
        "NewCollateralFactor",
        "NewInterestRateModel",
        "NewInterestParams",
        "NewCloseFactor",
        "PriceUpdate",
    }
)

_ADDRESS_CHARS = frozenset("0123456789abcdef")


def is_valid_address(text: object) -> bool:
    """42-character lowercase 0x-prefixed hex account identifier."""
    return (
        isinstance(text, str)
        and len(text) == 42
        and text[:2] == "0x"
        and all(c in _ADDRESS_CHARS for c in text[2:])
    )


class EventParseError(ValueError):
    """A line failed schema validation; carries line number and field."""

    def __init__(self, message: str, *, line_number: int | None = None, field: str | None = None):
        prefix = ""
        if line_number is not None:
            prefix += f"line {line_number}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)
        self.line_number = line_number
        self.field = field


class StreamOrderError(ValueError):
    """Event keys are not strictly increasing."""


@dataclass(frozen=True, order=True)
class OrderingKey:
    """Total order over events: block, then tx index, then log index."""

    block: int
    tx_index: int
    log_index: int

    def __post_init__(self):
        for name in ("block", "tx_index", "log_index"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer")


@dataclass
class EventRecord:
    """One normalized protocol event.

    ``market`` is the asset symbol the event is scoped to (the repay market
    for LiquidateBorrow, the priced/listed asset for PriceUpdate and
    MarketListed, None for NewCloseFactor). Payload holds the remaining
    kind-specific fields with amounts already parsed to Dec.
    """

    key: OrderingKey
    kind: str
    market: str | None
    payload: dict[str, Any] = field(default_factory=dict)


# Field specs per kind: (name, checker). Checkers parse/validate a raw JSON
# value and return the normalized one, raising ValueError on bad input.


def _dec(raw: object) -> Dec:
    if not isinstance(raw, str):
        raise ValueError("expected a decimal string")
    return Dec(raw)


def _dec_nonneg(raw: object) -> Dec:
    value = _dec(raw)
    if value.is_negative():
        raise ValueError("amount must be non-negative")
    return value


def _dec_positive(raw: object) -> Dec:
    value = _dec(raw)
    if value <= Dec(0):
        raise ValueError("value must be positive")
    return value


def _dec_fraction(raw: object) -> Dec:
    value = _dec(raw)
    if value < Dec(0) or value > Dec(1):
        raise ValueError("factor must lie in [0, 1]")
    return value


def _dec_index(raw: object) -> Dec:
    value = _dec(raw)
    if value < Dec(1):
        raise ValueError("index must be at least 1")
    return value


def _account(raw: object) -> str:
    if not is_valid_address(raw):
        raise ValueError("expected a 42-character lowercase 0x hex address")
    return raw  # type: ignore[return-value]


def _symbol(raw: object) -> str:
    if not isinstance(raw, str) or not raw:
        raise ValueError("expected a non-empty asset symbol")
    return raw


def _model_id(raw: object) -> str:
    if not isinstance(raw, str) or not raw:
        raise ValueError("expected a non-empty model identifier")
    return raw


def _params_blob(raw: object) -> dict[str, Dec]:
    if not isinstance(raw, dict):
        raise ValueError("expected an object of decimal strings")
    return {str(k): _dec(v) for k, v in raw.items()}


# market_field: which top-level key scopes the event ("market", "asset",
# "repay_market" for liquidations, or None for global events).
_SCHEMAS: dict[str, tuple[str | None, tuple[tuple[str, Any], ...]]] = {
    "MarketListed": (
        "asset",
        (
            ("initial_exchange_rate", _dec_positive),
            ("initial_collateral_factor", _dec_fraction),
        ),
    ),
    "Mint": (
        "market",
        (
            ("account", _account),
            ("amount_underlying", _dec_nonneg),
            ("amount_ctokens", _dec_nonneg),
        ),
    ),
    "Redeem": (
        "market",
        (
            ("account", _account),
            ("amount_underlying", _dec_nonneg),
            ("amount_ctokens", _dec_nonneg),
        ),
    ),
    "Borrow": (
        "market",
        (
            ("account", _account),
            ("amount_underlying", _dec_nonneg),
        ),
    ),
    "RepayBorrow": (
        "market",
        (
            ("account", _account),
            ("payer", _account),
            ("amount_underlying", _dec_nonneg),
        ),
    ),
    "LiquidateBorrow": (
        "repay_market",
        (
            ("borrower", _account),
            ("liquidator", _account),
            ("repay_amount_underlying", _dec_nonneg),
            ("collateral_market", _symbol),
            ("seized_ctokens", _dec_nonneg),
        ),
    ),
    "AccrueInterest": (
        "market",
        (
            ("new_borrow_index", _dec_index),
            ("new_exchange_rate", _dec_positive),
            ("interest_accumulated_underlying", _dec_nonneg),
        ),
    ),
    "NewCollateralFactor": (
        "market",
        (("new_factor", _dec_fraction),),
    ),
    "NewInterestRateModel": (
        "market",
        (("model_id", _model_id),),
    ),
    "NewInterestParams": (
        "market",
        (("params_blob", _params_blob),),
    ),
    "NewCloseFactor": (
        None,
        (("new_close_factor", _dec_fraction),),
    ),
    "PriceUpdate": (
        "asset",
        (("price_usd", _dec_positive),),
    ),
}

_KEY_FIELDS = ("block", "tx_index", "log_index")


def parse_event_obj(obj: dict[str, Any], line_number: int | None = None) -> EventRecord:
    """Validate one flat JSON object against its kind's schema."""
    if not isinstance(obj, dict):
        raise EventParseError("event must be a JSON object", line_number=line_number)

    def fail(fieldname: str, message: str) -> EventParseError:
        return EventParseError(message, line_number=line_number, field=fieldname)

    key_parts = []
    for name in _KEY_FIELDS:
        if name not in obj:
            raise fail(name, "missing ordering field")
        raw = obj[name]
        if not isinstance(raw, int) or isinstance(raw, bool) or raw < 0:
            raise fail(name, "must be a non-negative integer")
        key_parts.append(raw)
    key = OrderingKey(*key_parts)

    kind = obj.get("kind")
    if kind is None:
        raise fail("kind", "missing field")
    if kind not in KINDS:
        raise fail("kind", f"unknown event kind {kind!r}")

    market_field, fields = _SCHEMAS[kind]
    expected = set(_KEY_FIELDS) | {"kind"} | {name for name, _ in fields}
    if market_field is not None:
        expected.add(market_field)
    unknown = set(obj) - expected
    if unknown:
        raise fail(sorted(unknown)[0], "unexpected field")

    market: str | None = None
    if market_field is not None:
        if market_field not in obj:
            raise fail(market_field, "missing field")
        try:
            market = _symbol(obj[market_field])
        except ValueError as exc:
            raise fail(market_field, str(exc)) from None

    payload: dict[str, Any] = {}
    for name, checker in fields:
        if name not in obj:
            raise fail(name, "missing field")
        try:
            payload[name] = checker(obj[name])
        except (ValueError, DecParseError) as exc:
            raise fail(name, str(exc)) from None

    return EventRecord(key=key, kind=kind, market=market, payload=payload)


def parse_event_line(line: str, line_number: int | None = None) -> EventRecord:
    """Parse one JSONL line into an EventRecord."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EventParseError(f"invalid JSON: {exc.msg}", line_number=line_number) from None
    return parse_event_obj(obj, line_number=line_number)


def _encode_value(value: Any) -> Any:
    if isinstance(value, Dec):
        return str(value)
    if isinstance(value, dict):
        return {k: _encode_value(v) for k, v in value.items()}
    return value


def event_to_obj(event: EventRecord) -> dict[str, Any]:
    """Flatten an EventRecord back to its JSON object form."""
    obj: dict[str, Any] = {
        "block": event.key.block,
        "tx_index": event.key.tx_index,
        "log_index": event.key.log_index,
        "kind": event.kind,
    }
    market_field, _ = _SCHEMAS[event.kind]
    if market_field is not None:
        obj[market_field] = event.market
    for name, value in event.payload.items():
        obj[name] = _encode_value(value)
    return obj


def serialize_event(event: EventRecord) -> str:
    """Canonical single-line JSON for an event (sorted keys, compact)."""
    return json.dumps(event_to_obj(event), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class OrderViolation:
    """First out-of-order pair found in a stream."""

    index: int
    previous: OrderingKey
    key: OrderingKey


def validate_stream_order(events: Iterable[EventRecord]) -> OrderViolation | None:
    """Return the first ordering violation, or None for a sorted stream."""
    previous: OrderingKey | None = None
    for index, event in enumerate(events):
        if previous is not None and event.key <= previous:
            return OrderViolation(index=index, previous=previous, key=event.key)
        previous = event.key
    return None


def iter_events(path: str) -> Iterator[EventRecord]:
    """Stream events from a JSONL file; blank lines are rejected."""
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                raise EventParseError("blank line", line_number=line_number)
            yield parse_event_line(stripped, line_number=line_number)


def read_events(path: str, validate_order: bool = True) -> list[EventRecord]:
    """Load a whole JSONL stream, optionally enforcing strict ordering."""
    events = list(iter_events(path))
    if validate_order:
        violation = validate_stream_order(events)
        if violation is not None:
            raise StreamOrderError(
                f"event {violation.index} key {violation.key} does not follow "
                f"{violation.previous}"
            )
    return events


def write_events(path: str, events: Iterable[EventRecord]) -> int:
    """Write events as canonical JSONL; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for event in events:
            handle.write(serialize_event(event))
            handle.write("\n")
            count += 1
    return count
