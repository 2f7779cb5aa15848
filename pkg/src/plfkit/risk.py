"""Account health, liquidation math, and price sensitivity.

Health follows the borrowing-capacity rule: discounted collateral
(ctoken_balance * exchange_rate * collateral_factor * price, truncating in
that order) must cover the accrued borrow value. An account is liquidable
exactly when the surplus is strictly negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .fixedpoint import ONE, ZERO, Dec
from .model import GlobalState, MissingPriceError


@dataclass(frozen=True)
class AccountHealth:
    """Valuations for one account, all in USD."""

    collateral_power_usd: Dec
    borrow_value_usd: Dec
    surplus_usd: Dec
    collateral_value_usd: Dec
    ratio: Dec | None  # power / borrow value; None when nothing is borrowed

    @property
    def liquidable(self) -> bool:
        return self.surplus_usd.is_negative()


_EMPTY_HEALTH = AccountHealth(ZERO, ZERO, ZERO, ZERO, None)


def _health(
    state: GlobalState, account: str, prices: Mapping[str, Dec]
) -> AccountHealth:
    holdings = state.participants.get(account)
    if not holdings:
        return _EMPTY_HEALTH
    power = ZERO
    borrow_value = ZERO
    collateral_value = ZERO
    for symbol, position in holdings.items():
        if position.is_empty():
            continue
        market = state.markets[symbol]
        price = prices.get(symbol)
        if price is None:
            raise MissingPriceError(symbol)
        if not position.ctoken_balance.is_zero():
            base = position.ctoken_balance * market.exchange_rate
            collateral_value = collateral_value + base * price
            power = power + (base * market.collateral_factor) * price
        if not position.borrow_principal.is_zero():
            accrued = position.accrued_borrow(market.borrow_index)
            borrow_value = borrow_value + accrued * price
    ratio = None if borrow_value.is_zero() else power / borrow_value
    return AccountHealth(
        collateral_power_usd=power,
        borrow_value_usd=borrow_value,
        surplus_usd=power - borrow_value,
        collateral_value_usd=collateral_value,
        ratio=ratio,
    )


def account_health(state: GlobalState, account: str) -> AccountHealth:
    """Value one account at current prices.

    Raises MissingPriceError if any market holding a nonzero position for
    this account lacks a price.
    """
    return _health(state, account, state.price_table.prices)


def liquidable_accounts(state: GlobalState) -> dict[str, AccountHealth]:
    """All accounts with strictly negative surplus, keyed by address."""
    result: dict[str, AccountHealth] = {}
    for account in sorted(state.participants):
        health = account_health(state, account)
        if health.liquidable:
            result[account] = health
    return result


def max_repay(state: GlobalState, borrower: str, symbol: str) -> Dec:
    """Close-factor bound on a single liquidation's repay amount."""
    market = state.markets.get(symbol)
    if market is None:
        raise KeyError(f"unknown market {symbol!r}")
    position = state.position(borrower, symbol)
    if position is None:
        return ZERO
    accrued = position.accrued_borrow(market.borrow_index)
    return state.params.close_factor * accrued


@dataclass(frozen=True)
class SeizeQuote:
    """What a liquidator pays, receives, and clears."""

    repay_value_usd: Dec
    seized_value_usd: Dec
    seized_ctokens: Dec
    profit_usd: Dec


def seize_quote(
    repay_value_usd: Dec,
    incentive: Dec,
    collateral_price_usd: Dec,
    exchange_rate: Dec,
) -> SeizeQuote:
    """Collateral seized for a repayment at a premium of ``incentive``.

    Profit equals repay_value * incentive exactly; truncation enters only
    through the cToken conversion.
    """
    if incentive.is_negative():
        raise ValueError("liquidation incentive must be non-negative")
    seized_value = repay_value_usd * (ONE + incentive)
    seized_ctokens = seized_value / (collateral_price_usd * exchange_rate)
    return SeizeQuote(
        repay_value_usd=repay_value_usd,
        seized_value_usd=seized_value,
        seized_ctokens=seized_ctokens,
        profit_usd=seized_value - repay_value_usd,
    )


def seize_quote_at_discount(
    repay_value_usd: Dec,
    discount: Dec,
    collateral_price_usd: Dec,
    exchange_rate: Dec,
) -> SeizeQuote:
    """Same quote with the premium stated as a purchase discount.

    A d-discount liquidator pays (1 - d) of the collateral's value, so the
    seized value is repay / (1 - d). Kept separate from seize_quote because
    common discounts (10%) imply premiums (1/9) that 18-digit fixed point
    cannot represent without losing exactness.
    """
    if discount < ZERO or discount >= ONE:
        raise ValueError("discount must lie in [0, 1)")
    seized_value = repay_value_usd / (ONE - discount)
    seized_ctokens = seized_value / (collateral_price_usd * exchange_rate)
    return SeizeQuote(
        repay_value_usd=repay_value_usd,
        seized_value_usd=seized_value,
        seized_ctokens=seized_ctokens,
        profit_usd=seized_value - repay_value_usd,
    )


@dataclass(frozen=True)
class SensitivityRow:
    """Liquidable exposure after one hypothetical price shock."""

    shock: Dec
    liquidable_accounts: int
    liquidable_collateral_usd: Dec


def price_sensitivity(
    state: GlobalState, symbol: str, shocks: Sequence[Dec]
) -> list[SensitivityRow]:
    """Re-evaluate every account under downward shocks to one asset.

    Each shock s replaces the asset's price with price * (1 - s); rows
    report how many accounts turn liquidable and their unweighted
    collateral value at shocked prices. The state is never modified.
    """
    base_price = state.price_table.get(symbol)
    for shock in shocks:
        if shock < ZERO or shock >= ONE:
            raise ValueError("shocks must lie in [0, 1)")
    rows: list[SensitivityRow] = []
    accounts = sorted(state.participants)
    for shock in shocks:
        shocked = dict(state.price_table.prices)
        shocked[symbol] = base_price * (ONE - shock)
        count = 0
        exposure = ZERO
        for account in accounts:
            health = _health(state, account, shocked)
            if health.liquidable:
                count += 1
                exposure = exposure + health.collateral_value_usd
        rows.append(
            SensitivityRow(
                shock=shock, liquidable_accounts=count, liquidable_collateral_usd=exposure
            )
        )
    return rows


def ratio_buckets(state: GlobalState, thresholds: Sequence[Dec]) -> dict[str, Dec]:
    """Collateral value bucketed by collateralization ratio.

    Buckets partition all participants: "no-borrow" for pure suppliers,
    "<1.00" for liquidable accounts, then half-open ratio intervals up to
    each threshold and an unbounded top bucket. Thresholds must be
    strictly increasing and greater than 1.
    """
    previous = ONE
    for threshold in thresholds:
        if threshold <= previous:
            raise ValueError("thresholds must be strictly increasing and greater than 1")
        previous = threshold

    labels = ["<1.00"]
    lower = "1.00"
    for threshold in thresholds:
        labels.append(f"({lower}, {threshold}]")
        lower = str(threshold)
    labels.append(f"({lower}, inf)")
    labels.append("no-borrow")
    buckets: dict[str, Dec] = {label: ZERO for label in labels}

    for account in sorted(state.participants):
        health = account_health(state, account)
        if health.collateral_value_usd.is_zero() and health.borrow_value_usd.is_zero():
            continue
        if health.ratio is None:
            label = "no-borrow"
        elif health.liquidable:
            label = "<1.00"
        else:
            label = labels[len(thresholds) + 1]  # top bucket unless a threshold catches it
            for index, threshold in enumerate(thresholds):
                if health.ratio <= threshold:
                    label = labels[index + 1]
                    break
        buckets[label] = buckets[label] + health.collateral_value_usd
    return buckets
