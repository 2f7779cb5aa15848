import json

import pytest

from plfkit.analytics import concentration, track_efficiency
from plfkit.engine import replay
from plfkit.events import read_events
from plfkit.fixedpoint import Dec
from plfkit.model import GlobalState, validate_state
from plfkit.risk import liquidable_accounts
from plfkit.scenarios import (
    ANNOTATION_FORMAT_VERSION,
    ConcentrationPlan,
    GenerationError,
    MarketSpec,
    PlannedLiquidation,
    PricePath,
    ScenarioSpec,
    default_spec,
    generate,
    ground_truth,
    ground_truth_from_dict,
    ground_truth_to_dict,
    spec_from_dict,
    spec_to_dict,
)
from streams import ACCT_A, hand_fixture

PLANNED = "0x" + "ab" * 20


def gen(spec, tmp_path, stem="scn"):
    return generate(spec, str(tmp_path / f"{stem}.jsonl"), str(tmp_path / f"{stem}.json"))


class TestSpecSerialization:
    def test_round_trip(self):
        spec = default_spec(9, event_count=150)
        spec.planned_concentration = ConcentrationPlan("borrow", (Dec("0.3"), Dec("0.2")))
        rebuilt = spec_from_dict(spec_to_dict(spec))
        assert spec_to_dict(rebuilt) == spec_to_dict(spec)

    def test_defaults_fill_in(self):
        data = spec_to_dict(default_spec(1))
        del data["close_factor"]
        del data["planned_concentration"]
        spec = spec_from_dict(data)
        assert spec.close_factor == Dec("0.5")
        assert spec.planned_concentration is None


class TestSpecValidation:
    def base(self, **overrides):
        spec = default_spec(1, event_count=100)
        for name, value in overrides.items():
            setattr(spec, name, value)
        return spec

    @pytest.mark.parametrize("overrides,message", [
        ({"seed": -1}, "64-bit"),
        ({"seed": 2 ** 64}, "64-bit"),
        ({"accounts": 0}, "account"),
        ({"event_count": 19}, "at least 20"),
        ({"markets": []}, "market"),
        ({"checkpoint_count": 0}, "checkpoint_count"),
        ({"checkpoint_count": 51}, "checkpoint_count"),
    ])
    def test_scalar_bounds(self, tmp_path, overrides, message):
        with pytest.raises(GenerationError, match=message):
            gen(self.base(**overrides), tmp_path)

    def test_reserved_symbols_rejected(self, tmp_path):
        spec = self.base()
        spec.markets = spec.markets + [
            MarketSpec("PLD", Dec("0.02"), Dec("0.5"), PricePath(Dec(1))),
        ]
        with pytest.raises(GenerationError, match="reserved"):
            gen(spec, tmp_path)

    def test_duplicate_symbols_rejected(self, tmp_path):
        spec = self.base()
        spec.markets = spec.markets + [spec.markets[0]]
        with pytest.raises(GenerationError, match="unique"):
            gen(spec, tmp_path)

    def test_bad_price_bounds_rejected(self, tmp_path):
        spec = self.base()
        spec.markets = [
            MarketSpec("DAI", Dec("0.02"), Dec("0.75"),
                       PricePath(Dec(1), floor=Dec(2))),
        ]
        with pytest.raises(GenerationError, match="floor"):
            gen(spec, tmp_path)

    def test_plan_account_must_be_address(self, tmp_path):
        spec = self.base(planned_liquidations=[PlannedLiquidation("0xnope", 10, 12)])
        with pytest.raises(GenerationError, match="address"):
            gen(spec, tmp_path)

    def test_duplicate_plan_accounts_rejected(self, tmp_path):
        plan = PlannedLiquidation(PLANNED, 10, 12)
        spec = self.base(planned_liquidations=[plan, PlannedLiquidation(PLANNED, 20, 22)])
        with pytest.raises(GenerationError, match="more than one plan"):
            gen(spec, tmp_path)

    def test_liquidation_cannot_precede_liquidable(self, tmp_path):
        spec = self.base(planned_liquidations=[PlannedLiquidation(PLANNED, 12, 10)])
        with pytest.raises(GenerationError, match="precede"):
            gen(spec, tmp_path)

    @pytest.mark.parametrize("shares", [(), ("1",), ("0",), ("0.2", "0.3"), ("0.6", "0.5")])
    def test_bad_share_vectors_rejected(self, tmp_path, shares):
        spec = self.base(planned_concentration=ConcentrationPlan(
            "supply", tuple(Dec(s) for s in shares)))
        with pytest.raises(GenerationError):
            gen(spec, tmp_path)


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        spec = default_spec(5, event_count=120)
        one = gen(spec, tmp_path, "one")
        two = gen(spec, tmp_path, "two")
        assert (tmp_path / "one.jsonl").read_bytes() == (tmp_path / "two.jsonl").read_bytes()
        assert (tmp_path / "one.json").read_bytes() == (tmp_path / "two.json").read_bytes()
        assert one.final_block == two.final_block

    def test_different_seeds_diverge(self, tmp_path):
        gen(default_spec(5, event_count=120), tmp_path, "one")
        gen(default_spec(6, event_count=120), tmp_path, "other")
        assert (tmp_path / "one.jsonl").read_bytes() != (tmp_path / "other.jsonl").read_bytes()


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("scenario")
    spec = default_spec(1, event_count=150)
    result = gen(spec, tmp)
    events = read_events(result.events_path)
    with open(result.annotations_path, "r", encoding="ascii") as handle:
        annotation = json.load(handle)
    return result, events, annotation


class TestGeneratedStream:
    def test_stream_shape(self, scenario):
        result, events, annotation = scenario
        assert result.event_count == 150 == len(events)
        assert annotation["format_version"] == ANNOTATION_FORMAT_VERSION
        assert annotation["seed"] == 1
        assert annotation["event_count"] == 150
        assert annotation["final_block"] == result.final_block
        assert events[-1].key.block == result.final_block

    def test_replays_cleanly(self, scenario):
        _, events, _ = scenario
        state, report = replay(GlobalState.fresh(), events)
        assert report.warnings == []
        assert validate_state(state) == []

    def test_checkpoints_match_engine(self, scenario):
        _, events, annotation = scenario
        truth = ground_truth_from_dict(annotation)
        state = GlobalState.fresh()
        position = 0
        for checkpoint in truth.checkpoints:
            while position < len(events) and events[position].key.block <= checkpoint.block:
                replay(state, [events[position]])
                position += 1
            assert tuple(sorted(liquidable_accounts(state))) == checkpoint.liquidable
            for symbol, check in checkpoint.markets.items():
                market = state.markets[symbol]
                assert market.total_ctoken_supply == check.total_ctoken_supply
                assert market.total_borrows == check.total_borrows
                ctoken_sum = Dec(0)
                accrued_sum = Dec(0)
                for holdings in state.participants.values():
                    pos = holdings.get(symbol)
                    if pos is None:
                        continue
                    ctoken_sum += pos.ctoken_balance
                    accrued_sum += pos.accrued_borrow(market.borrow_index)
                assert ctoken_sum == check.participant_ctoken_sum
                assert accrued_sum == check.participant_accrued_sum

    def test_efficiency_records_match_tracker(self, scenario):
        _, events, annotation = scenario
        truth = ground_truth_from_dict(annotation)
        timeline = track_efficiency(GlobalState.fresh(), events)
        assert len(timeline.liquidations) == len(truth.efficiency)
        for record, check in zip(timeline.liquidations, truth.efficiency):
            assert record.account == check.account
            assert record.key.block == check.liquidation_block
            assert record.blocks_elapsed == check.blocks_elapsed
            assert record.seized_value_usd == check.seized_value_usd
            assert (record.warning is not None) == check.warned

    def test_planned_liquidation_lands_on_schedule(self, scenario):
        _, _, annotation = scenario
        assert annotation["planned_liquidations"] == [
            {"account": PLANNED, "liquidable_block": 40, "liquidation_block": 42},
        ]
        records = annotation["efficiency_records"]
        planned = [r for r in records if r["account"] == PLANNED]
        assert len(planned) == 1
        assert planned[0]["start_block"] == 40
        assert planned[0]["liquidation_block"] == 42
        assert planned[0]["blocks_elapsed"] == 2
        assert not planned[0]["warned"]


class TestConcentrationPlanting:
    def test_supply_share_recovered(self, tmp_path):
        spec = default_spec(7, event_count=200)
        spec.planned_concentration = ConcentrationPlan("supply", (Dec("0.274"),))
        result = gen(spec, tmp_path)
        state, _ = replay(GlobalState.fresh(), read_events(result.events_path))
        report = concentration(state, "supply", top_n=1)
        assert abs(report.top1_share - Dec("0.274")) <= Dec("0.000000000001")

    def test_borrow_share_recovered(self, tmp_path):
        spec = default_spec(7, event_count=200)
        spec.planned_concentration = ConcentrationPlan("borrow", (Dec("0.371"),))
        result = gen(spec, tmp_path)
        state, _ = replay(GlobalState.fresh(), read_events(result.events_path))
        report = concentration(state, "borrow", top_n=1)
        assert abs(report.top1_share - Dec("0.371")) <= Dec("0.000000000001")

    def test_two_whale_ladder(self, tmp_path):
        spec = default_spec(3, event_count=200)
        spec.planned_concentration = ConcentrationPlan("supply", (Dec("0.4"), Dec("0.25")))
        result = gen(spec, tmp_path)
        state, _ = replay(GlobalState.fresh(), read_events(result.events_path))
        report = concentration(state, "supply", top_n=2)
        tolerance = Dec("0.000000000001")
        assert abs(report.rows[0].share - Dec("0.4")) <= tolerance
        assert abs(report.rows[1].share - Dec("0.25")) <= tolerance


class TestGroundTruthOracle:
    """The naive bookkeeping must agree with the hand-computed fixture."""

    def test_hand_fixture_checkpoints(self):
        truth = ground_truth(hand_fixture(), [4, 10, 13])
        by_block = {cp.block: cp for cp in truth.checkpoints}
        assert set(by_block) == {4, 10, 13}

        at4 = by_block[4]
        assert at4.liquidable == ()
        assert at4.markets["DAI"].total_borrows == Dec("115.5")
        assert at4.markets["DAI"].participant_accrued_sum == Dec("115.5")
        assert at4.markets["DAI"].total_ctoken_supply == Dec(500)

        at10 = by_block[10]
        assert at10.liquidable == (ACCT_A,)

        at13 = by_block[13]
        assert at13.liquidable == ()
        assert at13.markets["DAI"].total_borrows == Dec(210)
        assert at13.markets["DAI"].participant_accrued_sum == Dec(210)
        assert at13.markets["ETH"].total_ctoken_supply == Dec(1000)
        assert at13.markets["ETH"].participant_ctoken_sum == Dec(1000)

    def test_hand_fixture_efficiency(self):
        truth = ground_truth(hand_fixture(), [13])
        assert len(truth.efficiency) == 1
        record = truth.efficiency[0]
        assert record.account == ACCT_A
        assert record.start_block == 10
        assert record.liquidation_block == 12
        assert record.blocks_elapsed == 2
        assert record.seized_value_usd == Dec("109.99999999999999998")
        assert not record.warned

    def test_checkpoint_beyond_stream_sees_final_state(self):
        truth = ground_truth(hand_fixture(), [999])
        assert truth.checkpoints[0].block == 999
        assert truth.checkpoints[0].markets["DAI"].total_borrows == Dec(210)

    def test_dict_round_trip(self):
        truth = ground_truth(hand_fixture(), [4, 13])
        rebuilt = ground_truth_from_dict(ground_truth_to_dict(truth))
        assert rebuilt == truth
