from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from eltforge.intent import (
    AmbiguousUtteranceError,
    ParsedUtterance,
    SlotAssignment,
    SlotStatus,
    TaskSpec,
    Transcript,
    UtteranceFormatError,
    distill,
    sufficiency,
    update_slots,
)


def utterance(*assignments) -> ParsedUtterance:
    return ParsedUtterance.from_payload({"assignments": list(assignments)})


class TestUpdateSlots:
    def test_destination_rename_latest_statement_wins(self):
        spec = TaskSpec()
        spec = update_slots(
            spec,
            utterance(
                {"slot": "destination", "value": {"kind": "object_store_dir", "name": "cve-bench-new"}}
            ),
        )
        assert spec.destination.name == "cve-bench-new"
        spec = update_slots(spec, utterance({"slot": "destination", "value": {"name": "elt-bench-new"}}))
        assert spec.destination.name == "elt-bench-new"
        # partial revision keeps the untouched fields
        assert spec.destination.kind == "object_store_dir"

    def test_transforms_none_sets_explicit_none(self):
        spec = update_slots(TaskSpec(), utterance({"slot": "transforms", "explicit_none": True}))
        assert spec.status("transforms") is SlotStatus.EXPLICIT_NONE
        assert spec.transforms == []

    def test_empty_utterance_is_identity(self):
        spec = TaskSpec()
        assert update_slots(spec, utterance()) is spec

    def test_conflicting_assignments_rejected(self):
        with pytest.raises(AmbiguousUtteranceError):
            update_slots(
                TaskSpec(),
                utterance(
                    {"slot": "destination", "value": {"kind": "table_store", "name": "a"}},
                    {"slot": "destination", "value": {"kind": "table_store", "name": "b"}},
                ),
            )

    def test_duplicate_identical_assignments_allowed(self):
        a = {"slot": "transforms", "explicit_none": True}
        spec = update_slots(TaskSpec(), utterance(a, a))
        assert spec.status("transforms") is SlotStatus.EXPLICIT_NONE

    def test_original_spec_never_mutated(self):
        spec = TaskSpec()
        update_slots(
            spec, utterance({"slot": "sources", "value": [{"kind": "local_dir", "locator": "x"}]})
        )
        assert spec.sources == []
        assert spec.status("sources") is SlotStatus.UNFILLED

    def test_bad_payload_shapes(self):
        with pytest.raises(UtteranceFormatError):
            ParsedUtterance.from_payload({"assignments": [{"value": 1}]})
        with pytest.raises(UtteranceFormatError):
            update_slots(TaskSpec(), utterance({"slot": "sources", "value": []}))
        with pytest.raises(UtteranceFormatError):
            update_slots(TaskSpec(), utterance({"slot": "destination", "value": {"name": "x"}}))


class TestSufficiency:
    def test_all_slots_filled(self):
        spec = update_slots(
            TaskSpec(),
            utterance(
                {"slot": "sources", "value": [{"kind": "local_dir", "locator": "in"}]},
                {"slot": "destination", "value": {"kind": "local_dir", "name": "out"}},
                {"slot": "transforms", "value": [{"op": "dedupe"}]},
            ),
        )
        assert sufficiency(spec).sufficient

    def test_only_sources_filled_reports_ordered_missing(self):
        spec = update_slots(
            TaskSpec(), utterance({"slot": "sources", "value": [{"kind": "local_dir", "locator": "in"}]})
        )
        result = sufficiency(spec)
        assert not result.sufficient
        assert result.missing == ("destination", "transforms")

    def test_explicit_none_transforms_is_sufficient(self):
        spec = update_slots(
            TaskSpec(),
            utterance(
                {"slot": "sources", "value": [{"kind": "git_fixture", "locator": "repo"}]},
                {"slot": "destination", "value": {"kind": "object_store_dir", "name": "bucket"}},
                {"slot": "transforms", "explicit_none": True},
            ),
        )
        assert sufficiency(spec).sufficient

    def test_explicit_none_destination_still_missing(self):
        spec = update_slots(TaskSpec(), utterance({"slot": "destination", "explicit_none": True}))
        assert "destination" in sufficiency(spec).missing


slot_value = st.sampled_from(
    [
        ("sources", {"slot": "sources", "value": [{"kind": "local_dir", "locator": "a"}]}),
        ("destination", {"slot": "destination", "value": {"kind": "local_dir", "name": "out"}}),
        ("transforms", {"slot": "transforms", "value": [{"op": "dedupe"}]}),
        ("transforms", {"slot": "transforms", "explicit_none": True}),
        ("constraints", {"slot": "constraints", "value": {"note": "x"}}),
    ]
)


@given(st.lists(slot_value, max_size=8))
def test_filled_slots_stay_filled_without_revision(entries):
    spec = TaskSpec()
    filled: set[str] = set()
    for _slot, payload in entries:
        spec = update_slots(spec, utterance(payload))
        for s in ("sources", "destination", "transforms"):
            if spec.status(s) is not SlotStatus.UNFILLED:
                filled.add(s)
        # a filled slot never silently reverts to unfilled
        for s in filled:
            assert spec.status(s) is not SlotStatus.UNFILLED


@given(st.lists(slot_value, min_size=1, max_size=6))
def test_sufficiency_never_reports_a_just_filled_slot(entries):
    spec = TaskSpec()
    for _slot, payload in entries:
        spec = update_slots(spec, utterance(payload))
        assert _slot not in sufficiency(spec).missing


class TestDistill:
    def _long_transcript(self, turns: int = 50) -> Transcript:
        t = Transcript()
        for i in range(turns):
            role = "user" if i % 2 == 0 else "assistant"
            t = t.append(role, f"turn {i}: " + "x" * 40)
        return t

    def test_under_budget_unchanged(self):
        t = Transcript().append("user", "hello")
        assert distill(t, 4096) is t

    def test_forced_distillation_keeps_last_user_turn(self):
        t = self._long_transcript()
        out = distill(t, budget=20, spec=TaskSpec())
        assert out.distilled_summary is not None
        last_user = [turn for turn in t.turns if turn.role == "user"][-1]
        assert last_user in out.turns
        assert len(out.turns) <= 5

    def test_distill_reduces_estimate_or_leaves_protected_only(self):
        t = self._long_transcript()
        out = distill(t, budget=200, spec=TaskSpec())
        assert out.token_estimate <= 200 or len(out.turns) <= 5

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            distill(Transcript(), 0)

    @given(
        st.lists(
            st.tuples(st.sampled_from(["user", "assistant", "system"]), st.text(max_size=80)),
            max_size=30,
        ),
        st.integers(min_value=1, max_value=500),
    )
    def test_distill_idempotent_at_fixed_budget(self, turns, budget):
        t = Transcript(turns=tuple())
        for role, text in turns:
            t = t.append(role, text)
        spec = TaskSpec()
        once = distill(t, budget, spec)
        twice = distill(once, budget, spec)
        assert once == twice
