import pytest

from layoutlab import (
    ConstraintSet,
    DecodeConfig,
    ExhaustedRetries,
    NonEmptyRequired,
    NumericalConstraint,
    ParseFailure,
    PositionBucket,
    ScriptedBackend,
    SpatialConstraint,
    bucket_of,
    build_layout,
    build_numeric_prefixes,
    build_planning_prompt,
    build_spatial_prefixes,
    decode_layout,
    parse_box_line,
    validate_layout_against_constraints,
)

from conftest import box


class TestNumericPrefixes:
    def test_expansion(self):
        plan = build_numeric_prefixes(
            [NumericalConstraint("apple", 2), NumericalConstraint("banana", 1)]
        )
        assert plan.prefixes == ("apple:", "apple:", "banana:")

    def test_five_spoons_four_oranges(self):
        plan = build_numeric_prefixes(
            [NumericalConstraint("spoon", 5), NumericalConstraint("orange", 4)]
        )
        assert len(plan) == 9
        assert plan.prefixes[:5] == ("spoon:",) * 5
        assert plan.prefixes[5:] == ("orange:",) * 4

    def test_singleton(self):
        assert build_numeric_prefixes([NumericalConstraint("cat", 1)]).prefixes == ("cat:",)

    def test_empty_rejected(self):
        with pytest.raises(NonEmptyRequired):
            build_numeric_prefixes([])


class TestSpatialPrefixes:
    def test_format(self):
        plan = build_spatial_prefixes(
            [SpatialConstraint("apple", PositionBucket.TOP_LEFT)]
        )
        assert plan.prefixes == ("apple(top-left):",)

    def test_order_preserved(self):
        plan = build_spatial_prefixes(
            [
                SpatialConstraint("dog", PositionBucket.LEFT),
                SpatialConstraint("person", PositionBucket.CENTER),
            ]
        )
        assert plan.prefixes == ("dog(left):", "person(center):")

    def test_empty_rejected(self):
        with pytest.raises(NonEmptyRequired):
            build_spatial_prefixes([])


class TestPlanningPrompt:
    def _plan(self):
        return build_numeric_prefixes([NumericalConstraint("apple", 1)])

    def test_negation_toggle_is_exactly_one_block(self):
        with_neg = build_planning_prompt("a scene", self._plan(), include_negation=True)
        without = build_planning_prompt("a scene", self._plan(), include_negation=False)
        assert "Negation example:" in with_neg
        assert "Negation example:" not in without
        start = with_neg.index("Negation example:")
        end = with_neg.index("Now the task.")
        assert with_neg[:start] + with_neg[end:] == without

    @pytest.mark.parametrize("count", [1, 2, 3, 4])
    def test_exemplar_count(self, count):
        prompt = build_planning_prompt(
            "a scene", self._plan(), exemplar_count=count, include_negation=False
        )
        assert prompt.count("Example:") == count

    def test_contains_meta_prompt_and_summary(self):
        plan = build_spatial_prefixes([SpatialConstraint("dog", PositionBucket.LEFT)])
        prompt = build_planning_prompt("a dog outside", plan)
        assert "Description: a dog outside" in prompt
        assert "Objects: dog(left)" in prompt
        assert prompt.endswith("Layout:\n")

    def test_deterministic(self):
        a = build_planning_prompt("a scene", self._plan())
        b = build_planning_prompt("a scene", self._plan())
        assert a == b


class TestParseBoxLine:
    def test_canonical(self):
        assert parse_box_line("(10, 20, 110, 220)") == (10, 20, 110, 220)

    def test_trailing_text(self):
        assert parse_box_line(" (0,0,512,512) extra words") == (0, 0, 512, 512)

    def test_range_check(self):
        with pytest.raises(ParseFailure):
            parse_box_line("(10,20,600,220)", coordinate_range=512)

    def test_negative_rejected(self):
        with pytest.raises(ParseFailure):
            parse_box_line("(-5, 0, 10, 10)")

    def test_no_tuple(self):
        with pytest.raises(ParseFailure):
            parse_box_line("no coordinates here")

    def test_missing_close_paren(self):
        assert parse_box_line("(10, 20, 110, 220") == (10, 20, 110, 220)

    def test_first_tuple_wins(self):
        assert parse_box_line("(1,2,3,4) (5,6,7,8)") == (1, 2, 3, 4)


class TestDecodeLayout:
    def test_count_equals_prefix_count(self):
        plan = build_numeric_prefixes([NumericalConstraint("apple", 2)])
        backend = ScriptedBackend(["(10,10,100,100)", "(200,200,300,300)"])
        report = decode_layout(backend, "two apples", plan)
        assert [obj.name for obj in report.layout.objects] == ["apple", "apple"]
        assert report.layout.objects[0].instance_index == 0
        assert report.layout.objects[1].instance_index == 1
        assert report.violations == []
        assert report.retries_used == 0

    def test_bucket_retry(self):
        # First completion lands in bottom-right, second in top-left.
        plan = build_spatial_prefixes([SpatialConstraint("apple", PositionBucket.TOP_LEFT)])
        backend = ScriptedBackend(["(400,400,500,500)", "(10,10,120,120)"])
        config = DecodeConfig(enforce_spatial_bucket=True)
        report = decode_layout(backend, "an apple", plan, config)
        assert report.retries_used == 1
        assert report.violations == []
        assert bucket_of(report.layout.objects[0].box) is PositionBucket.TOP_LEFT

    def test_forced_prefix_is_authoritative(self):
        # The backend may write any name; only the coordinates are read.
        plan = build_numeric_prefixes([NumericalConstraint("apple", 1)])
        backend = ScriptedBackend(["banana: (1,2,3,4)"])
        report = decode_layout(backend, "an apple", plan)
        assert report.layout.objects[0].name == "apple"

    def test_exhausted_retries_raises_without_any_parse(self):
        plan = build_numeric_prefixes([NumericalConstraint("apple", 1)])
        backend = ScriptedBackend(["nope"] * 4)
        with pytest.raises(ExhaustedRetries):
            decode_layout(backend, "an apple", plan, DecodeConfig(max_retries_per_box=3))

    def test_last_parse_accepted_with_violation(self):
        # Never matches the bucket; the last parseable box is kept and flagged.
        plan = build_spatial_prefixes([SpatialConstraint("apple", PositionBucket.TOP_LEFT)])
        backend = ScriptedBackend(["(400,400,500,500)"] * 3)
        config = DecodeConfig(max_retries_per_box=2, enforce_spatial_bucket=True)
        report = decode_layout(backend, "an apple", plan, config)
        assert report.retries_used == 2
        assert len(report.violations) == 1
        assert report.violations[0].kind == "bucket"
        assert len(report.layout.objects) == 1

    def test_spatial_fallback_box_when_nothing_parses(self):
        plan = build_spatial_prefixes([SpatialConstraint("apple", PositionBucket.TOP_LEFT)])
        backend = ScriptedBackend(["nope"] * 3)
        config = DecodeConfig(max_retries_per_box=2, enforce_spatial_bucket=True)
        report = decode_layout(backend, "an apple", plan, config)
        assert len(report.layout.objects) == 1
        assert bucket_of(report.layout.objects[0].box) is PositionBucket.TOP_LEFT
        assert report.violations[0].kind == "fallback"

    def test_deterministic_reports(self):
        plan = build_numeric_prefixes([NumericalConstraint("apple", 2)])
        script = ["(10,10,100,100)", "(200,200,300,300)"]
        first = decode_layout(ScriptedBackend(script), "two apples", plan)
        second = decode_layout(ScriptedBackend(script), "two apples", plan)
        assert first == second

    def test_growing_context_sees_previous_boxes(self):
        plan = build_numeric_prefixes([NumericalConstraint("apple", 2)])
        contexts = []

        class SpyBackend:
            backend_id = "spy"

            def complete(self, request):
                contexts.append(request.context)
                from layoutlab import GenerationResponse

                return GenerationResponse(" (10,10,100,100)", "spy")

        decode_layout(SpyBackend(), "two apples", plan)
        # Count within the task section; exemplar fixtures may also mention apples.
        task_section = contexts[1][contexts[1].index("Now the task.") :]
        assert task_section.count("apple:") == 2
        assert "(10,10,100,100)" in task_section


class TestValidate:
    def test_exact_numerical_match(self):
        layout = build_layout(
            [("apple", box(0.1, 0.1, 0.3, 0.3)), ("apple", box(0.5, 0.5, 0.7, 0.7))]
        )
        constraints = ConstraintSet.from_numerical([NumericalConstraint("apple", 2)])
        assert validate_layout_against_constraints(layout, constraints) == []

    def test_count_deficit(self):
        layout = build_layout([("apple", box(0.1, 0.1, 0.3, 0.3))])
        constraints = ConstraintSet.from_numerical([NumericalConstraint("apple", 2)])
        violations = validate_layout_against_constraints(layout, constraints)
        assert len(violations) == 1
        assert violations[0].kind == "count"
        assert "expected 2 got 1" in violations[0].message

    def test_unexpected_category(self):
        layout = build_layout(
            [("apple", box(0.1, 0.1, 0.3, 0.3)), ("pear", box(0.5, 0.5, 0.7, 0.7))]
        )
        constraints = ConstraintSet.from_numerical([NumericalConstraint("apple", 1)])
        violations = validate_layout_against_constraints(layout, constraints)
        assert [v.category for v in violations] == ["pear"]

    def test_bucket_violation(self):
        layout = build_layout([("apple", box(0.4, 0.4, 0.6, 0.6))])
        constraints = ConstraintSet.from_spatial(
            [SpatialConstraint("apple", PositionBucket.TOP_LEFT)]
        )
        violations = validate_layout_against_constraints(layout, constraints)
        assert violations[0].kind == "bucket"
        assert violations[0].actual == "center"

    def test_spatial_order(self):
        layout = build_layout(
            [("person", box(0.1, 0.1, 0.3, 0.3)), ("dog", box(0.4, 0.4, 0.6, 0.6))]
        )
        constraints = ConstraintSet.from_spatial(
            [
                SpatialConstraint("dog", PositionBucket.TOP_LEFT),
                SpatialConstraint("person", PositionBucket.CENTER),
            ]
        )
        violations = validate_layout_against_constraints(layout, constraints)
        assert {v.kind for v in violations} == {"order"}
