import pytest
from hypothesis import given
from hypothesis import strategies as st

from layoutlab import (
    ConstraintSet,
    NonEmptyRequired,
    NumericalConstraint,
    ParseFailure,
    PositionBucket,
    ReasoningRequest,
    ReasoningTask,
    SpatialConstraint,
    build_reasoning_prompt,
    canonical_category,
    parse_numerical,
    parse_spatial,
    render_numerical,
    render_spatial,
)


class TestPromptBuilder:
    def test_numerical_exemplar_answer_line(self):
        request = ReasoningRequest("seven bikes", ReasoningTask.NUMERICAL, exemplar_count=1)
        prompt = build_reasoning_prompt(request)
        assert "Answer: 5 fire hydrant, 4 cell phone" in prompt
        assert prompt.count("Example:") == 1

    def test_spatial_exemplar_answer_line(self):
        request = ReasoningRequest("a dog park", ReasoningTask.SPATIAL, exemplar_count=1)
        prompt = build_reasoning_prompt(request)
        assert "Answer: dog, left; person, center; cat, center; airplane, right;" in prompt

    @pytest.mark.parametrize("count", [1, 2, 3, 4])
    def test_exemplar_count_knob(self, count):
        request = ReasoningRequest("a scene", ReasoningTask.NUMERICAL, exemplar_count=count)
        assert build_reasoning_prompt(request).count("Example:") == count

    def test_meta_prompt_present(self):
        request = ReasoningRequest("three red kites", ReasoningTask.NUMERICAL)
        assert "Description: three red kites" in build_reasoning_prompt(request)

    def test_deterministic(self):
        request = ReasoningRequest("a scene", ReasoningTask.SPATIAL, exemplar_count=3)
        assert build_reasoning_prompt(request) == build_reasoning_prompt(request)

    def test_negation_ignored_with_warning(self, caplog):
        request = ReasoningRequest(
            "a scene", ReasoningTask.NUMERICAL, include_negation=True
        )
        bare = ReasoningRequest("a scene", ReasoningTask.NUMERICAL, include_negation=False)
        with caplog.at_level("WARNING"):
            assert build_reasoning_prompt(request) == build_reasoning_prompt(bare)
        assert any("negation" in message for message in caplog.messages)

    def test_exemplar_count_range(self):
        with pytest.raises(ValueError):
            ReasoningRequest("a scene", ReasoningTask.NUMERICAL, exemplar_count=0)
        with pytest.raises(ValueError):
            ReasoningRequest("a scene", ReasoningTask.NUMERICAL, exemplar_count=5)


class TestParseNumerical:
    def test_paper_answer_line(self):
        got = parse_numerical("5 fire hydrant, 4 cell phone")
        assert got == (
            NumericalConstraint("fire hydrant", 5),
            NumericalConstraint("cell phone", 4),
        )

    def test_single_pair(self):
        assert parse_numerical("1 apple") == (NumericalConstraint("apple", 1),)

    def test_duplicate_merge_by_summation(self):
        assert parse_numerical("2 apples, 3 apple") == (NumericalConstraint("apple", 5),)

    def test_plural_normalization(self):
        got = parse_numerical("3 boxes, 2 puppies, 4 mice")
        assert got == (
            NumericalConstraint("box", 3),
            NumericalConstraint("puppy", 2),
            NumericalConstraint("mouse", 4),
        )

    def test_tolerates_prose(self):
        assert parse_numerical("there are 2 dogs") == (NumericalConstraint("dog", 2),)

    def test_zero_quantity_dropped(self):
        assert parse_numerical("0 cats, 2 dogs") == (NumericalConstraint("dog", 2),)

    def test_failure_on_no_pairs(self):
        with pytest.raises(ParseFailure):
            parse_numerical("a lovely day outside")


class TestParseSpatial:
    def test_paper_answer_line(self):
        got = parse_spatial("dog, left; person, center; cat, center; airplane, right;")
        assert [c.object_name for c in got] == ["dog", "person", "cat", "airplane"]
        assert [c.position for c in got] == [
            PositionBucket.LEFT,
            PositionBucket.CENTER,
            PositionBucket.CENTER,
            PositionBucket.RIGHT,
        ]

    def test_single_item(self):
        assert parse_spatial("apple, top-left;") == (
            SpatialConstraint("apple", PositionBucket.TOP_LEFT),
        )

    def test_unknown_position_token(self):
        with pytest.raises(ParseFailure):
            parse_spatial("apple, underneath;")

    def test_empty_answer(self):
        with pytest.raises(ParseFailure):
            parse_spatial("; ;")

    def test_loose_token_spelling(self):
        got = parse_spatial("lamp, top left; rug, bottom_right;")
        assert got[0].position is PositionBucket.TOP_LEFT
        assert got[1].position is PositionBucket.BOTTOM_RIGHT

    def test_duplicate_names_allowed(self):
        got = parse_spatial("cat, left; cat, right;")
        assert len(got) == 2


class TestConstraintSet:
    def test_exactly_one_side(self):
        with pytest.raises(ValueError):
            ConstraintSet(numerical=None, spatial=None)
        with pytest.raises(ValueError):
            ConstraintSet(
                numerical=(NumericalConstraint("a", 1),),
                spatial=(SpatialConstraint("b", PositionBucket.TOP),),
            )

    def test_non_empty(self):
        with pytest.raises(NonEmptyRequired):
            ConstraintSet(numerical=())

    def test_duplicate_categories_rejected(self):
        with pytest.raises(ValueError):
            ConstraintSet.from_numerical(
                [NumericalConstraint("a", 1), NumericalConstraint("a", 2)]
            )

    def test_dict_round_trip(self):
        numeric = ConstraintSet.from_numerical([NumericalConstraint("apple", 2)])
        assert ConstraintSet.from_dict(numeric.to_dict()) == numeric
        spatial = ConstraintSet.from_spatial(
            [SpatialConstraint("dog", PositionBucket.LEFT)]
        )
        assert ConstraintSet.from_dict(spatial.to_dict()) == spatial


class TestCanonicalization:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Apples", "apple"),
            ("fire  hydrants", "fire hydrant"),
            ("people", "person"),
            ("glass", "glass"),
            ("sheep", "sheep"),
            ("benches", "bench"),
        ],
    )
    def test_canonical_category(self, raw, expected):
        assert canonical_category(raw) == expected


_CATEGORIES = ["apple", "dog", "person", "fire hydrant", "chair", "boat", "kite"]


@given(
    constraints=st.lists(
        st.tuples(st.sampled_from(_CATEGORIES), st.integers(min_value=1, max_value=9)),
        min_size=1,
        max_size=5,
        unique_by=lambda pair: pair[0],
    )
)
def test_numerical_render_parse_round_trip(constraints):
    original = tuple(NumericalConstraint(c, q) for c, q in constraints)
    assert parse_numerical(render_numerical(original)) == original


@given(
    constraints=st.lists(
        st.tuples(st.sampled_from(_CATEGORIES), st.sampled_from(list(PositionBucket))),
        min_size=1,
        max_size=5,
    )
)
def test_spatial_render_parse_round_trip(constraints):
    original = tuple(SpatialConstraint(name, pos) for name, pos in constraints)
    assert parse_spatial(render_spatial(original)) == original
