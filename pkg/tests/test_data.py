import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualitymine import bundled
from qualitymine.data import (Column, Dataset, QualityScoreSpec, compose_quality_score, dump_table,
                              impute_missing, load_reference, load_table, split_indices,
                              split_train_test)
from qualitymine.errors import (CellError, ImputationError, ParseError, ReferenceLookupError,
                                SchemaError, ScoreRangeError, SpecError, SplitError)

SCHEMA = {"a": "input", "b": "input", "y": "response"}


def test_design_file_loads_17_rows_without_gaps():
    d = bundled.design_dataset()
    assert d.n_rows == 17
    assert d.input_names == list(bundled.FACTOR_NAMES)
    assert d.response_name == bundled.RESPONSE_NAME
    assert sum(c.n_missing for c in d.columns) == 0


def test_header_only_gives_empty_dataset():
    d = load_table("a,b,y\n", SCHEMA)
    assert d.n_rows == 0
    assert d.column_names == ["a", "b", "y"]


def test_blank_cell_is_masked_at_its_coordinate():
    d = load_table("a,b,y\n1,2,3\n4,,6\n7,8,9\n", SCHEMA)
    masks = np.array([c.missing_mask for c in d.columns])
    assert masks.sum() == 1
    assert masks[1, 1]
    assert np.isnan(d["b"].values[1])


def test_custom_missing_token():
    d = load_table("a,b,y\n1,NA,3\n", SCHEMA, missing_token="NA")
    assert d["b"].n_missing == 1


def test_bytes_and_file_objects_are_accepted():
    text = "a,b,y\n1,2,3\n"
    assert load_table(text.encode(), SCHEMA) == load_table(io.StringIO(text), SCHEMA)


def test_wrong_field_count_reports_line():
    with pytest.raises(ParseError) as err:
        load_table("a,b,y\n1,2,3\n4,5\n", SCHEMA)
    assert err.value.line == 3


def test_schema_must_cover_header_exactly():
    with pytest.raises(SchemaError):
        load_table("a,b,y\n1,2,3\n", {"a": "input", "b": "input"})
    with pytest.raises(SchemaError):
        load_table("a,b,y\n1,2,3\n", {**SCHEMA, "zzz": "input"})


def test_non_numeric_cell_reports_coordinates():
    with pytest.raises(CellError) as err:
        load_table("a,b,y\n1,2,3\n4,x,6\n", SCHEMA)
    assert (err.value.row, err.value.column) == (1, "b")


def test_dataset_invariants():
    a = Column.from_values("a", [1.0, 2.0])
    with pytest.raises(SchemaError):
        Dataset("t", [a, Column.from_values("b", [1.0])])
    with pytest.raises(SchemaError):
        Dataset("t", [a, Column.from_values("a", [1.0, 2.0])])
    with pytest.raises(SchemaError):
        Dataset("t", [Column.from_values("y", [1.0], "response"),
                      Column.from_values("z", [1.0], "response")])


def test_column_values_are_read_only():
    d = load_table("a,b,y\n1,2,3\n", SCHEMA)
    with pytest.raises(ValueError):
        d["a"].values[0] = 5.0


cells = st.one_of(st.none(), st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(cells, cells, cells), min_size=0, max_size=12))
def test_dump_then_load_is_identity(rows):
    text = "a,b,y\n" + "".join(",".join("" if v is None else repr(v) for v in r) + "\n" for r in rows)
    d = load_table(text, SCHEMA)
    again = load_table(dump_table(d), SCHEMA)
    assert again == d
    assert [c.role for c in again.columns] == [c.role for c in d.columns]


def test_column_mean_fills_gap():
    d = load_table("a,b,y\n1,0,0\n,0,0\n3,0,0\n", SCHEMA)
    out = impute_missing(d, "column-mean")
    np.testing.assert_array_equal(out["a"].values, [1.0, 2.0, 3.0])
    assert sum(c.n_missing for c in out.columns) == 0


def test_column_median_uses_observed_entries_only():
    d = load_table("a,b,y\n1,0,0\n,0,0\n2,0,0\n10,0,0\n", SCHEMA)
    np.testing.assert_array_equal(impute_missing(d, "column-median")["a"].values, [1, 2, 2, 10])


def test_reference_lookup():
    d = load_table("Oil contained,y\n,1\n,2\n", {"Oil contained": "input", "y": "response"})
    out = impute_missing(d, "reference-lookup", {"Oil contained": 0.19})
    np.testing.assert_array_equal(out["Oil contained"].values, [0.19, 0.19])


def test_reference_lookup_missing_entry():
    d = load_table("a,b,y\n,1,1\n", SCHEMA)
    with pytest.raises(ReferenceLookupError):
        impute_missing(d, "reference-lookup", {"b": 1.0})


def test_all_missing_column_cannot_be_averaged():
    d = load_table("a,b,y\n,1,1\n,2,2\n", SCHEMA)
    for strategy in ("column-mean", "column-median"):
        with pytest.raises(ImputationError, match="'a'"):
            impute_missing(d, strategy)


def test_imputation_without_gaps_is_a_no_op():
    d = bundled.design_dataset()
    for strategy in ("column-mean", "column-median"):
        assert impute_missing(d, strategy) == d
    assert impute_missing(d, "reference-lookup", {}) == d


def test_bundled_reference_values():
    ref = bundled.reference_values()
    assert ref["Oil contained"] == 0.19
    assert load_reference("variable,value\nx,1.5\n") == {"x": 1.5}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(-100, 100)), min_size=2, max_size=20)
       .filter(lambda v: any(x is not None for x in v)),
       st.sampled_from(["column-mean", "column-median"]))
def test_imputation_is_idempotent_and_keeps_observed_values(vals, strategy):
    d = Dataset("t", [Column.from_values("a", vals)])
    once = impute_missing(d, strategy)
    assert impute_missing(once, strategy) == once
    obs = np.array([v is not None for v in vals])
    np.testing.assert_array_equal(once["a"].values[obs], d["a"].values[obs])


def _components(values, names=None):
    names = names or [f"c{i}" for i in range(len(values))]
    return Dataset("t", [Column.from_values(n, v) for n, v in zip(names, values)]), names


def test_equal_weight_constant_score():
    d, names = _components([[0.9] * 4] * 7)
    out = compose_quality_score(d, QualityScoreSpec.equal_weights(names, "score"))
    np.testing.assert_allclose(out["score"].values, 0.9, atol=1e-15)
    assert out.response_name == "score"
    assert all(out[n].role == "input" for n in names)


def test_weighted_score():
    d, names = _components([[0.8], [1.0]])
    out = compose_quality_score(d, QualityScoreSpec(tuple(zip(names, (0.75, 0.25))), "s"))
    assert out["s"].values[0] == pytest.approx(0.85, abs=1e-15)


def test_weights_are_normalized():
    spec = QualityScoreSpec((("a", 2.0), ("b", 6.0)))
    assert spec.normalized() == [("a", 0.25), ("b", 0.75)]


def test_bundled_components_compose_to_the_validated_scores():
    comp = bundled.score_components()
    out = compose_quality_score(comp, QualityScoreSpec.equal_weights(comp.input_names, "score"))
    s = out["score"].values
    assert s.min() == pytest.approx(0.816, abs=1e-12)
    assert s.max() == pytest.approx(0.911, abs=1e-12)
    design = bundled.design_dataset()
    np.testing.assert_allclose(s, design.response(), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_single_component_is_returned_verbatim(vals):
    d, names = _components([vals])
    out = compose_quality_score(d, QualityScoreSpec(((names[0], 1.0),), "s"))
    np.testing.assert_array_equal(out["s"].values, d[names[0]].values)


def test_score_errors():
    d, names = _components([[0.5, 1.2]])
    with pytest.raises(ScoreRangeError):
        compose_quality_score(d, QualityScoreSpec.equal_weights(names))
    with pytest.raises(SpecError):
        compose_quality_score(d, QualityScoreSpec(()))
    with pytest.raises(SpecError):
        compose_quality_score(d, QualityScoreSpec.equal_weights(["nope"]))


def test_split_sizes_and_determinism():
    train, test = split_indices(10, 0.3, 7)
    assert (len(train), len(test)) == (7, 3)
    again = split_indices(10, 0.3, 7)
    np.testing.assert_array_equal(train, again[0])
    np.testing.assert_array_equal(test, again[1])


def test_split_size_is_clamped():
    assert len(split_indices(5, 0.01, 0)[1]) == 1
    assert len(split_indices(5, 0.99, 0)[1]) == 4


@pytest.mark.parametrize("seed", range(100))
def test_split_is_a_partition(seed):
    train, test = split_indices(37, 0.25, seed)
    assert set(train) | set(test) == set(range(37))
    assert not set(train) & set(test)


def test_split_errors():
    with pytest.raises(SplitError):
        split_indices(1, 0.5, 0)
    with pytest.raises(SplitError):
        split_indices(10, 1.0, 0)


def test_split_datasets_keep_roles():
    d = bundled.design_dataset()
    train, test = split_train_test(d, 0.3, 1)
    assert train.n_rows + test.n_rows == 17
    assert train.response_name == test.response_name == bundled.RESPONSE_NAME
