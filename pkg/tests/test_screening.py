import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualitymine import bundled
from qualitymine.data import Dataset
from qualitymine.ensembles import ImportanceRanking
from qualitymine.errors import OverrideError, SpecError, VoteError
from qualitymine.screening import OverrideRule, apply_overrides, screen_predictors, vote_rankings

RF = ["Machine productivity", "Tufts", "Pile height", "Pile weight"]
BT = ["Tufts", "Pigment fastness", "Machine productivity", "Pile weight"]
SWAP = OverrideRule("Tufts", "Pigment fastness", "more important for quality than Tufts")


def _table(seed, n=300, p=6, signal=True):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    data = {f"x{j + 1}": X[:, j] for j in range(p)}
    data["y"] = X[:, 0] if signal else rng.normal(size=n)
    return Dataset.from_arrays("t", data, {"y": "response"})


def test_published_vote():
    v = vote_rankings([RF, BT], 4)
    assert list(v) == ["Tufts", "Machine productivity", "Pile weight", "Pigment fastness"]
    assert v.provenance["Tufts"] == {"models": ["model0", "model1"], "count": 2, "borda": 7}
    assert v.provenance["Pigment fastness"]["borda"] == 3


def test_published_override():
    v = vote_rankings([RF, BT], 4)
    assert apply_overrides(v, [SWAP], 3) == ["Machine productivity", "Pile weight", "Pigment fastness"]


def test_bundled_rankings_agree():
    r = bundled.published_rankings()
    assert list(vote_rankings([r["random_forest"], r["boosted_tree"]], 4)) == r["voted"]


def test_identical_rankings_pass_through():
    assert list(vote_rankings([BT, BT], 3)) == BT[:3]


def test_full_tie_is_alphabetical():
    assert list(vote_rankings([["b", "a"], ["a", "b"]], 2)) == ["a", "b"]


def test_accepts_importance_rankings():
    r = ImportanceRanking((("z", 100.0), ("a", 50.0)))
    assert list(vote_rankings([r], 2)) == ["z", "a"]


def test_vote_errors():
    with pytest.raises(VoteError):
        vote_rankings([], 4)
    with pytest.raises(VoteError):
        vote_rankings([RF[:3]], 4)
    with pytest.raises(VoteError):
        vote_rankings([RF], 0)


names = st.permutations([f"v{i}" for i in range(8)])


@settings(max_examples=60, deadline=None)
@given(st.lists(names, min_size=1, max_size=5), st.integers(1, 6), st.randoms(use_true_random=False))
def test_vote_is_order_invariant(lists, m, rnd):
    shuffled = lists[:]
    rnd.shuffle(shuffled)
    assert list(vote_rankings(lists, m)) == list(vote_rankings(shuffled, m))


@settings(max_examples=60, deadline=None)
@given(st.lists(names, min_size=1, max_size=5), st.integers(1, 6))
def test_adding_the_consensus_keeps_it(lists, m):
    v = list(vote_rankings(lists, m))
    assert list(vote_rankings(lists + [v], m)) == v


def test_no_rules_is_identity():
    v = vote_rankings([RF, BT], 4)
    assert apply_overrides(v, [], 4) == list(v)


def test_override_preconditions():
    v = vote_rankings([RF, BT], 4)
    with pytest.raises(OverrideError, match="Humidity"):
        apply_overrides(v, [OverrideRule("Humidity", "Pile height", "x")], 3)
    with pytest.raises(OverrideError, match="Pile weight"):
        apply_overrides(v, [OverrideRule("Tufts", "Pile weight", "x")], 3)
    with pytest.raises(OverrideError):
        OverrideRule("Tufts", "Pigment fastness", "  ")


def test_screen_keeps_k_inputs():
    d = _table(0)
    res = screen_predictors(d, 3, seed=0)
    assert len(res.selected) == 3
    assert set(res.selected) <= set(d.input_names)
    assert sorted(res.dataset.input_names) == sorted(res.selected)
    assert all(res.dataset[n].role == "ignored" for n in d.input_names if n not in res.selected)


def test_screen_all_inputs_is_identity():
    d = _table(1)
    res = screen_predictors(d, 6, seed=0)
    assert sorted(res.selected) == sorted(d.input_names)
    assert res.dataset.input_names == d.input_names


def test_dominant_signal_alone():
    assert screen_predictors(_table(2), 1, seed=3).selected == ["x1"]


def test_screen_k_range():
    for k in (0, 7):
        with pytest.raises(SpecError):
            screen_predictors(_table(0), k)


def test_screen_is_deterministic():
    d = _table(4, signal=False)
    a = screen_predictors(d, 4, seed=9).ranking
    b = screen_predictors(d, 4, seed=9, n_jobs=2).ranking
    assert a == b


@pytest.mark.parametrize("order", list(itertools.permutations(range(3)))[:3])
def test_published_vote_any_order(order):
    lists = [RF, BT, RF]
    assert list(vote_rankings([lists[i] for i in order], 4)) == list(vote_rankings(lists, 4))
