"""Predictor screening and rank voting across models."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .data import Dataset
from .ensembles import ImportanceRanking, TrainConfig, fit_random_forest, variable_importance
from .errors import OverrideError, SpecError, VoteError

log = logging.getLogger(__name__)

SCREENING_TREES = 200


@dataclass(frozen=True)
class ScreeningResult:
    ranking: ImportanceRanking
    dataset: Dataset

    @property
    def selected(self) -> list[str]:
        return self.ranking.variables


def screen_predictors(d: Dataset, k: int, seed: int = 0, config: TrainConfig | None = None,
                      n_jobs: int = 1) -> ScreeningResult:
    """Keep the ``k`` inputs a screening forest finds most important.

    Returns the truncated ranking and a view of ``d`` in which every other
    input column has role ``ignored``.
    """
    n_inputs = len(d.input_names)
    if not 1 <= k <= n_inputs:
        raise SpecError(f"k must lie in [1, {n_inputs}], got {k}")
    config = config or TrainConfig.forest(n_trees=SCREENING_TREES, seed=seed)
    full = variable_importance(fit_random_forest(d, config, n_jobs=n_jobs))
    top = full.top(k)
    keep = set(top.variables)
    roles = {n: "ignored" for n in d.input_names if n not in keep}
    return ScreeningResult(top, d.with_roles(roles))


@dataclass(frozen=True)
class VotedSelection:
    """Variables ordered by (models listing it, Borda points, name)."""

    variables: tuple
    provenance: dict

    def __iter__(self):
        return iter(self.variables)

    def __len__(self):
        return len(self.variables)


def _top_names(r, m):
    names = r.variables if isinstance(r, ImportanceRanking) else list(r)
    if len(names) < m:
        raise VoteError(f"ranking has {len(names)} entries, need at least {m}")
    return names[:m]


def vote_rankings(rankings: Sequence, m: int = 4, model_names: Sequence[str] | None = None) -> VotedSelection:
    """Combine the top-``m`` lists of several models.

    A variable earns ``m`` Borda points for first place down to 1 for place
    ``m``. Variables are ordered by how many models list them, then Borda
    total, then name, and the result is cut to ``m`` entries.

    ``rankings`` may hold :class:`ImportanceRanking` objects or plain lists of
    names in rank order.
    """
    if not rankings:
        raise VoteError("no rankings to vote on")
    if m < 1:
        raise VoteError("m must be at least 1")
    model_names = list(model_names or [f"model{i}" for i in range(len(rankings))])
    count, borda, listed = {}, {}, {}
    for label, r in zip(model_names, rankings):
        for pos, name in enumerate(_top_names(r, m)):
            count[name] = count.get(name, 0) + 1
            borda[name] = borda.get(name, 0) + (m - pos)
            listed.setdefault(name, []).append(label)
    order = sorted(count, key=lambda n: (-count[n], -borda[n], n))[:m]
    prov = {n: {"models": listed[n], "count": count[n], "borda": borda[n]} for n in order}
    return VotedSelection(tuple(order), prov)


@dataclass(frozen=True)
class OverrideRule:
    """Swap one voted variable for another, with a recorded reason."""

    remove: str
    insert: str
    justification: str

    def __post_init__(self):
        if not self.justification or not self.justification.strip():
            raise OverrideError(f"rule {self.remove!r} -> {self.insert!r} needs a justification")


def apply_overrides(v, rules: Sequence[OverrideRule], final_count: int = 3) -> list[str]:
    """Apply expert swaps to the first ``final_count`` voted variables.

    Each rule is checked against the current selection: the removed variable
    must be present and the inserted one absent. Removed variables leave the
    list and inserted ones are appended in rule order. The result is cut to
    ``final_count``.
    """
    if final_count < 1:
        raise OverrideError("final_count must be at least 1")
    current = list(v)[:final_count]
    for rule in rules:
        if rule.remove not in current:
            raise OverrideError(f"rule {rule.remove!r} -> {rule.insert!r}: {rule.remove!r} is not selected")
        if rule.insert in current:
            raise OverrideError(f"rule {rule.remove!r} -> {rule.insert!r}: {rule.insert!r} is already selected")
        current.remove(rule.remove)
        current.append(rule.insert)
        log.info("override: %s replaced by %s (%s)", rule.remove, rule.insert, rule.justification)
    return current[:final_count]
