"""Case-based retrieval over stored episodes.

Retrieval is a deliberate linear scan of the case base: score every case
against the query situation with a pluggable measure, sort descending,
ties broken by ascending case id. The measure only has to be symmetric
and bounded to [0,1]; no metric axioms are assumed.

The default measure compares situations axis by axis: each affirmed
binding is scored against its best counterpart on the same axis as
len(longest common initial segment) / max(length), directionally
averaged and then symmetrized. Identical situations score 1.0, situations
without a shared axis 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .keys import Key
from .multiaxial import Situation
from .store import Case, Episode, Store, episode_situation

SimilarityFn = Callable[[Situation, Situation], float]


@dataclass(frozen=True)
class SimilarityMeasure:
    name: str
    function: SimilarityFn

    def __call__(self, a: Situation, b: Situation) -> float:
        return self.function(a, b)


def _common_prefix_len(a: Key, b: Key) -> int:
    n = 0
    for x, y in zip(a.elements, b.elements):
        if x != y:
            break
        n += 1
    return n


def _directed_score(a: Situation, b: Situation) -> float:
    if not a.bindings:
        return 1.0 if not b.bindings else 0.0
    total = 0.0
    for binding in a.bindings:
        best = 0.0
        for key in b.keys_for(binding.axis):
            ratio = _common_prefix_len(binding.key, key) / max(
                len(binding.key), len(key)
            )
            best = max(best, ratio)
        total += best
    return total / len(a.bindings)


def default_similarity(a: Situation, b: Situation) -> float:
    return (_directed_score(a, b) + _directed_score(b, a)) / 2


DEFAULT_MEASURE = SimilarityMeasure("prefix-overlap", default_similarity)


def add_case(store: Store, case: Case) -> str:
    """Persist a case; its problem episodes must already be stored."""
    return store.add_case(case)


def _case_situations(store: Store, case: Case) -> list[Situation]:
    return [
        episode_situation(store.get_episode(eid, ts)) for eid, ts in case.problem
    ]


def score_case(
    store: Store,
    case: Case,
    query: Situation,
    measure: SimilarityMeasure = DEFAULT_MEASURE,
    sequence_mode: str = "latest",
) -> float:
    """Score one case against the query.

    sequence_mode 'latest' compares the last episode of the problem
    sequence; 'mean' averages the score over the whole sequence.
    """
    situations = _case_situations(store, case)
    if sequence_mode == "latest":
        return measure(query, situations[-1])
    if sequence_mode == "mean":
        return sum(measure(query, s) for s in situations) / len(situations)
    raise ValueError(f"unknown sequence_mode: {sequence_mode!r}")


def retrieve(
    store: Store,
    query: Situation,
    k: int,
    measure: SimilarityMeasure = DEFAULT_MEASURE,
    sequence_mode: str = "latest",
) -> list[tuple[Case, float]]:
    """Top-k cases by similarity, descending; ties by ascending case id."""
    if k <= 0:
        raise ValueError("k must be positive")
    scored = [
        (case, score_case(store, case, query, measure, sequence_mode))
        for case in store.list_cases()
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored[:k]
