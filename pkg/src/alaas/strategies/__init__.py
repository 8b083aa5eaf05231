"""The strategy zoo: pure, deterministic sample-selection strategies."""

from __future__ import annotations

from alaas.errors import UnknownStrategy
from alaas.models import STRATEGY_ALIASES, StrategyKind
from alaas.strategies.base import Selection, Strategy, StrategyInput
from alaas.strategies.diversity import (
    select_coreset,
    select_dbal,
    select_kcenter_greedy,
    select_kmeans,
)
from alaas.strategies.uncertainty import (
    philox,
    score_es,
    score_lc,
    score_mc,
    score_rc,
    select_random,
    select_top_b,
)

__all__ = [
    "Selection",
    "Strategy",
    "StrategyInput",
    "register_strategy",
    "registered_strategies",
    "run_strategy",
    "score_es",
    "score_lc",
    "score_mc",
    "score_rc",
    "select_coreset",
    "select_dbal",
    "select_kcenter_greedy",
    "select_kmeans",
    "select_random",
    "select_top_b",
    "philox",
]

SCORERS = {
    StrategyKind.LC: score_lc,
    StrategyKind.MC: score_mc,
    StrategyKind.RC: score_rc,
    StrategyKind.ES: score_es,
}


class _Uncertainty(Strategy):
    requires = ("probs",)

    def __init__(self, kind: StrategyKind):
        self.kind = kind
        self.name = kind.value

    def select(self, inp):
        return select_top_b(SCORERS[self.kind](inp.probs), inp.probs.row_ids, inp.budget)


class _Random(Strategy):
    name = StrategyKind.RANDOM.value

    def select(self, inp):
        return select_random(inp.candidate_ids(), inp.budget, inp.seed)


class _KCenter(Strategy):
    requires = ("embeds", "labeled_embeds")

    def __init__(self, kind: StrategyKind):
        self.name = kind.value
        self._fn = select_coreset if kind is StrategyKind.CORESET else select_kcenter_greedy

    def select(self, inp):
        return self._fn(inp.embeds, inp.labeled_embeds, inp.budget)


class _KMeans(Strategy):
    name = StrategyKind.KMEANS.value
    requires = ("embeds",)

    def select(self, inp):
        return select_kmeans(inp.embeds, inp.budget, inp.seed)


class _DBAL(Strategy):
    name = StrategyKind.DBAL.value
    requires = ("probs", "embeds")

    def select(self, inp):
        return select_dbal(inp.probs, inp.embeds, inp.budget, inp.beta, inp.seed)


_BUILTIN: dict[StrategyKind, Strategy] = {
    StrategyKind.RANDOM: _Random(),
    StrategyKind.LC: _Uncertainty(StrategyKind.LC),
    StrategyKind.MC: _Uncertainty(StrategyKind.MC),
    StrategyKind.RC: _Uncertainty(StrategyKind.RC),
    StrategyKind.ES: _Uncertainty(StrategyKind.ES),
    StrategyKind.KMEANS: _KMeans(),
    StrategyKind.KCG: _KCenter(StrategyKind.KCG),
    StrategyKind.CORESET: _KCenter(StrategyKind.CORESET),
    StrategyKind.DBAL: _DBAL(),
}

_CUSTOM: dict[str, Strategy] = {}


def register_strategy(name: str, strategy: Strategy | type[Strategy]) -> Strategy:
    """Make ``strategy`` reachable through :func:`run_strategy` under ``name``."""
    if name in STRATEGY_ALIASES:
        raise ValueError(f"{name!r} is a built-in strategy name")
    if isinstance(strategy, type):
        strategy = strategy()
    _CUSTOM[name] = strategy
    return strategy


def unregister_strategy(name: str) -> None:
    _CUSTOM.pop(name, None)


def registered_strategies() -> list[str]:
    return [k.value for k in StrategyKind] + sorted(_CUSTOM)


def resolve(kind: StrategyKind | str) -> Strategy:
    if isinstance(kind, str) and not isinstance(kind, StrategyKind) and kind in _CUSTOM:
        return _CUSTOM[kind]
    try:
        return _BUILTIN[StrategyKind.parse(kind)]
    except UnknownStrategy:
        raise UnknownStrategy(
            f"unknown strategy {kind!r}; valid names: {', '.join(list(STRATEGY_ALIASES) + sorted(_CUSTOM))}"
        ) from None


def run_strategy(kind: StrategyKind | str, inp: StrategyInput) -> Selection:
    """Dispatch ``inp`` to the strategy named by ``kind``.

    Raises MissingInput naming the absent matrix when the strategy needs one.
    """
    return resolve(kind)(inp)


def required_inputs(kind: StrategyKind | str) -> tuple[str, ...]:
    return resolve(kind).requires

