"""Weighted approximate ERM oracle with call accounting.

The oracle minimizes sum_i w_i * l_i(f(x_i), y_i) over the hypothesis class,
where each row selects either the problem's main loss or the identity "loss"
l_id(yhat, y) = yhat.  Weights may be negative; for an approximate oracle with
slack zeta the returned hypothesis satisfies

    objective(f_hat) <= min_f objective(f) + zeta * sum_i |w_i|

(or + zeta flat, if the total-weight scaling is switched off).

Queries are columnar: a list of row blocks, each a (selector, contexts,
labels, weights) group.  Learners with a long history may append their
observed rounds to the oracle's shared prefix once per round; the oracle keeps
the per-hypothesis partial objective incrementally, and queries opt in with
``include_prefix=True``.  The prefix rows are logically part of the query.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterator, Optional, Sequence

import numpy as np

from .core import ContextBlock, ContextPoint, HypothesisClass, LossFunction

__all__ = ["WeightedExample", "RowBlock", "ErmQuery", "ErmResult", "ErmOracle"]

MAIN = "main_loss"
IDENTITY = "identity_loss"


@dataclass(frozen=True)
class WeightedExample:
    """One oracle input row: (context, label, weight) plus a loss selector."""

    context: ContextPoint
    label: float
    weight: float
    loss_selector: str = MAIN

    def __post_init__(self):
        if self.loss_selector not in (MAIN, IDENTITY):
            raise ValueError(f"unknown loss selector {self.loss_selector!r}")


@dataclass
class RowBlock:
    selector: str
    contexts: ContextBlock
    labels: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


class ErmQuery:
    """A weighted ERM instance, built from rows or from columnar blocks."""

    def __init__(self, rows: Optional[Sequence[WeightedExample]] = None):
        self.blocks: list[RowBlock] = []
        for row in rows or ():
            self.add_block(
                row.loss_selector,
                ContextBlock.single(row.context),
                np.array([row.label], dtype=np.float64),
                np.array([row.weight], dtype=np.float64),
            )

    def add_block(self, selector: str, contexts: ContextBlock,
                  labels: np.ndarray, weights: np.ndarray) -> "ErmQuery":
        if selector not in (MAIN, IDENTITY):
            raise ValueError(f"unknown loss selector {selector!r}")
        labels = np.asarray(labels, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if not (len(contexts) == len(labels) == len(weights)):
            raise ValueError("block arrays must share a length")
        if len(weights):
            self.blocks.append(RowBlock(selector, contexts, labels, weights))
        return self

    @property
    def n_rows(self) -> int:
        return sum(len(b) for b in self.blocks)

    def total_abs_weight(self) -> float:
        return float(sum(np.abs(b.weights).sum() for b in self.blocks))

    def iter_rows(self) -> Iterator[WeightedExample]:
        for b in self.blocks:
            for p, y, w in zip(b.contexts.points(), b.labels, b.weights):
                yield WeightedExample(p, float(y), float(w), b.selector)


@dataclass(frozen=True)
class ErmResult:
    hypothesis_index: int
    objective_value: float
    calls_consumed: int = 1


class ErmOracle:
    """Exact and zeta-approximate weighted ERM over a finite class.

    ``scale_slack_by_total_weight`` picks the slack convention: True means the
    admissible band is zeta * sum|w_i| wide, False means a flat zeta band.
    """

    def __init__(self, klass: HypothesisClass, main_loss: LossFunction,
                 scale_slack_by_total_weight: bool = True,
                 log_stream: Optional[IO[str]] = None):
        self.klass = klass
        self.main_loss = main_loss
        self.scale_slack_by_total_weight = scale_slack_by_total_weight
        self.log_stream = log_stream
        self._calls = 0
        self._prefix_objective = np.zeros(len(klass), dtype=np.float64)
        self._prefix_abs_weight = 0.0
        self._prefix_rows = 0

    # -- call accounting ----------------------------------------------------
    @property
    def calls(self) -> int:
        """Number of completed oracle queries (exact or approximate)."""
        return self._calls

    # -- shared history prefix ----------------------------------------------
    def extend_prefix(self, context: ContextPoint, label: float,
                      weight: float = 1.0, selector: str = MAIN) -> None:
        """Append a row to the shared prefix shipped with include_prefix queries."""
        block = ContextBlock.single(context)
        y = np.array([label], dtype=np.float64)
        w = np.array([weight], dtype=np.float64)
        self._prefix_objective += self._block_objective(RowBlock(selector, block, y, w))
        self._prefix_abs_weight += abs(weight)
        self._prefix_rows += 1

    def reset_prefix(self) -> None:
        self._prefix_objective = np.zeros(len(self.klass), dtype=np.float64)
        self._prefix_abs_weight = 0.0
        self._prefix_rows = 0

    # -- objective evaluation -----------------------------------------------
    def _block_objective(self, block: RowBlock) -> np.ndarray:
        if block.selector == IDENTITY:
            # identity rows ignore labels: contribution is sum_i w_i f(x_i)
            return self.klass.identity_dot(block.contexts, block.weights)
        values = self.klass.evaluate_block(block.contexts)
        return self.main_loss.evaluate_array(values, block.labels[None, :]) @ block.weights

    def objective_vector(self, query: ErmQuery, include_prefix: bool = False) -> np.ndarray:
        obj = self._prefix_objective.copy() if include_prefix else np.zeros(len(self.klass))
        for block in query.blocks:
            obj += self._block_objective(block)
        return obj

    # -- queries --------------------------------------------------------------
    def exact(self, query: ErmQuery, include_prefix: bool = False) -> ErmResult:
        """Exact minimizer (zeta = 0); ties resolve to the lowest index."""
        obj = self.objective_vector(query, include_prefix)
        idx = int(np.argmin(obj))
        self._calls += 1
        result = ErmResult(idx, float(obj[idx]))
        self._log(query, result)
        return result

    def approximate(self, query: ErmQuery, zeta: float,
                    rng: Optional[np.random.Generator] = None,
                    include_prefix: bool = False) -> ErmResult:
        """zeta-approximate minimizer.

        Runs the exact scan, then with probability 1/2 returns a uniformly
        random *other* hypothesis still inside the admissible slack band, so
        downstream consumers are exercised against the worst the contract
        allows.  Without an rng the swap is skipped and the exact minimizer
        is returned (still a valid zeta-approximate answer).
        """
        if zeta < 0:
            raise ValueError("zeta must be nonnegative")
        obj = self.objective_vector(query, include_prefix)
        idx = int(np.argmin(obj))
        if zeta > 0 and rng is not None and rng.random() < 0.5:
            total = query.total_abs_weight() + (
                self._prefix_abs_weight if include_prefix else 0.0
            )
            slack = zeta * total if self.scale_slack_by_total_weight else zeta
            admissible = np.flatnonzero(obj <= obj[idx] + slack)
            others = admissible[admissible != idx]
            if len(others):
                idx = int(rng.choice(others))
        self._calls += 1
        result = ErmResult(idx, float(obj[idx]))
        self._log(query, result)
        return result

    # -- logging --------------------------------------------------------------
    def _log(self, query: ErmQuery, result: ErmResult) -> None:
        if self.log_stream is None:
            return
        record = {
            "prefix_rows": self._prefix_rows,
            "rows": [
                {
                    "context": row.context.id if row.context.id is not None
                    else row.context.coordinate,
                    "y": row.label,
                    "w": row.weight,
                    "loss": row.loss_selector,
                }
                for row in query.iter_rows()
            ],
            "result_index": result.hypothesis_index,
            "objective": result.objective_value,
        }
        self.log_stream.write(json.dumps(record) + "\n")
