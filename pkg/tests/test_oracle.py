import io
import json

import numpy as np
import pytest

from smoothol.core import (
    ContextBlock,
    ContextPoint,
    DomainMismatchError,
    linear_loss,
    make_rng,
)
from smoothol.oracle import IDENTITY, MAIN, ErmOracle, ErmQuery, WeightedExample

from conftest import random_table_class


def _row(ctx_id, y, w, selector=MAIN):
    return WeightedExample(ContextPoint(id=ctx_id), y, w, selector)


def test_single_positive_example_selects_plus_one(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    res = oracle.exact(ErmQuery([_row(0, 1.0, 1.0)]))
    assert res.hypothesis_index == 0  # f = +1 listed first
    assert res.calls_consumed == 1


def test_negative_weight_flips_the_objective(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    res = oracle.exact(ErmQuery([_row(0, 1.0, -1.0)]))
    assert res.hypothesis_index == 1  # f = -1 now minimizes


def test_empty_query_returns_lowest_index(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    res = oracle.exact(ErmQuery())
    assert res.hypothesis_index == 0
    assert res.objective_value == 0.0


def test_exact_is_pure(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    q = ErmQuery([_row(0, 1.0, 2.0), _row(1, -1.0, -0.5, IDENTITY)])
    r1 = oracle.exact(q)
    r2 = oracle.exact(q)
    assert r1 == r2


def test_call_counter(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    assert oracle.calls == 0
    for _ in range(3):
        oracle.exact(ErmQuery([_row(0, 1.0, 1.0)]))
    assert oracle.calls == 3
    oracle.approximate(ErmQuery([_row(0, 1.0, 1.0)]), zeta=0.5, rng=make_rng(0, 0))
    assert oracle.calls == 4


def test_zeta_zero_is_exact(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    q = ErmQuery([_row(0, 1.0, 1.0)])
    assert oracle.approximate(q, zeta=0.0, rng=make_rng(1, 0)).hypothesis_index == \
        oracle.exact(q).hypothesis_index


def test_large_zeta_widens_admissible_set_but_respects_bound(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    q = ErmQuery([_row(0, 1.0, 1.0)])  # objective gap 1, sum |w| = 1
    rng = make_rng(2, 0)
    seen = set()
    for _ in range(100):
        res = oracle.approximate(q, zeta=10.0, rng=rng)
        exact_min = min(oracle.objective_vector(q))
        assert res.objective_value <= exact_min + 10.0 * 1.0 + 1e-12
        seen.add(res.hypothesis_index)
    assert seen == {0, 1}  # both admissible hypotheses get exercised


def test_tiny_zeta_with_separated_objectives_matches_exact(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    q = ErmQuery([_row(0, 1.0, 1.0)])
    rng = make_rng(3, 0)
    for _ in range(20):
        assert oracle.approximate(q, zeta=1e-12, rng=rng).hypothesis_index == 0


def test_flat_slack_convention(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss(), scale_slack_by_total_weight=False)
    # objective gap is 2 here (weights 2), flat zeta = 1 admits only the minimizer
    q = ErmQuery([_row(0, 1.0, 2.0)])
    rng = make_rng(4, 0)
    for _ in range(50):
        assert oracle.approximate(q, zeta=1.0, rng=rng).hypothesis_index == 0
    # scaled convention would have admitted the other hypothesis: zeta*sum|w| = 2
    scaled = ErmOracle(sign_constants, linear_loss())
    seen = {scaled.approximate(q, zeta=1.0, rng=make_rng(5, i)).hypothesis_index
            for i in range(60)}
    assert seen == {0, 1}


def test_objective_value_matches_row_recomputation():
    rng = make_rng(6, 0)
    klass = random_table_class(rng, 7, 9)
    loss = linear_loss()
    oracle = ErmOracle(klass, loss)
    q = ErmQuery()
    ids = rng.integers(0, 9, size=25)
    q.add_block(MAIN, klass.ground.block(ids), rng.uniform(-1, 1, 25), rng.normal(size=25))
    ids2 = rng.integers(0, 9, size=10)
    q.add_block(IDENTITY, klass.ground.block(ids2), np.zeros(10), rng.normal(size=10))
    res = oracle.exact(q)
    manual = 0.0
    for row in q.iter_rows():
        v = klass.evaluate(res.hypothesis_index, row.context)
        term = v if row.loss_selector == IDENTITY else loss.evaluate(v, row.label)
        manual += row.weight * term
    assert res.objective_value == pytest.approx(manual, abs=1e-9)


def test_prefix_matches_explicit_rows():
    rng = make_rng(7, 0)
    klass = random_table_class(rng, 6, 8)
    loss = linear_loss()
    with_prefix = ErmOracle(klass, loss)
    plain = ErmOracle(klass, loss)
    history = [(klass.ground.point(int(rng.integers(8))), float(rng.choice([-1, 1])))
               for _ in range(40)]
    for ctx, y in history:
        with_prefix.extend_prefix(ctx, y)

    extra = ErmQuery()
    ids = rng.integers(0, 8, size=5)
    extra.add_block(IDENTITY, klass.ground.block(ids), np.zeros(5), rng.normal(size=5))

    explicit = ErmQuery()
    pts = ContextBlock.from_points([c for c, _ in history])
    explicit.add_block(MAIN, pts, np.array([y for _, y in history]), np.ones(len(history)))
    explicit.add_block(IDENTITY, klass.ground.block(ids), np.zeros(5),
                       extra.blocks[0].weights)

    r1 = with_prefix.exact(extra, include_prefix=True)
    r2 = plain.exact(explicit)
    assert r1.hypothesis_index == r2.hypothesis_index
    assert r1.objective_value == pytest.approx(r2.objective_value, abs=1e-9)


def test_query_log_is_line_delimited_json(sign_constants):
    stream = io.StringIO()
    oracle = ErmOracle(sign_constants, linear_loss(), log_stream=stream)
    oracle.exact(ErmQuery([_row(0, 1.0, 1.0), _row(2, -1.0, 0.5, IDENTITY)]))
    oracle.exact(ErmQuery([_row(1, -1.0, 2.0)]))
    lines = stream.getvalue().strip().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["result_index"] == 0
    assert len(rec["rows"]) == 2
    assert rec["rows"][1]["loss"] == IDENTITY


def test_add_block_rejects_unknown_selector(sign_constants):
    q = ErmQuery()
    with pytest.raises(ValueError, match="selector"):
        q.add_block("hinge", ContextBlock.from_points([ContextPoint(id=0)]),
                    np.array([1.0]), np.array([1.0]))
    with pytest.raises(ValueError, match="selector"):
        WeightedExample(ContextPoint(id=0), 1.0, 1.0, "hinge")


def test_domain_mismatch_propagates(sign_constants):
    oracle = ErmOracle(sign_constants, linear_loss())
    q = ErmQuery([WeightedExample(ContextPoint(coordinate=0.5), 1.0, 1.0)])
    with pytest.raises(DomainMismatchError, match="domain mismatch"):
        oracle.exact(q)


@pytest.mark.parametrize("seed", range(4))
def test_soundness_fuzz_small(seed):
    """Exhaustive-scan soundness on random weighted queries, both conventions."""
    rng = make_rng(100 + seed, 0)
    klass = random_table_class(rng, int(rng.integers(2, 40)), 12)
    loss = linear_loss()
    oracle = ErmOracle(klass, loss)
    for _ in range(50):
        q = ErmQuery()
        m = int(rng.integers(0, 12))
        if m:
            ids = rng.integers(0, 12, size=m)
            sel = MAIN if rng.random() < 0.5 else IDENTITY
            q.add_block(sel, klass.ground.block(ids),
                        rng.uniform(-1, 1, m), rng.normal(size=m) * 3)
        zeta = float(rng.choice([0.0, 0.0, 0.5]))
        if zeta == 0.0:
            res = oracle.exact(q)
        else:
            res = oracle.approximate(q, zeta, rng)
        objs = oracle.objective_vector(q)
        slack = zeta * q.total_abs_weight()
        assert res.objective_value <= objs.min() + slack + 1e-12
        if zeta == 0.0:
            assert res.hypothesis_index == int(np.argmin(objs))
