import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothol.adversaries import IidAdversary, rademacher_labels, tilted_smooth_probs
from smoothol.bandit import (
    compose_smoothness,
    default_gamma,
    igw_distribution,
    product_class,
    product_measure,
    run_bandit_experiment,
    run_square_cb,
)
from smoothol.core import (
    FiniteMeasure,
    GroundSet,
    SmoothnessCertificate,
    make_rng,
    square_loss,
)
from smoothol.ftpl import FtplLearner, schedule
from smoothol.oracle import ErmOracle


# ---------------------------------------------------------------------------
# inverse-gap weighting
# ---------------------------------------------------------------------------

def test_igw_equal_predictions_is_uniform():
    p = igw_distribution(np.full(5, 0.3), gamma=7.0)
    np.testing.assert_allclose(p, np.full(5, 0.2), atol=1e-12)


def test_igw_worked_example():
    p = igw_distribution(np.array([0.0, 1.0]), gamma=2.0)
    np.testing.assert_allclose(p, [0.75, 0.25], atol=1e-12)


def test_igw_exploitation_limit():
    p = igw_distribution(np.array([0.2, 0.9, 0.7]), gamma=1e9)
    assert p[0] > 1 - 1e-6
    assert np.all(p > 0)


def test_igw_tie_goes_to_lowest_index():
    p = igw_distribution(np.array([0.4, 0.4, 0.9]), gamma=5.0)
    assert p[0] == max(p)
    assert np.argmax(p) == 0


def test_igw_validation():
    with pytest.raises(ValueError):
        igw_distribution(np.array([0.5]), gamma=1.0)
    with pytest.raises(ValueError):
        igw_distribution(np.array([0.5, 0.2]), gamma=0.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 16), st.floats(0.1, 1e4), st.integers(0, 2**31 - 1))
def test_igw_always_a_distribution(K, gamma, seed):
    rng = make_rng(seed, 0)
    preds = rng.random(K)
    p = igw_distribution(preds, gamma)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p > 0)


def test_igw_bulk_fuzz():
    rng = make_rng(1234, 0)
    for _ in range(20_000):
        K = int(rng.integers(2, 17))
        gamma = float(10 ** rng.uniform(-1, 4))
        p = igw_distribution(rng.random(K), gamma)
        assert abs(p.sum() - 1.0) < 1e-9
        assert np.all(p > 0)


# ---------------------------------------------------------------------------
# smoothness composition
# ---------------------------------------------------------------------------

def test_compose_smoothness_values():
    assert compose_smoothness(1.0, 1) == 1.0
    assert compose_smoothness(0.5, 4) == 0.125


def test_compose_smoothness_empirical_joint_density():
    sigma, K, n_atoms, draws = 0.5, 2, 10, 100_000
    ground = GroundSet.grid(n_atoms)
    mu = FiniteMeasure.uniform(ground)
    p = tilted_smooth_probs(mu.probs, sigma)
    rng = make_rng(0, 0)
    xs = np.searchsorted(np.cumsum(p), rng.random(draws), side="right")
    # an arbitrary context-dependent action rule
    actions = (rng.random(draws) < (0.2 + 0.6 * (xs % 2))).astype(int)
    joint = np.bincount(xs * K + actions, minlength=n_atoms * K) / draws
    base = np.repeat(mu.probs / K, K)
    bound = K / sigma
    se = 3 * np.sqrt(joint * (1 - joint) / draws) / base
    assert np.all(joint / base <= bound + se + 1e-9)


# ---------------------------------------------------------------------------
# the reduction
# ---------------------------------------------------------------------------

def _bandit_pieces(seed, K=2, atoms=8, H=4, T=60, sigma=0.5):
    class_rng = make_rng(77, 0)
    values = class_rng.random((H, atoms, K))
    klass = product_class(values)
    ground = GroundSet.grid(atoms)
    mu_x = FiniteMeasure.uniform(ground)
    adversary = IidAdversary(SmoothnessCertificate(sigma=sigma, mu=mu_x),
                             rademacher_labels(), make_rng(seed, 0),
                             p=tilted_smooth_probs(mu_x.probs, sigma))
    sigma_joint = compose_smoothness(sigma, K)
    sched = schedule(T, sigma_joint, L=2.0, variant="dual")
    regressor = FtplLearner("dual", klass, square_loss(), product_measure(mu_x, K),
                            sched, ErmOracle(klass, square_loss()), make_rng(seed, 1),
                            label_range=(0.0, 1.0))
    return adversary, regressor, values[0], klass


def test_square_cb_round_trip_and_bookkeeping():
    adversary, regressor, f_star, klass = _bandit_pieces(seed=0)
    gamma = default_gamma(60, 2, 0.5, n_hypotheses=4)
    result = run_square_cb(adversary, regressor, K=2, T=60, f_star=f_star,
                           gamma=gamma, rng=make_rng(0, 2))
    assert len(result.rounds) == 60
    assert result.oracle_calls == 60  # one call per round for the proper regressor
    for r in result.rounds:
        assert abs(r.action_distribution.sum() - 1.0) < 1e-12
        assert np.all(r.action_distribution > 0)
        assert r.observed_loss in (0.0, 1.0)
    # square-loss regret recomputation from the trace
    assert result.recompute_reg_sq(klass, K=2) == pytest.approx(result.reg_sq, abs=1e-9)


def test_square_cb_single_action_has_zero_regret():
    adversary, regressor, f_star, klass = _bandit_pieces(seed=1, K=1)
    result = run_square_cb(adversary, regressor, K=1, T=40, f_star=f_star,
                           gamma=5.0, rng=make_rng(1, 2))
    assert result.reg_cb == pytest.approx(0.0, abs=1e-12)
    assert all(r.action == 0 for r in result.rounds)


def test_square_cb_realizable_mean_structure():
    """Conditional means of the Bernoulli losses equal f_star exactly."""
    adversary, regressor, f_star, klass = _bandit_pieces(seed=2, T=400)
    result = run_square_cb(adversary, regressor, K=2, T=400, f_star=f_star,
                           gamma=20.0, rng=make_rng(2, 2))
    losses = np.vstack([r.all_losses for r in result.rounds])
    xs = np.array([r.x_id for r in result.rounds])
    for atom in np.unique(xs):
        mask = xs == atom
        if mask.sum() >= 50:
            emp = losses[mask].mean(axis=0)
            se = 3 / math.sqrt(mask.sum())
            assert np.all(np.abs(emp - f_star[atom]) <= se + 0.05)


def test_relax_regressor_runs_inside_reduction():
    from smoothol.relaxation import RelaxGeneralLearner

    atoms, K, T = 6, 2, 6
    class_rng = make_rng(88, 0)
    values = class_rng.random((3, atoms, K))
    klass = product_class(values)
    mu_x = FiniteMeasure.uniform(GroundSet.grid(atoms))
    adversary = IidAdversary(SmoothnessCertificate(sigma=0.5, mu=mu_x),
                             rademacher_labels(), make_rng(3, 0))
    regressor = RelaxGeneralLearner(klass, square_loss(), product_measure(mu_x, K),
                                    T, compose_smoothness(0.5, K),
                                    ErmOracle(klass, square_loss()), make_rng(3, 1), k=4)
    result = run_square_cb(adversary, regressor, K=K, T=T, f_star=values[0],
                           gamma=10.0, rng=make_rng(3, 2))
    for r in result.rounds:
        assert np.all((r.predictions >= 0.0) & (r.predictions <= 1.0))
    # improper regressor: |S| oracle calls per action per round
    grid_size = len(regressor.state.grid)
    assert result.oracle_calls == T * K * grid_size


def test_out_of_range_predictions_are_clamped_with_warning(caplog):
    class StubRegressor:
        proper = False

        def __init__(self, klass):
            self.klass = klass
            self.oracle = type("O", (), {"calls": 0})()

        def predict(self, point):
            return 1.3  # deliberately outside [0, 1]

        def observe(self, point, label):
            pass

    atoms, K = 4, 2
    values = make_rng(89, 0).random((2, atoms, K))
    klass = product_class(values)
    mu_x = FiniteMeasure.uniform(GroundSet.grid(atoms))
    adversary = IidAdversary(SmoothnessCertificate(sigma=1.0, mu=mu_x),
                             rademacher_labels(), make_rng(4, 0))
    with caplog.at_level(logging.WARNING):
        result = run_square_cb(adversary, StubRegressor(klass), K=K, T=3,
                               f_star=values[0], gamma=10.0, rng=make_rng(4, 1))
    assert any("clamp" in rec.message for rec in caplog.records)
    for r in result.rounds:
        assert np.all(r.predictions == 1.0)


def test_action_rule_is_swappable():
    """The reduction takes any predictions -> distribution map in place of IGW."""
    adversary, regressor, f_star, klass = _bandit_pieces(seed=5, T=30)

    def uniform_rule(predictions, gamma):
        return np.full(len(predictions), 1.0 / len(predictions))

    result = run_square_cb(adversary, regressor, K=2, T=30, f_star=f_star,
                           gamma=3.0, rng=make_rng(5, 2), action_rule=uniform_rule)
    for r in result.rounds:
        np.testing.assert_allclose(r.action_distribution, [0.5, 0.5])


def test_run_bandit_experiment_config_surface(tmp_path):
    raw = {
        "K": 2, "sigma": 0.5, "T": 30, "seeds": [0, 1],
        "regressor": "ftpl-dual", "ground": {"atoms": 6},
        "class": {"type": "random_product", "H": 3},
        "output_dir": str(tmp_path),
    }
    summary = run_bandit_experiment(raw)
    assert len(summary["per_seed"]) == 2
    assert (tmp_path / "bandit_summary.json").exists()
    finals = [r["reg_cb"] for r in summary["per_seed"]]
    assert summary["aggregate"]["mean_reg_cb"] == pytest.approx(np.mean(finals), abs=1e-9)


def test_run_bandit_experiment_validates():
    from smoothol.harness import ConfigError

    with pytest.raises(ConfigError, match="regressor"):
        run_bandit_experiment({"K": 2, "sigma": 0.5, "T": 10, "seeds": [0],
                               "regressor": "nope"})
