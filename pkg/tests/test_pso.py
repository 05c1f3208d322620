import numpy as np
import pytest

from doseopt import (AllocationMeasure, CompositeDesign, Design, DiscretePrior,
                     ParameterStructure, PsoConfig, bayes_logdet, check_equivalence, decode,
                     encode, optimize, validate_design)
from doseopt.pso import swarm_fitness

from conftest import XI_BAYES, measures_close, pooled_measure

FAST = dict(swarm_size=30, iterations=150, restarts=2)


class TestConfig:
    @pytest.mark.parametrize("bad", [
        dict(swarm_size=1), dict(iterations=0), dict(max_points_per_group=0),
        dict(chi=1.0), dict(chi=0.0), dict(weight_floor=0.5), dict(weight_floor=-0.1),
        dict(restarts=0), dict(topology="star"),
    ])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            PsoConfig(seed=0, **bad)

    def test_defaults(self):
        c = PsoConfig(seed=3)
        assert (c.swarm_size, c.iterations, c.restarts) == (60, 500, 4)
        assert (c.chi, c.c1, c.c2, c.weight_floor) == (0.7298, 1.49618, 1.49618, 0.01)


class TestDecode:
    S = ParameterStructure.common_location_scale("emax", [1.0, 2.0], [1.0, 1.0])
    CFG = PsoConfig(seed=0)

    def test_equal_scores_uniform_weights(self):
        x = np.zeros(2 * 2 * 3 + 2)
        x[0:3] = [0.1, 0.5, 0.9]
        x[6:9] = [0.2, 1.0, 1.8]
        xi = decode(x, self.S, self.CFG)
        for g in xi.groups:
            assert g.weights == pytest.approx((1 / 3,) * 3)
        assert xi.allocation.lambdas == pytest.approx((0.5, 0.5))

    def test_coincident_doses_merge(self):
        x = np.zeros(14)
        x[0:3] = [0.4, 0.4, 0.9]
        x[6:9] = [0.2, 1.0, 1.8]
        g = decode(x, self.S, self.CFG).groups[0]
        assert g.points == pytest.approx((0.4, 0.9))
        assert g.weights == pytest.approx((2 / 3, 1 / 3))

    def test_clamps_and_prunes(self):
        x = np.zeros(14)
        x[0:3] = [-1.0, 0.5, 5.0]
        x[3:6] = [0.0, 0.0, -8.0]  # third weight falls below the floor
        x[6:9] = [0.2, 1.0, 1.8]
        g = decode(x, self.S, self.CFG).groups[0]
        assert g.points == (0.0, 0.5)
        assert sum(g.weights) == pytest.approx(1.0, abs=1e-15)

    def test_round_trip(self):
        xi = decode(encode(XI_BAYES, ParameterStructure.common_location_scale(
            "emax", [1, 1], [1, 1]), self.CFG), ParameterStructure.common_location_scale(
            "emax", [1, 1], [1, 1]), self.CFG)
        for a, b in zip(xi.groups, XI_BAYES.groups):
            assert a.points == pytest.approx(b.points, abs=1e-12)
            assert a.weights == pytest.approx(b.weights, abs=1e-12)
        assert xi.allocation.lambdas == pytest.approx(XI_BAYES.allocation.lambdas, abs=1e-12)

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            decode(np.zeros(5), self.S, self.CFG)

    def test_random_positions_always_valid(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            x = rng.uniform(-10, 10, 14)
            assert validate_design(decode(x, self.S, self.CFG), self.S).ok

    def test_fitness_matches_criterion_of_decoded(self, example):
        s, _, prior = example
        rng = np.random.default_rng(5)
        cfg = PsoConfig(seed=0)
        X = rng.uniform(-1, 1, (20, 14))
        X[:, 0:3] = rng.uniform(0, 1, (20, 3))
        X[:, 6:9] = rng.uniform(0, 1, (20, 3))
        F = swarm_fitness(X, s, prior, cfg)
        for x, f in zip(X, F):
            ref = bayes_logdet(s, decode(x, s, cfg), prior)
            if np.isfinite(ref):
                # Decoding merges doses within 1e-4·d_max; fitness does not.
                assert f == pytest.approx(ref, abs=1e-6)


class TestOptimize:
    def test_deterministic(self, example):
        s, _, prior = example
        a = optimize(s, prior, PsoConfig(seed=9, **FAST))
        b = optimize(s, prior, PsoConfig(seed=9, **FAST))
        assert a.design == b.design and a.value == b.value
        np.testing.assert_array_equal(a.trace, b.trace)

    def test_trace_monotone(self, example):
        s, _, prior = example
        res = optimize(s, prior, PsoConfig(seed=2, **FAST), initial=False)
        assert np.all(np.diff(res.trace) >= 0)
        assert len(res.trace) == FAST["iterations"] * FAST["restarts"]

    def test_never_below_saturated_seed(self, example):
        s, priors, prior = example
        from doseopt import common_location_scale_design
        sat = common_location_scale_design(s, priors, prior)
        res = optimize(s, prior, PsoConfig(seed=0, swarm_size=4, iterations=1, restarts=1))
        assert res.value >= sat.criterion

    def test_example_reaches_bayes_design(self, example):
        s, _, prior = example
        res = optimize(s, prior, PsoConfig(seed=1))
        assert res.value >= bayes_logdet(s, XI_BAYES, prior) - 1e-4
        assert measures_close(pooled_measure(res.design), pooled_measure(XI_BAYES), 0.01)
        assert check_equivalence(s, res.design, prior).max_violation <= 5e-3

    def test_individual_emax_dirac(self):
        s = ParameterStructure.individual("emax", 2.0)
        prior = DiscretePrior.dirac([0, 1, 0.5])
        res = optimize(s, prior, PsoConfig(seed=0, **FAST), initial=False)
        g = res.design.groups[0]
        assert g.points == pytest.approx((0.0, 2 * 0.5 / (2 + 1.0), 2.0), abs=1e-3)
        assert g.weights == pytest.approx((1 / 3,) * 3, abs=1e-3)

    def test_infeasible_support(self, example):
        s, _, prior = example
        cfg = PsoConfig(seed=0, max_points_per_group=1, iterations=1, restarts=1)
        with pytest.raises(RuntimeError):
            optimize(s, prior, cfg, initial=False)

    def test_explicit_initial_design(self, example):
        s, _, prior = example
        res = optimize(s, prior, PsoConfig(seed=0, swarm_size=4, iterations=1, restarts=1),
                       initial=XI_BAYES)
        assert res.value >= bayes_logdet(s, XI_BAYES, prior)

    def test_common_location_three_groups(self):
        s = ParameterStructure.common_location("exponential", [1.0] * 3, [1.0, 2.0, 2.0])
        prior = s.full_prior([DiscretePrior.dirac([0.5])] * 3)
        res = optimize(s, prior, PsoConfig(seed=0, **FAST))
        assert validate_design(res.design, s).ok
        assert np.isfinite(res.value)
