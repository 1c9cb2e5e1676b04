import math

import numpy as np
import pytest

from lqr_autotune.entropy import (AcquisitionConfig, PminDistribution,
                                  RepresenterSet, approximate_pmin,
                                  baseline_acquisition, build_representers,
                                  ei_value, expected_entropy_change,
                                  expected_improvement_batch, pi_value,
                                  relative_entropy, score_candidates,
                                  select_next, ucb_value)
from lqr_autotune.gp import Dataset, GpSurrogate, Hyperparams

# chi-square critical value, 9 degrees of freedom, alpha = 0.01
CHI2_9_99 = 21.666


def surrogate_of(locations, values, lengthscales=(1.0,), signal_std=1.0,
                 noise_std=0.1):
    hyper = Hyperparams(lengthscales=list(lengthscales), signal_std=signal_std,
                        noise_std=noise_std)
    return GpSurrogate(hyper=hyper, data=Dataset(locations=locations, values=values))


def empty_surrogate(dim=1):
    hyper = Hyperparams(lengthscales=np.full(dim, 2.5), signal_std=0.2,
                        noise_std=0.033)
    return GpSurrogate(hyper=hyper,
                       data=Dataset(locations=np.zeros((0, dim)), values=[]))


# --- representer construction -------------------------------------------------

def test_representers_minimum_count():
    reps = build_representers([[0.0, 1.0]], empty_surrogate(), m=2, rng_seed=0)
    assert len(reps) == 2
    assert np.all(reps.points >= 0.0) and np.all(reps.points <= 1.0)
    with pytest.raises(ValueError):
        build_representers([[0.0, 1.0]], empty_surrogate(), m=1, rng_seed=0)


def test_representers_uniform_without_data():
    # chi-square uniformity over 10 bins at alpha=0.01
    reps = build_representers([[0.0, 1.0]], empty_surrogate(), m=10_000, rng_seed=3)
    counts, _ = np.histogram(reps.points[:, 0], bins=10, range=(0.0, 1.0))
    expected = 1000.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < CHI2_9_99


def test_representers_concentrate_in_basin():
    # one deep minimum at x=5: at least half of the focused points land where
    # the posterior mean is below the dataset median
    s = surrogate_of([[0.0], [5.0], [10.0]], [1.0, -2.0, 1.0],
                     lengthscales=[1.5], signal_std=1.0, noise_std=0.05)
    m = 2000
    reps = build_representers([[0.0, 10.0]], s, m=m, rng_seed=5)
    focused = reps.points[m // 2:]
    from lqr_autotune.gp import posterior_batch
    mean, _ = posterior_batch(s, focused)
    median = float(np.median(s.data.values))
    assert np.mean(mean < median) >= 0.5


def test_representers_deterministic():
    a = build_representers([[0.0, 1.0]], empty_surrogate(), m=50, rng_seed=9)
    b = build_representers([[0.0, 1.0]], empty_surrogate(), m=50, rng_seed=9)
    assert np.array_equal(a.points, b.points)


# --- pmin -----------------------------------------------------------------------

def test_pmin_single_point():
    p = approximate_pmin(empty_surrogate(), RepresenterSet(points=[[0.5]]),
                         n_samples=64, rng_seed=0)
    assert p.probs.tolist() == [1.0]


def test_pmin_symmetric_prior():
    p = approximate_pmin(empty_surrogate(), RepresenterSet(points=[[2.0], [8.0]]),
                         n_samples=10_000, rng_seed=1)
    mc_3sigma = 3.0 * 0.5 / math.sqrt(10_000)
    assert abs(p.probs[0] - 0.5) <= mc_3sigma
    assert p.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_pmin_resolves_separated_points():
    # posterior means 0 and 10 with ~1e-3 std: all mass on the lower point
    s = surrogate_of([[0.0], [5.0]], [0.0, 10.0], lengthscales=[0.5],
                     signal_std=1.0, noise_std=1e-3)
    p = approximate_pmin(s, RepresenterSet(points=[[0.0], [5.0]]),
                         n_samples=10_000, rng_seed=2)
    assert p.probs[0] >= 0.999


def test_pmin_normalization_random_cases():
    rng = np.random.default_rng(4)
    for _ in range(5):
        x = rng.uniform(0, 10, (4, 1))
        y = rng.standard_normal(4)
        s = surrogate_of(x, y)
        reps = RepresenterSet(points=rng.uniform(0, 10, (30, 1)))
        p = approximate_pmin(s, reps, n_samples=500, rng_seed=int(rng.integers(1e6)))
        assert abs(p.probs.sum() - 1.0) <= 1e-9
        assert np.all(p.probs >= 0.0)


def test_pmin_distribution_validates():
    with pytest.raises(ValueError):
        PminDistribution(probs=[0.5, 0.4])
    with pytest.raises(ValueError):
        PminDistribution(probs=[1.5, -0.5])


# --- relative entropy -------------------------------------------------------------

def test_entropy_uniform_is_zero():
    assert relative_entropy(PminDistribution(probs=np.full(7, 1 / 7))) == 0.0


def test_entropy_delta_is_log_m():
    probs = np.zeros(100)
    probs[42] = 1.0
    assert relative_entropy(PminDistribution(probs=probs)) == pytest.approx(
        math.log(100), rel=1e-12)
    assert math.log(100) == pytest.approx(4.60517, abs=1e-5)


def test_entropy_hand_computed_two_point_case():
    h = relative_entropy(PminDistribution(probs=[0.75, 0.25]))
    assert h == pytest.approx(0.130812, abs=1e-6)


def test_entropy_within_bounds():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = int(rng.integers(2, 50))
        p = rng.dirichlet(np.ones(m))
        h = relative_entropy(PminDistribution(probs=p))
        assert -1e-12 <= h <= math.log(m) + 1e-12


# --- expected entropy change ------------------------------------------------------

def test_gain_vanishes_at_replicated_observation():
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3], noise_std=1e-4)
    reps = RepresenterSet(points=np.linspace(0, 10, 25)[:, None])
    gain = expected_entropy_change(s, reps, [7.0], quadrature_order=9,
                                   n_samples=3000, rng_seed=3)
    assert abs(gain) < 0.02


def test_gain_symmetric_for_symmetric_candidates():
    reps = RepresenterSet(points=[[2.0], [8.0]])
    ga = expected_entropy_change(empty_surrogate(), reps, [2.0],
                                 quadrature_order=9, n_samples=4000, rng_seed=5)
    gb = expected_entropy_change(empty_surrogate(), reps, [8.0],
                                 quadrature_order=9, n_samples=4000, rng_seed=5)
    assert ga == pytest.approx(gb, abs=0.05)
    assert ga > 0.0


def test_informative_point_beats_replica():
    # evaluating where the posterior is uncertain must promise at least as
    # much entropy gain as re-evaluating a known point (common random numbers)
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3], noise_std=1e-4)
    reps = RepresenterSet(points=np.linspace(0, 10, 25)[:, None])
    from lqr_autotune.gp import posterior_batch
    _, var = posterior_batch(s, reps.points)
    high_var_point = reps.points[int(np.argmax(var))]
    g_high = expected_entropy_change(s, reps, high_var_point, 9, 3000, rng_seed=11)
    g_rep = expected_entropy_change(s, reps, [7.0], 9, 3000, rng_seed=11)
    assert g_high >= g_rep


# --- selection ---------------------------------------------------------------------

def test_select_single_candidate():
    s = surrogate_of([[2.0]], [0.1])
    reps = RepresenterSet(points=np.linspace(0, 10, 12)[:, None])
    choice = select_next(s, reps, candidates=[[4.0]],
                         config=AcquisitionConfig(n_samples=400, rng_seed=1))
    assert choice.next_theta.tolist() == [4.0]


def test_select_prefers_high_variance_region():
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3], noise_std=1e-4)
    reps = RepresenterSet(points=np.linspace(0, 10, 25)[:, None])
    cfg = AcquisitionConfig(n_samples=2000, rng_seed=13)
    gains, _, points = score_candidates(s, reps, None, cfg)
    dist_to_data = np.minimum(np.abs(points[:, 0] - 2.0), np.abs(points[:, 0] - 7.0))
    assert dist_to_data[int(np.argmax(gains))] > 0.5


def test_select_deterministic():
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3])
    reps = RepresenterSet(points=np.linspace(0, 10, 20)[:, None])
    cfg = AcquisitionConfig(n_samples=800, rng_seed=21)
    a = select_next(s, reps, None, cfg)
    b = select_next(s, reps, None, cfg)
    assert np.array_equal(a.next_theta, b.next_theta)
    assert a.expected_gain == b.expected_gain
    assert np.array_equal(a.best_guess, b.best_guess)


def test_select_best_guess_matches_pmin_argmax():
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3])
    reps = RepresenterSet(points=np.linspace(0, 10, 20)[:, None])
    cfg = AcquisitionConfig(n_samples=800, rng_seed=22)
    choice = select_next(s, reps, None, cfg)
    pmin = approximate_pmin(s, reps, n_samples=800, rng_seed=22)
    assert np.array_equal(choice.best_guess,
                          reps.points[int(np.argmax(pmin.probs))])


def test_batch_pmin_identical_with_extra_candidates():
    # appending explicit candidates must not change the representer draw
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3])
    reps = RepresenterSet(points=np.linspace(0, 10, 20)[:, None])
    cfg = AcquisitionConfig(n_samples=600, rng_seed=23)
    _, pmin_plain, _ = score_candidates(s, reps, None, cfg)
    _, pmin_extra, _ = score_candidates(s, reps, [[3.3], [6.6]], cfg)
    assert np.array_equal(pmin_plain.probs, pmin_extra.probs)


def test_batch_scorer_agrees_with_per_candidate_estimator():
    # the joint-sampling scorer and the conditioning-based estimator use
    # different random couplings of the same expectation
    s = surrogate_of([[1.0], [5.0], [9.0]], [0.6, -0.4, 0.2],
                     lengthscales=[1.5], noise_std=0.1)
    reps = RepresenterSet(points=np.linspace(0, 10, 15)[:, None])
    cands = np.array([[0.5], [3.0], [5.0], [7.0], [9.5]])
    cfg = AcquisitionConfig(n_samples=4000, quadrature_order=9, rng_seed=31)
    batch_gains, _, _ = score_candidates(s, reps, cands, cfg)
    for cand, batch in zip(cands, batch_gains):
        literal = expected_entropy_change(s, reps, cand, quadrature_order=9,
                                          n_samples=4000, rng_seed=31)
        assert batch == pytest.approx(literal, abs=0.02)


def test_candidate_index_subset():
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3])
    reps = RepresenterSet(points=np.linspace(0, 10, 20)[:, None])
    cfg = AcquisitionConfig(n_samples=600, rng_seed=24)
    gains_all, _, _ = score_candidates(s, reps, None, cfg)
    idx = np.array([0, 5, 17])
    gains_sub, _, pts = score_candidates(s, reps, None, cfg, candidate_indices=idx)
    assert np.array_equal(pts, reps.points[idx])
    assert gains_sub == pytest.approx(gains_all[idx], abs=1e-12)


def test_equal_gains_break_ties_to_lowest_index():
    # duplicated candidate rows produce bitwise-equal gains, so the argmax
    # must resolve to the first entry
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3])
    reps = RepresenterSet(points=np.linspace(0, 10, 12)[:, None])
    cfg = AcquisitionConfig(n_samples=500, rng_seed=25)
    gains, _, pts = score_candidates(s, reps, None, cfg,
                                     candidate_indices=np.array([4, 4, 4]))
    assert gains[0] == gains[1] == gains[2]
    assert int(np.argmax(gains)) == 0
    assert np.array_equal(pts[0], reps.points[4])


# --- baselines ----------------------------------------------------------------------

def test_pi_at_incumbent_mean():
    assert pi_value(1.0, 0.7, 1.0) == 0.5


def test_pi_far_query_exact_half():
    # far from data the posterior is the prior: mean exactly 0
    s = surrogate_of([[0.0]], [0.3], lengthscales=[1.0])
    assert baseline_acquisition("pi", s, [1e4], incumbent=0.0) == 0.5


def test_degenerate_std_limits():
    assert pi_value(0.5, 0.0, 1.0) == 1.0
    assert pi_value(1.5, 0.0, 1.0) == 0.0
    assert pi_value(1.0, 0.0, 1.0) == 0.0
    assert ei_value(0.8, 0.0, 1.5) == pytest.approx(0.7, rel=1e-12)
    assert ei_value(2.0, 0.0, 1.5) == 0.0


def test_ei_hand_computed_value():
    assert ei_value(1.0, 1.0, 1.5) == pytest.approx(0.697796, abs=1e-5)


def test_ucb_formula():
    assert ucb_value(0.3, 0.2, 2.0) == pytest.approx(-0.3 + 0.4, rel=1e-12)


def test_ei_nonnegative_pi_bounded():
    rng = np.random.default_rng(17)
    for _ in range(200):
        mean, std, inc = rng.normal(), abs(rng.normal()), rng.normal()
        assert ei_value(mean, std, inc) >= 0.0
        assert 0.0 <= pi_value(mean, std, inc) <= 1.0


def test_baseline_requires_data_for_improvement():
    with pytest.raises(ValueError):
        baseline_acquisition("ei", empty_surrogate(), [1.0])
    with pytest.raises(ValueError):
        baseline_acquisition("nope", empty_surrogate(), [1.0])


def test_ei_batch_matches_scalar():
    s = surrogate_of([[2.0], [7.0]], [0.5, -0.3])
    queries = np.linspace(0, 10, 7)[:, None]
    batch = expected_improvement_batch(s, queries)
    for q, e in zip(queries, batch):
        assert baseline_acquisition("ei", s, q) == pytest.approx(e, rel=1e-10)
