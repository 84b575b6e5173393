import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from wpt.diffusion_limit import (
    SimplifiedConfig,
    excursion_weights,
    h_transform,
    hitting_time,
    i_beta,
    ladder_eqn_beta,
    limit_acceptance,
    mean_hitting_time,
    mixing_scaling_fit,
    piecewise_uniform_check,
    reflection_bounds,
    simplified_st_run,
    skew_bm_simulate,
    skew_side_masses,
    spacing_function,
    walsh_arm_fractions,
    walsh_bm_simulate,
    z_transform,
)
from wpt.mixture_targets import ExponentialPower, Gaussian, SkewNormal


# --- ladders ------------------------------------------------------------------

def test_small_d_ladder_is_degenerate():
    with pytest.warns(UserWarning, match="degenerate"):
        lad = ladder_eqn_beta(4, 2.38, 0.01, rule="euler")
    np.testing.assert_array_equal(lad.betas, [1.0, 0.01])
    assert lad.degenerate


def test_large_d_first_step():
    lad = ladder_eqn_beta(10_000, 2.38, 0.5, rule="euler")
    assert lad.betas[1] == pytest.approx(0.9762, abs=1e-12)
    lad = ladder_eqn_beta(10_000, 2.38, 0.5, rule="exact")
    assert lad.betas[1] == pytest.approx(math.exp(-0.0238), rel=1e-14)


def test_ladder_clamps_and_decreases():
    for rule in ("euler", "exact"):
        lad = ladder_eqn_beta(100, 2.38, 0.01, rule=rule)
        assert lad.betas[0] == 1.0 and lad.betas[-1] == 0.01
        assert np.all(np.diff(lad.betas) < 0)
        assert np.all(lad.betas[:-1] > 0.01)


def test_ladder_length_grows_like_root_d():
    # levels ~ sqrt(d) log(1/beta_min) / ell0
    counts = {d: len(ladder_eqn_beta(d, 2.38, 1e-3, rule="exact")) - 1 for d in (100, 10_000)}
    for d, n in counts.items():
        assert n == math.ceil(math.sqrt(d) * math.log(1e3) / 2.38 - 1e-9)
    slope = math.log(counts[10_000] / counts[100]) / math.log(100)
    assert slope == pytest.approx(0.5, abs=0.02)


def test_ladder_callable_spacing_matches_constant():
    a = ladder_eqn_beta(400, 2.38, 0.01, rule="exact")
    b = ladder_eqn_beta(400, spacing_function(2.38), 0.01, rule="exact")
    np.testing.assert_allclose(a.betas, b.betas, rtol=1e-8)
    c = ladder_eqn_beta(400, spacing_function(2.38), 0.01, rule="euler")
    np.testing.assert_allclose(c.betas, ladder_eqn_beta(400, 2.38, 0.01, rule="euler").betas, rtol=1e-14)


def test_ladder_errors():
    with pytest.raises(ValueError):
        ladder_eqn_beta(100, -1.0, 0.01)
    with pytest.raises(ValueError):
        ladder_eqn_beta(100, lambda b: -b, 0.01)
    with pytest.raises(ValueError):
        ladder_eqn_beta(100, 2.38, 1.5)
    with pytest.raises(ValueError):
        ladder_eqn_beta(100, 2.38, 0.01, rule="midpoint")


# --- I(beta) ------------------------------------------------------------------

def test_i_beta_closed_forms():
    assert i_beta(Gaussian(0.0, 1.0), 1.0) == 0.5
    assert i_beta(ExponentialPower(1.0, 1.0), 0.5) == 4.0


@pytest.mark.parametrize("r", [1.0, 2.0, 4.0])
@pytest.mark.parametrize("beta", [0.1, 1.0])
def test_i_beta_quadrature_agrees(r, beta):
    f = ExponentialPower(1.3, r)
    assert i_beta(f, beta, method="quad") == pytest.approx(i_beta(f, beta), abs=1e-6)


def test_i_beta_skew_normal_against_sampling():
    f = SkewNormal(0.0, 1.0, 3.0)
    quad = i_beta(f, 1.0)
    x = stats.skewnorm.rvs(3.0, size=400_000, random_state=np.random.default_rng(0))
    mc = np.var(stats.skewnorm.logpdf(x, 3.0))
    assert quad == pytest.approx(mc, rel=0.03)
    with pytest.raises(ValueError):
        i_beta(f, 1.0, method="analytic")
    with pytest.raises(ValueError):
        i_beta(f, 0.0)


def test_limit_acceptance_value():
    assert limit_acceptance(2.0) == pytest.approx(2 * stats.norm.cdf(-2.38 / (2 * math.sqrt(2))), rel=1e-14)
    assert limit_acceptance(2.0) == pytest.approx(0.40, abs=0.005)


# --- simplified process -------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SimplifiedConfig(d=10, p=1.5)
    with pytest.raises(ValueError):
        SimplifiedConfig(d=10, ell0=0.0)
    with pytest.raises(ValueError):
        SimplifiedConfig(d=10, beta_min=0.0)
    with pytest.raises(ValueError):
        SimplifiedConfig(d=10, beta_min_rule="sqrt")
    cfg = SimplifiedConfig.from_dict({"d": 9, "beta_min_rule": "inverse_d_squared", "r": [1, 4]})
    assert cfg.effective_beta_min == pytest.approx(1 / 81)
    assert cfg.r == (1.0, 4.0)


@pytest.fixture(scope="module")
def long_run():
    cfg = SimplifiedConfig(d=100, p=0.3, beta_min=0.01, families=(ExponentialPower(1.0, 2.0),
                                                                  ExponentialPower(1.0, 1.0)))
    return simplified_st_run(cfg, 4_000_000, np.random.default_rng(11))


def test_rung_acceptance_matches_limit(long_run):
    # the clamped last rung has a shorter gap and is excluded
    for mode, r in ((1, 2.0), (2, 1.0)):
        rates = long_run.rung_acceptance(mode)[:-1]
        assert np.all(np.abs(rates - limit_acceptance(r)) < 0.02)
        assert np.ptp(rates) < 0.03


def test_positive_fraction_is_p(long_run):
    assert abs(long_run.positive_fraction - 0.3) < 0.03


def test_quadratic_variation_per_unit_time(long_run):
    assert long_run.qv_per_unit_time() == pytest.approx(1.0, rel=0.10)


def test_p_one_never_flips():
    cfg = SimplifiedConfig(d=25, p=1.0, beta_min=0.1)
    run = simplified_st_run(cfg, 50_000, np.random.default_rng(0), record=True)
    assert np.all(run.path.modes == 1)
    assert np.all(run.path.values > 0)
    assert run.occupancy[:, 1].sum() == 0


def test_signed_path_invariants():
    cfg = SimplifiedConfig(d=36, p=0.5, beta_min=0.05)
    run = simplified_st_run(cfg, 40_000, np.random.default_rng(2), record=True)
    v = run.path.values
    assert np.all((np.abs(v) >= 0.05 - 1e-15) & (np.abs(v) <= 1.0))
    np.testing.assert_array_equal(np.sign(v), 3 - 2 * run.path.modes.astype(int))
    assert run.path.times[-1] == pytest.approx(40_000 / 36)
    # h of the path is continuous across mode flips: both sides map to 0 at beta_min
    h = h_transform(v, cfg.ell0, 0.05)
    flips = np.flatnonzero(np.diff(run.path.modes.astype(int)) != 0)
    assert flips.size > 10
    np.testing.assert_allclose(h[flips], 0.0, atol=1e-12)
    # a flip step moves h by at most one rung, like any other step
    assert np.max(np.abs(np.diff(h))) <= 1 / math.sqrt(36) + 1e-12


def test_simplified_deterministic_given_seed():
    cfg = SimplifiedConfig(d=50, p=0.4, beta_min=0.02)
    a = simplified_st_run(cfg, 30_000, np.random.default_rng(5), record=True)
    b = simplified_st_run(cfg, 30_000, np.random.default_rng(5), record=True)
    np.testing.assert_array_equal(a.path.levels, b.path.levels)
    np.testing.assert_array_equal(a.path.modes, b.path.modes)
    np.testing.assert_array_equal(a.occupancy, b.occupancy)
    assert a.occupancy.sum() == 30_000


def test_hitting_time_from_the_top():
    cfg = SimplifiedConfig(d=25, beta_min=0.1)
    t = hitting_time(cfg, np.random.default_rng(0))
    assert t >= len(cfg.ladder()) - 1
    with pytest.raises(ValueError):
        mean_hitting_time(cfg, 1, np.random.default_rng(0))


def test_hitting_time_grows_with_log_beta_min_squared():
    rng = np.random.default_rng(3)
    base = SimplifiedConfig(d=25, beta_min=0.01)
    t1, _ = mean_hitting_time(base, 250, rng)
    t2, _ = mean_hitting_time(base.with_(beta_min=0.005), 250, rng)
    predicted = (math.log(0.005) / math.log(0.01)) ** 2
    assert t2 / t1 == pytest.approx(predicted, rel=0.30)


def test_scaling_fit_small():
    fit = mixing_scaling_fit(SimplifiedConfig(d=16, beta_min=0.1), [16, 64, 256], 60,
                             np.random.default_rng(4))
    assert len(fit.times) == 3 and all(len(t) == 60 for t in fit.times)
    assert fit.mean_times == pytest.approx([np.mean(t) for t in fit.times])
    assert 0.6 < fit.slope < 1.4 and fit.r2 > 0.9
    with pytest.raises(ValueError):
        mixing_scaling_fit(SimplifiedConfig(d=16), [16, 64], 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        mixing_scaling_fit(SimplifiedConfig(d=16), [16, 64, 256], 1, np.random.default_rng(0))


# --- transforms ---------------------------------------------------------------

def test_h_examples():
    assert h_transform(0.01, 2.38, 0.01) == 0.0
    assert h_transform(-0.01, 2.38, 0.01) == 0.0
    assert h_transform(0.0, 2.38, 0.01) == 0.0
    assert h_transform(1.0, 2.38, math.exp(-2.38)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        h_transform(0.005, 2.38, 0.01)
    with pytest.raises(ValueError):
        h_transform(1.5, 2.38, 0.01)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1e-4, 0.5))
def test_h_is_odd(t, beta_min):
    x = beta_min ** (1 - t)
    assert h_transform(-x, 2.38, beta_min) == -h_transform(x, 2.38, beta_min)


def test_h_general_spacing_by_quadrature():
    ell = lambda u: u * 2.38 * (1 + 0.0 * u)  # noqa: E731
    x = np.array([-0.7, 0.03, 0.4])
    np.testing.assert_allclose(h_transform(x, ell, 0.01), h_transform(x, 2.38, 0.01), rtol=1e-10)
    ell2 = lambda u: math.sqrt(u)  # noqa: E731
    assert h_transform(0.64, ell2, 0.04) == pytest.approx(2 * (0.8 - 0.2), rel=1e-10)


def test_z_examples():
    assert z_transform(0.0, 1.0, 2.0) == 0.0
    h = np.linspace(-2, 2, 9)
    z = z_transform(h, 2.0, 2.0)
    np.testing.assert_allclose(z, h * limit_acceptance(2.0) ** -0.5, rtol=1e-14)
    z = z_transform(h, 1.0, 4.0)
    assert z[-1] / h[-1] == pytest.approx(limit_acceptance(1.0) ** -0.5)
    assert z[0] / h[0] == pytest.approx(limit_acceptance(4.0) ** -0.5)


def test_reflection_bounds_compose_transforms():
    r1, r2, ell0, bmin = 1.0, 4.0, 2.38, 0.02
    zmin, zmax = reflection_bounds(r1, r2, ell0, bmin)
    assert zmax == pytest.approx(z_transform(h_transform(1.0, ell0, bmin), r1, r2, ell0), rel=1e-14)
    assert zmin == pytest.approx(z_transform(h_transform(-1.0, ell0, bmin), r1, r2, ell0), rel=1e-14)
    g = reflection_bounds(r1, r2, ell0, bmin, ell=spacing_function(ell0))
    assert g == pytest.approx((zmin, zmax), rel=1e-10)


# --- reference Brownian motions ---------------------------------------------

def test_skew_bm_symmetric_case():
    path = skew_bm_simulate(1.0, 1.0, -1.0, 2.0, 1e-3, 4_000_000, np.random.default_rng(0), record=False)
    pos, neg, _, _ = skew_side_masses(path)
    assert abs(pos - 2 / 3) < 0.02


def test_skew_bm_density_ratio_and_mass():
    p, r1, r2 = 0.3, 2.0, 1.0
    a, b = excursion_weights(p, r1, r2)
    zmin, zmax = reflection_bounds(r1, r2, 2.38, 0.01)
    dt = 1e-4 * (zmax - zmin) ** 2
    path = skew_bm_simulate(a, b, zmin, zmax, dt, 20_000_000, np.random.default_rng(1), record=False)
    pos, neg, dpos, dneg = skew_side_masses(path)
    assert (dpos / dneg) / (a / b) == pytest.approx(1.0, abs=0.05)
    assert abs(pos - p) < 0.03


def test_skew_bm_errors():
    with pytest.raises(ValueError):
        skew_bm_simulate(0.0, 1.0, -1, 1, 0.01, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        skew_bm_simulate(1.0, 1.0, 0.5, 1, 0.01, 10, np.random.default_rng(0))


def test_walsh_two_arms_matches_skew():
    rng = np.random.default_rng(2)
    w = walsh_bm_simulate([0.3, 0.7], [1.0, 1.5], 1e-3, 4_000_000, rng, record=False)
    a, b = 0.3, 0.7
    s = skew_bm_simulate(a, b, -1.5, 1.0, 1e-3, 4_000_000, rng, record=False)
    pos, neg, _, _ = skew_side_masses(s)
    fr = walsh_arm_fractions(w)
    assert abs(fr[0] - pos) < 0.02 and abs(fr[1] - neg) < 0.02


def test_walsh_equal_arms_equal_occupancy():
    w = walsh_bm_simulate([1 / 3] * 3, [1.0] * 3, 1e-3, 6_000_000, np.random.default_rng(3), record=False)
    np.testing.assert_allclose(walsh_arm_fractions(w), 1 / 3, atol=0.02)


def test_walsh_degenerate_weights_stay_on_arm_one():
    w = walsh_bm_simulate([1.0, 0.0, 0.0], [1.0] * 3, 1e-2, 200_000, np.random.default_rng(4))
    assert set(np.unique(w.arms)) <= {-1, 0}
    np.testing.assert_array_equal(walsh_arm_fractions(w), [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        walsh_bm_simulate([1.0], [1.0], 0.01, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        walsh_bm_simulate([0.5, 0.6], [1.0, 1.0], 0.01, 10, np.random.default_rng(0))


# --- piecewise uniformity -----------------------------------------------------

def test_uniform_input_passes():
    rng = np.random.default_rng(0)
    v = np.concatenate([rng.uniform(0, 2, 4_000_000), -rng.uniform(0, 1, 4_000_000)])
    dp, dn = piecewise_uniform_check(v, bins=20)
    assert dp < 0.01 and dn < 0.01


def test_linear_density_fails():
    rng = np.random.default_rng(1)
    v = np.concatenate([np.sqrt(rng.random(400_000)), -rng.uniform(0, 1, 400_000)])
    dp, dn = piecewise_uniform_check(v, bins=20)
    assert dp > 0.20 and dn < 0.05


def test_uniformity_needs_samples_and_accepts_runs(long_run):
    with pytest.raises(ValueError):
        piecewise_uniform_check(np.array([0.1] * 50 + [-0.1] * 500))
    dp, dn = piecewise_uniform_check(long_run)
    assert dp < 0.05 and dn < 0.05


def test_lattice_support_grouping():
    support = np.arange(1, 41) * 0.1
    v = np.concatenate([np.repeat(support, 1000), -np.repeat(support, 500)])
    assert piecewise_uniform_check(v, bins=20, support=support) == (0.0, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        piecewise_uniform_check(v, bins=8, support=support)
