import numpy as np
import pytest

from proxynorm.proxy import inv_norm_cdf

from oracles import bisect_norm_ppf, norm_cdf_series


def test_median_is_zero():
    assert inv_norm_cdf(0.5) == 0.0


def test_frozen_value_0975():
    # bisection oracle gives 1.9599639845..., 1.959964 to six decimals
    assert abs(inv_norm_cdf(0.975) - 1.959964) < 1e-6


@pytest.mark.parametrize(
    "p",
    [1e-9, 1e-6, 1e-4, 0.011, 0.02425, 0.3, 0.5, 0.77, 0.97575, 0.999, 1 - 1e-6],
)
def test_matches_bisection_oracle(p):
    assert abs(inv_norm_cdf(p) - bisect_norm_ppf(p)) < 1e-7


def test_oracle_sweep_vectorized():
    ps = np.linspace(0.001, 0.999, 499)
    got = inv_norm_cdf(ps)
    want = np.array([bisect_norm_ppf(p) for p in ps])
    assert np.max(np.abs(got - want)) < 1e-7


def test_round_trip_through_series_cdf():
    # Phi(Phi^-1(p)) = p well below the contract tolerance
    for p in [1e-6, 0.02, 0.5, 0.9, 1 - 1e-6]:
        assert abs(norm_cdf_series(inv_norm_cdf(p)) - p) < 1e-9


def test_symmetry():
    for p in [1e-4, 0.01, 0.2, 0.49]:
        assert abs(inv_norm_cdf(p) + inv_norm_cdf(1.0 - p)) < 1e-12


def test_symmetry_deep_tail():
    # near p = 1 the float spacing of probabilities alone moves the
    # quantile by ~ulp(1)/(2*pdf(z)), so the bound widens with depth
    for p, bound in [(1e-8, 1e-8), (1e-12, 1e-5)]:
        assert abs(inv_norm_cdf(p) + inv_norm_cdf(1.0 - p)) < bound


def test_scalar_in_scalar_out():
    out = inv_norm_cdf(0.25)
    assert isinstance(out, float)


def test_array_shape_preserved():
    ps = np.full((3, 5), 0.5)
    assert inv_norm_cdf(ps).shape == (3, 5)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 1.5, np.nan])
def test_domain_errors(bad):
    with pytest.raises(ValueError):
        inv_norm_cdf(bad)


def test_array_with_one_bad_entry_rejected():
    with pytest.raises(ValueError):
        inv_norm_cdf(np.array([0.5, 1.0]))


def test_monotone_on_a_grid():
    ps = np.linspace(1e-7, 1 - 1e-7, 20001)
    zs = inv_norm_cdf(ps)
    assert (np.diff(zs) > 0).all()
