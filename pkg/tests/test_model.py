import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mccrobust.model import (
    DEFAULT_FIR_WEIGHTS,
    GaussianMixtureSpec,
    InputSpec,
    ScalarEIVDataset,
    VectorEIVDataset,
    clean_index_set,
    generate_fir_dataset,
    generate_scalar_dataset,
    read_dataset,
    sample_mixture,
    tapped_delay_rows,
    write_dataset,
)

from conftest import outlier_dataset


def _clean_probability(weight, mu, var, eps):
    # P(|N(0,var)| <= eps) for the inlier part plus the two outlier lobes
    s = math.sqrt(2 * var)
    inlier = math.erf(eps / s)
    lobe = 0.5 * (math.erf((mu + eps) / s) - math.erf((mu - eps) / s))
    return (1 - weight) * inlier + weight * lobe


class TestMixture:
    def test_zero_weight_is_plain_gaussian(self):
        spec = GaussianMixtureSpec(0.0, 10.0, 0.001)
        s = sample_mixture(spec, 200_000, np.random.default_rng(0))
        assert np.max(np.abs(s)) < 0.25
        assert s.var() == pytest.approx(0.001, rel=0.02)

    def test_moments_match_mixture_formula(self):
        spec = GaussianMixtureSpec(0.15, 10.0, 0.001)
        s = sample_mixture(spec, 1_000_000, np.random.default_rng(1))
        assert abs(s.mean()) < 0.02
        assert spec.total_variance == pytest.approx(15.001)
        assert s.var() == pytest.approx(15.001, rel=0.02)

    def test_full_weight_splits_between_lobes(self):
        spec = GaussianMixtureSpec(1.0, 5.0, 0.001)
        s = sample_mixture(spec, 1_000_000, np.random.default_rng(2))
        hi = np.mean(np.abs(s - 5) < 0.2)
        lo = np.mean(np.abs(s + 5) < 0.2)
        assert hi == pytest.approx(0.5, abs=0.005)
        assert lo == pytest.approx(0.5, abs=0.005)
        assert np.sum(np.abs(s) < 4) == 0

    @pytest.mark.parametrize("kw", [dict(weight=-0.1, outlier_mean=1, variance=1),
                                    dict(weight=1.1, outlier_mean=1, variance=1),
                                    dict(weight=0.5, outlier_mean=1, variance=0.0),
                                    dict(weight=0.5, outlier_mean=-1, variance=1)])
    def test_invalid_spec_rejected(self, kw):
        with pytest.raises(ValueError):
            GaussianMixtureSpec(**kw)

    def test_pdf_integrates_to_one(self):
        spec = GaussianMixtureSpec(0.3, 2.0, 0.5)
        t = np.linspace(-12, 12, 200_001)
        assert np.trapezoid(spec.pdf(t), t) == pytest.approx(1.0, abs=1e-9)


class TestScalarDataset:
    def test_noise_free_identity(self):
        ds = generate_scalar_dataset(3.0, InputSpec(), None, None, 50, 4)
        np.testing.assert_array_equal(ds.d, 3.0 * ds.x)
        np.testing.assert_array_equal(ds.x_obs, ds.x)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-5, 5), st.sampled_from(["two-interval", "gaussian", "constant"]))
    def test_construction_is_exact(self, seed, w0, kind):
        u = GaussianMixtureSpec(0.2, 3.0, 0.01)
        v = GaussianMixtureSpec(0.1, 7.0, 0.02)
        ds = generate_scalar_dataset(w0, InputSpec(kind), u, v, 64, seed)
        np.testing.assert_array_equal(ds.x_obs, ds.x + ds.u)
        np.testing.assert_array_equal(ds.d, w0 * ds.x + ds.v)

    def test_two_interval_support(self):
        ds = generate_scalar_dataset(1.0, InputSpec("two-interval"), None, None, 20_000, 5)
        mag = np.abs(ds.x)
        assert mag.min() >= 1.0 and mag.max() <= 2.0
        assert np.mean(ds.x > 0) == pytest.approx(0.5, abs=0.02)

    def test_seed_determinism(self):
        a = outlier_dataset(7)
        b = outlier_dataset(7)
        for name in ("x", "u", "v", "x_obs", "d"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            generate_scalar_dataset(3.0, InputSpec(), None, None, 0, 0)


class TestFirDataset:
    def test_single_tap_matches_scalar_generator(self):
        u = GaussianMixtureSpec(0.3, 5.0, 0.01)
        v = GaussianMixtureSpec(0.3, 2.0, 0.01)
        fir = generate_fir_dataset([1.7], 300, 1.0, u, v, 11)
        sc = generate_scalar_dataset(1.7, InputSpec("gaussian", 1.0), u, v, 300, 11)
        np.testing.assert_array_equal(fir.x_obs_rows[:, 0], sc.x_obs)
        np.testing.assert_array_equal(fir.d, sc.d)

    def test_noise_free_least_squares_recovers_weights(self):
        ds = generate_fir_dataset(DEFAULT_FIR_WEIGHTS, 500, 1.0, None, None, 3)
        X = ds.x_obs_rows
        w = np.linalg.solve(X.T @ X, X.T @ ds.d)
        np.testing.assert_allclose(w, DEFAULT_FIR_WEIGHTS, atol=1e-12)

    def test_zero_padding_before_time_zero(self):
        ds = generate_fir_dataset(DEFAULT_FIR_WEIGHTS, 50, 1.0, None, None, 3)
        for i in range(8):
            assert np.all(ds.x_rows[i, i + 1:] == 0.0)
            assert np.all(ds.x_rows[i, : i + 1] != 0.0)

    def test_series_placement_shares_noise_along_delay_line(self):
        u = GaussianMixtureSpec(0.3, 5.0, 0.01)
        ds = generate_fir_dataset(DEFAULT_FIR_WEIGHTS, 100, 1.0, u, None, 8, noise_placement="series")
        x_obs_series = ds.x_obs_rows[:, 0]
        np.testing.assert_array_equal(ds.x_obs_rows, tapped_delay_rows(x_obs_series, 9))

    def test_row_placement_shifts_whole_row(self):
        u = GaussianMixtureSpec(1.0, 5.0, 1e-6)
        ds = generate_fir_dataset(DEFAULT_FIR_WEIGHTS, 200, 1.0, u, None, 9)
        shift = np.round(ds.u_rows / 5.0)
        assert np.all(shift == shift[:, :1])
        assert set(np.unique(shift)) <= {-1.0, 1.0}

    def test_rejects_empty_weights(self):
        with pytest.raises(ValueError):
            generate_fir_dataset([], 10, 1.0, None, None, 0)


class TestCleanSet:
    def test_direct_definition(self):
        ds = ScalarEIVDataset(x_obs=[1.0, 2.0, 3.0], d=[0, 0, 0], u=[0.01, 0.5, -0.02], v=[0.0, 0.0, 3.0])
        cs = clean_index_set(ds, 0.07, 0.07)
        assert cs.indices.tolist() == [0]
        assert cs.m == 1
        assert cs.c == 1.0

    def test_ties_are_clean(self):
        ds = ScalarEIVDataset(x_obs=[1.0, -2.0], d=[0, 0], u=[0.07, -0.07], v=[-0.07, 0.07])
        assert clean_index_set(ds, 0.07, 0.07).m == 2

    def test_infinite_thresholds_keep_everything(self):
        ds = outlier_dataset(0)
        cs = clean_index_set(ds, math.inf, math.inf)
        assert cs.m == ds.n
        assert cs.c == pytest.approx(np.min(np.abs(ds.x_obs)))

    def test_empty_set_has_no_c(self):
        ds = ScalarEIVDataset(x_obs=[1.0], d=[0.0], u=[1.0], v=[0.0])
        cs = clean_index_set(ds, 0.1, 0.1)
        assert cs.m == 0 and cs.c is None

    def test_requires_noises(self):
        with pytest.raises(ValueError):
            clean_index_set(ScalarEIVDataset(x_obs=[1.0], d=[1.0]), 0.1, 0.1)

    def test_default_mixture_clean_count(self):
        # per-sample clean probability from the mixture tail mass
        p = _clean_probability(0.15, 10.0, 0.001, 0.07) ** 2
        expected = 1000 * p
        assert expected == pytest.approx(684.2, abs=0.1)
        # direct counting over many replicate draws
        counts = [clean_index_set(outlier_dataset(s), 0.07, 0.07).m for s in range(400)]
        assert np.mean(counts) == pytest.approx(expected, abs=3 * 14.7 / math.sqrt(400))
        sd = math.sqrt(1000 * p * (1 - p))
        assert abs(counts[0] - expected) < 4.5 * sd

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0, 0.2), st.floats(0, 0.2), st.floats(0, 0.2), st.floats(0, 0.2))
    def test_monotone_in_thresholds(self, a, b, da, db):
        ds = outlier_dataset(1, n=300)
        small = set(clean_index_set(ds, a, b).indices.tolist())
        big = set(clean_index_set(ds, a + da, b + db).indices.tolist())
        assert small <= big

    def test_vector_rows_use_all_taps(self):
        u_rows = np.array([[0.0, 0.0], [0.0, 1.0]])
        ds = VectorEIVDataset(x_obs_rows=[[3.0, 4.0], [1.0, 1.0]], d=[0.0, 0.0], u_rows=u_rows, v=[0.0, 0.0])
        cs = clean_index_set(ds, 0.1, 0.1)
        assert cs.indices.tolist() == [0]
        assert cs.c == pytest.approx(5.0)


class TestDatasetFiles:
    def test_scalar_round_trip(self, tmp_path):
        ds = outlier_dataset(3, n=40)
        path, meta = write_dataset(ds, tmp_path / "d.csv")
        assert path.read_text().splitlines()[0] == "i,x,u,v,x_obs,d"
        back = read_dataset(path)
        for name in ("x", "u", "v", "x_obs", "d"):
            np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))
        assert back.w0 == 3.0
        assert back.meta["u_spec"]["weight"] == 0.15

    def test_fir_round_trip(self, tmp_path):
        u = GaussianMixtureSpec(0.3, 5.0, 0.01)
        ds = generate_fir_dataset(DEFAULT_FIR_WEIGHTS, 30, 1.0, u, u, 1)
        path, _ = write_dataset(ds, tmp_path / "f.csv")
        back = read_dataset(path)
        assert isinstance(back, VectorEIVDataset)
        np.testing.assert_array_equal(back.x_obs_rows, ds.x_obs_rows)
        np.testing.assert_array_equal(back.u_rows, ds.u_rows)
        np.testing.assert_array_equal(back.w0, ds.w0)

    def test_external_data_without_noises(self, tmp_path):
        p = tmp_path / "ext.csv"
        p.write_text("i,x,u,v,x_obs,d\n0,,,,1.0,3.0\n1,,,,2.0,6.1\n")
        ds = read_dataset(p)
        assert ds.u is None and ds.w0 is None and not ds.has_noises
        np.testing.assert_array_equal(ds.d, [3.0, 6.1])

    def test_garbage_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_dataset(p)
