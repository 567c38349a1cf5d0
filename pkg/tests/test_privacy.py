from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import F, S, make_series
from gazegate.core import GazeSample, in_domain
from gazegate.errors import InvalidFactor, InvalidMechanism
from gazegate.privacy import (
    Y_LIMIT,
    MechanismConfig,
    OnlineMechanism,
    SpatialGrid,
    apply_gaussian,
    apply_mechanism,
    apply_spatial,
    apply_temporal,
    noise_rng,
)


def brute_force_cell(v: float, step: float, count: int) -> float:
    """Scan cells whose corners are the float products j*step; the last cell is open-ended."""
    corners = [j * step for j in range(count)]
    for j, lo in enumerate(corners):
        hi = corners[j + 1] if j + 1 < count else math.inf
        if lo <= v < hi:
            return lo
    raise AssertionError("value outside every cell")


def random_series(n, seed=0, rate=120.0):
    rng = np.random.default_rng(seed)
    return make_series(rng.uniform(0, 360, n), rng.uniform(0, 180, n), e=rng.choice([F, S], n), rate=rate)


class TestMechanismConfig:
    @pytest.mark.parametrize("text", ["identity", "gaussian:10:7", "gaussian:2.5:0", "temporal:3", "spatial:64"])
    def test_canonical_roundtrip(self, text):
        assert str(MechanismConfig.parse(text)) == text

    @pytest.mark.parametrize("text", ["Identity", "gaussian:10", "temporal:0", "temporal:1.5", "spatial:x", "noise:3", ""])
    def test_rejects(self, text):
        with pytest.raises(InvalidMechanism):
            MechanismConfig.parse(text)

    @pytest.mark.parametrize("L", [7, 0, 5000, 11])
    def test_invalid_factor(self, L):
        with pytest.raises(InvalidFactor):
            MechanismConfig.spatial(L)


class TestGaussian:
    def test_zero_sigma_is_identity(self):
        s = random_series(50)
        assert apply_gaussian(s, 0.0, 5) == s

    def test_deterministic(self):
        s = random_series(200)
        a = apply_mechanism(s, MechanismConfig.gaussian(10, 3))
        b = apply_mechanism(s, MechanismConfig.gaussian(10, 3))
        assert a == b
        assert a != apply_mechanism(s, MechanismConfig.gaussian(10, 4))

    def test_noise_is_drawn_from_the_seeded_generator(self):
        s = make_series([100.0, 200.0], [90.0, 80.0])
        noise = noise_rng(11).standard_normal((2, 2)) * 3.0
        out = apply_gaussian(s, 3.0, 11)
        assert np.allclose(out.x, s.x + noise[:, 0], atol=1e-12)
        assert np.allclose(out.y, s.y + noise[:, 1], atol=1e-12)

    def test_wrap_and_clamp(self):
        # find a seed whose first draws are positive, then size sigma so the realized noise is +1
        for seed in range(1000):
            n = noise_rng(seed).standard_normal(2)
            if n[0] > 0 and n[1] > 0:
                break
        s = make_series([359.5], [179.5])
        out = apply_gaussian(s, 1.0 / n[0], seed)
        assert out.x[0] == pytest.approx(0.5, abs=1e-9)
        out = apply_gaussian(s, 1.0 / n[1], seed)
        assert out.y[0] == Y_LIMIT == np.nextafter(180.0, 0.0)

    def test_t_and_e_unchanged(self):
        s = random_series(100)
        out = apply_gaussian(s, 10.0, 1)
        assert np.array_equal(out.t, s.t) and np.array_equal(out.e, s.e)

    def test_empirical_distribution(self):
        n = 100_000
        s = make_series(np.full(n, 180.0), np.full(n, 90.0), t=np.arange(n, dtype=float))
        out = apply_gaussian(s, 10.0, 2024)
        for noise in (out.x - 180.0, out.y - 90.0):
            assert abs(noise.mean()) <= 0.1
            assert abs(noise.std() - 10.0) <= 0.2

    @given(st.floats(0, 100), st.integers(0, 2**64 - 1))
    @settings(max_examples=40, deadline=None)
    def test_output_in_domain(self, sigma, seed):
        out = apply_gaussian(random_series(64, seed % 1000), sigma, seed)
        assert np.all(in_domain(out.x, out.y))


class TestTemporal:
    def test_keeps_every_third(self):
        s = random_series(7)
        out = apply_temporal(s, 3)
        assert out.t.tolist() == [s.t[0], s.t[3], s.t[6]]

    def test_every_other(self):
        s = random_series(9)
        assert np.array_equal(apply_temporal(s, 2).x, s.x[[0, 2, 4, 6, 8]])

    def test_k1_identity(self):
        s = random_series(20)
        assert apply_temporal(s, 1) == s

    def test_rate_division(self):
        out = apply_mechanism(random_series(30, rate=120.0), MechanismConfig.temporal(3))
        assert out.sampling_rate_hz == 40.0

    @given(st.integers(1, 100), st.integers(1, 10))
    def test_length(self, g, k):
        assert len(apply_temporal(random_series(g), k)) == math.ceil(g / k)


class TestSpatial:
    def test_grid_sizes(self):
        g = SpatialGrid.from_factor(2)
        assert (g.M, g.N) == (1080, 1920)
        assert g.delta_x == 0.1875
        g64 = SpatialGrid.from_factor(64)
        assert g64.N == 60 and g64.M == 33.75 and g64.n_rows == 34
        assert g64.M * g64.delta_y == 180.0 and g64.N * g64.delta_x == 360.0

    def test_hand_example(self):
        out = apply_spatial(make_series([100.70], [45.0]), 2)
        assert out.x[0] == 100.6875

    def test_on_grid_fixed_point(self):
        g = SpatialGrid.from_factor(16)
        s = make_series([g.delta_x * 17], [g.delta_y * 40])
        assert apply_spatial(s, 16) == s

    @pytest.mark.parametrize("L", [16, 64, 128])
    def test_brute_force(self, L):
        g = SpatialGrid.from_factor(L)
        s = random_series(300, seed=L)
        out = apply_spatial(s, L)
        step_x, step_y = 360.0 / g.N, 180.0 / g.M
        for x, y, qx, qy in zip(s.x, s.y, out.x, out.y):
            assert qx == brute_force_cell(x, step_x, g.N)
            assert qy == brute_force_cell(y, step_y, g.n_rows)

    @given(st.sampled_from([1, 2, 3, 4, 8, 16, 64]))
    @settings(max_examples=10, deadline=None)
    def test_idempotent(self, L):
        once = apply_spatial(random_series(200, seed=L), L)
        assert apply_spatial(once, L) == once


class TestOnline:
    @pytest.mark.parametrize("text", ["gaussian:10:9", "temporal:3", "spatial:64", "identity"])
    def test_matches_batch(self, text):
        cfg = MechanismConfig.parse(text)
        s = random_series(101, seed=4)
        online = OnlineMechanism(cfg)
        out = [o for o in (online.push(smp) for smp in s) if o is not None]
        batch = apply_mechanism(s, cfg)
        assert out == batch.samples

    def test_temporal_emits_first_sample(self):
        online = OnlineMechanism(MechanismConfig.temporal(3))
        assert online.push(GazeSample(1.0, 1.0, 0.0, 0)) is not None
        assert online.push(GazeSample(1.0, 1.0, 1.0, 0)) is None
