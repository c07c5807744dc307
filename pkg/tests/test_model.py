import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsclt.model import (
    DimensionError,
    DisorderSample,
    ModelParams,
    SpinConfiguration,
    hamiltonian,
    local_field,
    overlap,
)


def naive_hamiltonian(s, g_upper, beta, D, h):
    """Direct double loop over i < j, written independently of the package."""
    N = len(s)
    total, p = 0.0, 0
    g = {}
    for j in range(N):
        for i in range(j):
            g[(i, j)] = g_upper[p]
            p += 1
    for i in range(N):
        for j in range(i + 1, N):
            total += g[(i, j)] * s[i] * s[j]
    return beta / math.sqrt(N) * total + D * sum(x * x for x in s) + h * sum(s)


class TestParams:
    def test_certification_flag(self):
        assert ModelParams(0.49, 0, 0, 1).high_temperature_certified
        assert not ModelParams(0.5, 0, 0, 1).high_temperature_certified
        assert ModelParams(0.1, 0, 0, 2).certification_bound == 0.125

    @pytest.mark.parametrize("kw", [{"beta": -0.1}, {"S": 0}, {"S": 11}, {"S": 1.5}])
    def test_rejects_invalid(self, kw):
        args = {"beta": 0.1, "h": 0.0, "D": 0.0, "S": 1} | kw
        with pytest.raises(ValueError):
            ModelParams(**args)

    def test_negative_field_flagged(self):
        with pytest.warns(UserWarning):
            p = ModelParams(0.1, -0.2, 0.0)
        assert p.outside_hypothesis

    def test_spin_bound(self):
        with pytest.raises(ValueError):
            SpinConfiguration(np.array([0, 2]), S=1)


class TestHamiltonian:
    def test_zero_config(self, rng):
        d = DisorderSample(7, 99)
        assert hamiltonian(SpinConfiguration.zeros(7), d, ModelParams(0.3, 0.5, 0.2)) == 0.0

    def test_single_coupling(self):
        d = DisorderSample.from_upper([1.0])
        assert hamiltonian(np.array([1, 1]), d, ModelParams(1.0, 0.0, 0.0)) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_three_sites_against_double_loop(self):
        g = [0.5, -0.2, 0.3]
        s = [1, -1, 1]
        d = DisorderSample.from_upper(g)
        params = ModelParams(2.0, 0.4, 0.1)
        expected = naive_hamiltonian(s, g, 2.0, 0.1, 0.4)
        assert hamiltonian(np.array(s), d, params) == pytest.approx(expected, abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(N=st.integers(2, 9), seed=st.integers(0, 2**32), S=st.integers(1, 3), data=st.data())
    def test_random_against_double_loop(self, N, seed, S, data):
        s = data.draw(st.lists(st.integers(-S, S), min_size=N, max_size=N))
        d = DisorderSample(N, seed)
        params = ModelParams(0.7, 0.3, -0.4, S)
        expected = naive_hamiltonian(s, d.upper(), 0.7, -0.4, 0.3)
        assert hamiltonian(np.array(s), d, params) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(N=st.integers(2, 12), seed=st.integers(0, 2**32), S=st.integers(1, 3), data=st.data())
    def test_negation_symmetry_at_zero_field(self, N, seed, S, data):
        s = np.array(data.draw(st.lists(st.integers(-S, S), min_size=N, max_size=N)))
        d = DisorderSample(N, seed)
        params = ModelParams(0.4, 0.0, 0.3, S)
        assert hamiltonian(-s, d, params) == pytest.approx(hamiltonian(s, d, params), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            hamiltonian(np.zeros(3), DisorderSample(4, 0), ModelParams(0.1, 0, 0))


class TestOverlap:
    def test_examples(self):
        assert overlap(np.ones(5), np.ones(5)) == 1.0
        assert overlap(np.array([2, 0]), np.array([0, 2])) == 0.0
        assert overlap(np.array([1, -1, 2]), np.array([1, 1, 1])) == pytest.approx(2 / 3, abs=1e-15)

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            overlap(np.ones(3), np.ones(4))

    @settings(max_examples=50, deadline=None)
    @given(S=st.integers(1, 4), data=st.data())
    def test_symmetric_bilinear_bounded(self, S, data):
        N = data.draw(st.integers(1, 20))
        vec = st.lists(st.integers(-S, S), min_size=N, max_size=N).map(np.array)
        a, b, c = data.draw(vec), data.draw(vec), data.draw(vec)
        assert overlap(a, b) == overlap(b, a)
        assert abs(overlap(a, b)) <= S * S
        # bilinearity on the integer lattice (values need not be valid spins)
        lhs = overlap(a + 2 * c, b)
        assert lhs == pytest.approx(overlap(a, b) + 2 * overlap(c, b), abs=1e-12)


class TestLocalField:
    def test_examples(self):
        d = DisorderSample.from_upper([1.0])
        assert local_field(np.zeros(2), d, ModelParams(1.0, 0, 0), 0) == 0.0
        assert local_field(np.array([0, 1]), d, ModelParams(1.0, 0, 0), 0) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(N=st.integers(2, 10), seed=st.integers(0, 2**32), S=st.integers(1, 3), data=st.data())
    def test_flip_difference(self, N, seed, S, data):
        s = np.array(data.draw(st.lists(st.integers(-S, S), min_size=N, max_size=N)))
        site = data.draw(st.integers(0, N - 1))
        new = data.draw(st.integers(-S, S))
        d = DisorderSample(N, seed)
        params = ModelParams(0.8, 0.25, -0.3, S)
        t = s.copy()
        t[site] = new
        dsig = new - s[site]
        predicted = dsig * local_field(s, d, params, site) + params.D * (new**2 - s[site] ** 2) + params.h * dsig
        assert hamiltonian(t, d, params) - hamiltonian(s, d, params) == pytest.approx(predicted, abs=1e-12)

    def test_bad_site(self):
        with pytest.raises(IndexError):
            local_field(np.zeros(3), DisorderSample(3, 0), ModelParams(0.1, 0, 0), 3)


class TestDisorder:
    def test_deterministic(self):
        assert np.array_equal(DisorderSample(20, 5).upper(), DisorderSample(20, 5).upper())
        assert not np.array_equal(DisorderSample(20, 5).upper(), DisorderSample(20, 6).upper())

    def test_prefix_property(self):
        small, big = DisorderSample(30, 77), DisorderSample(31, 77)
        assert np.array_equal(small.matrix(), big.matrix()[:30, :30])

    def test_lazy_coupling_matches_matrix(self):
        d = DisorderSample(9, 2024)
        g = d.matrix()
        fresh = DisorderSample(9, 2024)
        for i, j in [(0, 1), (3, 7), (8, 2), (5, 4)]:
            assert fresh.coupling(i, j) == g[i, j]
        assert np.allclose(g, g.T) and np.all(np.diag(g) == 0)

    def test_standard_normal(self):
        g = DisorderSample(600, 3).upper()
        assert abs(g.mean()) < 4 / math.sqrt(g.size)
        assert abs(g.var() - 1) < 4 * math.sqrt(2 / g.size)

    def test_from_upper_rejects_bad_length(self):
        with pytest.raises(DimensionError):
            DisorderSample.from_upper([1.0, 2.0])
