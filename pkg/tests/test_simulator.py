import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsclt import _kernels_py, kernels
from gsclt.cavity import solve_fixed_point
from gsclt.constants import compute_spin_constants, predict_covariance
from gsclt.gaussian import MomentSpec
from gsclt.model import DisorderSample, ModelParams, interaction_matrix
from gsclt.simulator import (
    EstimateWithError,
    InsufficientReplicasError,
    LinearForm,
    ProductObservable,
    ReplicaEnsemble,
    SimPlan,
    basis_observable,
    estimate_basis_moment,
    estimate_centered_moment,
    estimate_nu,
    excess_kurtosis,
    independence_check,
    jackknife,
    parse_basis_symbol,
    replica_rng,
    simulate,
)

# upper 0.999 quantiles of chi-square with k degrees of freedom
CHI2_999 = {2: 13.816, 4: 18.467}

needs_cython = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")


@pytest.fixture(scope="module")
def certified_run():
    params = ModelParams(0.1, 0.3, 0.2, 1)
    plan = SimPlan(params, (200,), n_replicas=7, sweeps_burn=100, sweeps_measure=40, thin=2, n_disorder=300, master_seed=9)
    rs = solve_fixed_point(params)
    cm = predict_covariance(compute_spin_constants(params, rs), 200)
    return simulate(plan, 200), rs, cm


@pytest.fixture(scope="module")
def beta0_run():
    params = ModelParams(0.0, 0.0, 0.0, 1)
    plan = SimPlan(params, (200,), n_replicas=2, sweeps_burn=2, sweeps_measure=10, thin=2, n_disorder=2000, master_seed=4)
    return simulate(plan, 200)


def _ensemble(N, n, params, seed=0):
    d = DisorderSample(N, seed)
    return ReplicaEnsemble.start(d, params, [replica_rng(seed, N, 0, r) for r in range(n)])


class TestKernel:
    @needs_cython
    @pytest.mark.parametrize("S", [1, 2])
    def test_compiled_matches_python(self, S):
        from gsclt import _kernels

        params = ModelParams(0.3, 0.2, -0.1, S)
        N, n, T = 40, 3, 25
        rng = np.random.default_rng(S)
        J = interaction_matrix(DisorderSample(N, 1), params)
        spins = rng.integers(-S, S + 1, size=(n, N)).astype(np.int8)
        u = rng.random((T, n, N))
        out = []
        for mod in (_kernels, _kernels_py):
            s = spins.copy()
            f = np.ascontiguousarray(s.astype(np.float64) @ J)
            tr = np.empty((T, n, N), dtype=np.int8)
            changes = mod.heat_bath_sweeps(s, f, J, u, params.D, params.h, S, tr)
            out.append((s, f, tr, changes))
        assert np.array_equal(out[0][0], out[1][0])
        assert np.array_equal(out[0][1], out[1][1])
        assert np.array_equal(out[0][2], out[1][2])
        assert out[0][3] == out[1][3]

    def test_field_drift_stays_small(self):
        params = ModelParams(0.4, 0.1, 0.0, 2)
        ens = _ensemble(120, 3, params)
        for _ in range(8):
            kernels.heat_bath_sweeps(ens.spins, ens.fields, ens.J, ens.uniforms(64), params.D, params.h, params.S)
        assert ens.resync() < 1e-10

    def test_beta_zero_marginal_chi_square(self):
        params = ModelParams(0.0, 0.3, 0.2, 2)
        ens = _ensemble(50, 4, params, seed=3)
        T = 5000
        trace = np.empty((T, 4, 50), dtype=np.int8)
        ens.sweep(T, trace)
        counts = np.bincount(trace.ravel().astype(np.int64) + 2, minlength=5)
        s = np.arange(-2, 3)
        w = np.exp(params.D * s * s + params.h * s)
        expected = counts.sum() * w / w.sum()
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert counts.sum() == 10**6
        assert chi2 < CHI2_999[4]

    @pytest.mark.skipif(kernels.BACKEND != "cython", reason="timing only meaningful for the compiled kernel")
    def test_sweep_cost_scaling(self):
        # each sweep touches N rows of length N, so doubling N costs about 4x
        params = ModelParams(0.1, 0.3, 0.2)

        def per_sweep(N):
            ens = _ensemble(N, 4, params)
            u = ens.uniforms(20)
            best = math.inf
            for _ in range(5):
                t0 = time.perf_counter()
                kernels.heat_bath_sweeps(ens.spins, ens.fields, ens.J, u, params.D, params.h, 1)
                best = min(best, time.perf_counter() - t0)
            return best

        ratio = per_sweep(800) / per_sweep(400)
        assert ratio < 4.6 * 1.25


class TestDeterminism:
    def test_thread_count_does_not_matter(self):
        plan = SimPlan(ModelParams(0.2, 0.1, 0.0), (30,), n_replicas=3, sweeps_burn=5, sweeps_measure=6, thin=2, n_disorder=7)
        a = simulate(plan, 30, threads=1)
        b = simulate(plan, 30, threads=3)
        c = simulate(plan, 30, threads=1)
        assert np.array_equal(a.overlaps, b.overlaps) and np.array_equal(a.overlaps, c.overlaps)

    def test_seed_changes_output(self):
        mk = lambda seed: SimPlan(ModelParams(0.2, 0.1, 0.0), (20,), 2, 5, 4, 2, 3, seed)  # noqa: E731
        assert not np.array_equal(simulate(mk(1), 20).overlaps, simulate(mk(2), 20).overlaps)

    @pytest.mark.parametrize("kw", [{"n_replicas": 0}, {"thin": 0}, {"sweeps_measure": 1, "thin": 2}, {"N_grid": ()}])
    def test_plan_validation(self, kw):
        base = dict(params=ModelParams(0.1, 0, 0), N_grid=(10,))
        with pytest.raises(ValueError):
            SimPlan(**(base | kw))


class TestEstimators:
    def test_constant_observable(self, beta0_run):
        est = estimate_nu(beta0_run, ProductObservable(()))
        assert est.value == 1.0 and est.std_error == 0.0

    def test_insufficient_replicas(self, beta0_run):
        with pytest.raises(InsufficientReplicasError):
            estimate_centered_moment(beta0_run, MomentSpec.from_pairs({(1, 2): 1, (3, 3): 1}), solve_fixed_point(ModelParams(0, 0, 0)))

    def test_beta_zero_variances(self, beta0_run):
        rs = solve_fixed_point(ModelParams(0, 0, 0))
        v12 = estimate_centered_moment(beta0_run, MomentSpec.from_pairs({(1, 2): 2}), rs)
        v11 = estimate_centered_moment(beta0_run, MomentSpec.from_pairs({(1, 1): 2}), rs)
        assert abs(v12.z(4 / 9)) <= 3, v12
        assert abs(v11.z(2 / 9)) <= 3, v11

    def test_centered_first_moment(self, certified_run):
        data, rs, _ = certified_run
        est = estimate_centered_moment(data, MomentSpec.from_pairs({(1, 2): 1}), rs)
        assert abs(est.z(0.0)) <= 3

    def test_overlap_mean_matches_fixed_point(self, certified_run):
        data, rs, _ = certified_run
        r12 = estimate_nu(data, ProductObservable((LinearForm.overlap(1, 2),)))
        r11 = estimate_nu(data, ProductObservable((LinearForm.overlap(1, 1),)))
        assert abs(r12.z(rs.q)) <= 3 and abs(r11.z(rs.p)) <= 3

    def test_concentration_bound(self, certified_run):
        data, rs, _ = certified_run
        sq = estimate_nu(data, ProductObservable((LinearForm.overlap(1, 2, -rs.q),) * 2))
        assert sq.value <= 16 / data.N + 3 * sq.std_error

    def test_basis_moments(self, certified_run):
        data, rs, cm = certified_run
        t1 = estimate_basis_moment(data, [("T1", 1)], rs)
        assert abs(t1.z(0.0)) <= 3
        t12 = estimate_basis_moment(data, [("T12", 2)], rs)
        assert abs(t12.z(data.N * cm.A2sq)) <= 3, (t12, data.N * cm.A2sq)
        s1t1 = estimate_basis_moment(data, [("S1", 1), ("T1", 1)], rs)
        assert abs(s1t1.z(data.N * cm.C1sq)) <= 3, (s1t1, data.N * cm.C1sq)

    def test_independence_and_gaussianity(self, certified_run):
        data, rs, _ = certified_run
        assert abs(independence_check(data, rs).z(0.0)) <= 3
        kurt = excess_kurtosis(data, rs)
        # finite-N corrections are O(1/N); the SE covers the statistical part
        assert abs(kurt.value) <= 3 * kurt.std_error + 0.1

    def test_estimate_z(self):
        e = EstimateWithError(1.0, 0.5, 10, 5)
        assert e.z(0.0) == 2.0 and e.usable
        assert not EstimateWithError(1.0, 0.0, 1, 5).usable


class TestJackknife:
    def test_mean_matches_standard_error(self, rng):
        x = rng.normal(size=500)
        v, se = jackknife(x)
        v2, se2 = jackknife(x[:, None], lambda m: m[0])
        assert v == pytest.approx(x.mean()) and se == pytest.approx(x.std(ddof=1) / math.sqrt(500))
        assert v2 == pytest.approx(v) and se2 == pytest.approx(se, rel=1e-10)

    def test_single_sample(self):
        assert jackknife(np.array([3.0])) == (3.0, 0.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32))
    def test_ratio_se_positive(self, seed):
        x = np.random.default_rng(seed).random((50, 2)) + 1
        v, se = jackknife(x, lambda m: m[0] / m[1])
        assert se > 0 and math.isfinite(v)


class TestBasisExpansion:
    def test_symbols(self):
        assert parse_basis_symbol("T12") == ("T", (1, 2))
        assert parse_basis_symbol("T_1_2") == ("T", (1, 2))
        assert parse_basis_symbol("S3") == ("S", (3,))
        assert parse_basis_symbol("T") == ("T", ())
        for bad in ("X1", "T11", "S1 2", "T1 2 3"):
            with pytest.raises(ValueError):
                parse_basis_symbol(bad)

    def test_t12_expansion(self):
        obs = basis_observable([("T12", 1)], solve_fixed_point(ModelParams(0, 0, 0)))
        (form,) = obs.factors
        assert sorted(form.coeffs) == [(1, 2, 1.0), (1, 4, -1.0), (2, 3, -1.0), (3, 4, 1.0)]

    def test_each_factor_gets_fresh_replicas(self):
        obs = basis_observable([("T1", 2), ("S2", 1)], solve_fixed_point(ModelParams(0, 0, 0)))
        assert obs.replicas == list(range(1, 8))
