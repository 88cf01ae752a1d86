import numpy as np
import pytest

from dcsit import linalg, psdopt
from dcsit.errors import DomainError, WeightError


def crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rand_feasible_psd(rng, n, trace_cap):
    a = crandn(rng, (n, n))
    q = a @ a.conj().T
    return q * (trace_cap / np.real(np.trace(q)))


def single_var_problem(h, limit):
    d = h.shape[1]
    return psdopt.LogDetProblem(
        dims=[d],
        terms=[psdopt.Term(1.0, [(0, h)])],
        constraints=[psdopt.Halfspace({0: np.ones(d)}, limit)],
    )


def waterfill_value(pairs, power):
    """Optimal sum of w*ln(1+mu*p) under a shared power budget.

    pairs: (weight, mu) for every positive channel eigenvalue; allocation
    from the dual water level eta via p = max(w/eta - 1/mu, 0).
    """
    def alloc(eta):
        return sum(max(w / eta - 1.0 / mu, 0.0) for w, mu in pairs)

    hi = max(w * mu for w, mu in pairs)
    lo = hi
    while alloc(lo) < power:
        lo *= 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if alloc(mid) >= power:
            lo = mid
        else:
            hi = mid
    eta = 0.5 * (lo + hi)
    return sum(w * np.log1p(mu * max(w / eta - 1.0 / mu, 0.0)) for w, mu in pairs)


class TestObjective:
    def test_zero_point(self):
        prob = single_var_problem(np.eye(2, dtype=complex), 2.0)
        assert psdopt.objective(prob, [np.zeros((2, 2), dtype=complex)]) == 0.0

    def test_identity(self):
        prob = single_var_problem(np.eye(2, dtype=complex), 2.0)
        got = psdopt.objective(prob, [np.eye(2, dtype=complex)])
        assert abs(got - 2.0 * np.log(2.0)) < 1e-12

    def test_row_selector(self):
        h = np.array([[1.0, 0.0]], dtype=complex)
        prob = single_var_problem(h, 10.0)
        got = psdopt.objective(prob, [np.diag([3.0, 7.0]).astype(complex)])
        assert abs(got - np.log(4.0)) < 1e-12

    def test_multi_term_average(self):
        h1 = np.eye(2, dtype=complex)
        h2 = 2.0 * np.eye(2, dtype=complex)
        prob = psdopt.LogDetProblem(
            dims=[2],
            terms=[psdopt.Term(0.25, [(0, h1)]), psdopt.Term(0.75, [(0, h2)])],
            constraints=[psdopt.Halfspace({0: np.ones(2)}, 2.0)],
        )
        q = np.eye(2, dtype=complex)
        want = 0.25 * 2 * np.log(2.0) + 0.75 * 2 * np.log(5.0)
        assert abs(psdopt.objective(prob, [q]) - want) < 1e-12


class TestGradient:
    def test_at_zero(self):
        prob = single_var_problem(np.eye(3, dtype=complex), 3.0)
        g = psdopt.gradient(prob, [np.zeros((3, 3), dtype=complex)])[0]
        assert np.allclose(g, np.eye(3), atol=1e-12)

    def test_scalar_formula(self):
        h = np.array([[1.5 - 0.5j]])
        prob = single_var_problem(h, 5.0)
        q = 0.7
        g = psdopt.gradient(prob, [np.array([[q]], dtype=complex)])[0]
        h2 = abs(h[0, 0]) ** 2
        assert abs(g[0, 0] - h2 / (1.0 + h2 * q)) < 1e-12

    def test_finite_difference_20_instances(self):
        # d <= 10, L <= 50 random ensembles; relative mismatch <= 1e-5
        rng = np.random.default_rng(7)
        for _ in range(20):
            d = int(rng.integers(1, 11))
            n_terms = int(rng.integers(1, 51))
            m = int(rng.integers(1, 3))
            w = rng.random(n_terms) + 0.1
            w /= w.sum()
            terms = [psdopt.Term(float(wl), [(0, crandn(rng, (m, d)))]) for wl in w]
            prob = psdopt.LogDetProblem(
                dims=[d], terms=terms,
                constraints=[psdopt.Halfspace({0: np.ones(d)}, 4.0)])
            at = rand_feasible_psd(rng, d, 2.0) + 0.5 * np.eye(d)
            err = linalg.fd_gradient_check(
                lambda m_: psdopt.objective(prob, [m_]),
                psdopt.gradient(prob, [at])[0],
                at)
            assert err <= 1e-5

    def test_hermitian_output(self):
        rng = np.random.default_rng(8)
        prob = single_var_problem(crandn(rng, (2, 4)), 3.0)
        g = psdopt.gradient(prob, [rand_feasible_psd(rng, 4, 1.0)])[0]
        assert linalg.is_hermitian(g, atol=1e-12)


class TestProjection:
    def test_feasible_fixed_point(self):
        rng = np.random.default_rng(9)
        q = rand_feasible_psd(rng, 3, 1.0)
        cons = [psdopt.Halfspace({0: np.ones(3)}, 2.0)]
        got = psdopt.project_feasible([q], cons)[0]
        assert linalg.frob(got - q) < 1e-10

    def test_trace_cap(self):
        cons = [psdopt.Halfspace({0: np.ones(2)}, 2.0)]
        got = psdopt.project_feasible([2.0 * np.eye(2, dtype=complex)], cons)[0]
        assert np.allclose(got, np.eye(2), atol=1e-9)

    def test_psd_clip_without_halfspace(self):
        # a halfspace that the point already satisfies leaves only the cone
        cons = [psdopt.Halfspace({0: np.ones(2)}, 100.0)]
        got = psdopt.project_feasible([np.diag([1.0, -1.0]).astype(complex)], cons)[0]
        assert np.allclose(got, np.diag([1.0, 0.0]), atol=1e-9)

    def test_output_always_feasible(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            d = int(rng.integers(1, 5))
            raw = crandn(rng, (d, d))
            raw = raw + raw.conj().T  # arbitrary hermitian, possibly indefinite
            weights = rng.random(d) + 0.1
            cons = [psdopt.Halfspace({0: weights}, 1.0)]
            got = psdopt.project_feasible([raw], cons)[0]
            vals = np.linalg.eigvalsh(got)
            assert vals.min() >= -1e-9
            assert float(weights @ np.real(np.diag(got))) <= 1.0 + 1e-9

    def test_spectral_cap_oracle(self):
        # projecting a diagonal matrix onto {Q >= 0, tr Q <= 2} keeps the
        # eigenbasis; eigenvalues follow max(d_i - mu, 0) with mu from the
        # budget, here (3, 2, -1) -> (1.5, 0.5, 0)
        diag = np.array([3.0, 2.0, -1.0])
        cons = [psdopt.Halfspace({0: np.ones(3)}, 2.0)]
        got = psdopt.project_feasible([np.diag(diag).astype(complex)], cons)[0]
        lo, hi = 0.0, diag.max()
        for _ in range(80):
            mu = 0.5 * (lo + hi)
            if np.maximum(diag - mu, 0.0).sum() > 2.0:
                lo = mu
            else:
                hi = mu
        want = np.diag(np.maximum(diag - hi, 0.0))
        assert np.allclose(got, want, atol=1e-6)


class TestValidation:
    def test_weights_must_sum_to_one(self):
        h = np.eye(2, dtype=complex)
        with pytest.raises(WeightError):
            psdopt.LogDetProblem(
                dims=[2],
                terms=[psdopt.Term(0.5, [(0, h)])],
                constraints=[psdopt.Halfspace({0: np.ones(2)}, 1.0)])

    def test_negative_weight(self):
        h = np.eye(2, dtype=complex)
        with pytest.raises(WeightError):
            psdopt.LogDetProblem(
                dims=[2],
                terms=[psdopt.Term(-0.5, [(0, h)]), psdopt.Term(1.5, [(0, h)])],
                constraints=[psdopt.Halfspace({0: np.ones(2)}, 1.0)])

    def test_channel_shape_mismatch(self):
        with pytest.raises(DomainError):
            psdopt.LogDetProblem(
                dims=[2],
                terms=[psdopt.Term(1.0, [(0, np.eye(3, dtype=complex))])],
                constraints=[psdopt.Halfspace({0: np.ones(2)}, 1.0)])

    def test_halfspace_needs_positive_limit(self):
        with pytest.raises(DomainError):
            psdopt.Halfspace({0: np.ones(2)}, 0.0)

    def test_halfspace_rejects_negative_weights(self):
        with pytest.raises(DomainError):
            psdopt.Halfspace({0: np.array([1.0, -1.0])}, 1.0)


class TestSolve:
    def test_isotropic_optimum(self):
        prob = single_var_problem(np.eye(2, dtype=complex), 2.0)
        rep = psdopt.solve(prob)
        assert rep.converged
        assert abs(rep.objective_nats - 2.0 * np.log(2.0)) < 1e-7
        assert np.allclose(rep.solution[0], np.eye(2), atol=1e-4)

    def test_vanishing_power(self):
        prob = single_var_problem(np.eye(2, dtype=complex), 1e-9)
        rep = psdopt.solve(prob)
        assert rep.objective_nats <= 2e-9

    def test_waterfilling_50_cases(self):
        # acceptance anchor: shared-budget instances, d <= 4, against the
        # dual water-level oracle, 1e-6 relative
        rng = np.random.default_rng(11)
        for case in range(50):
            n_vars = int(rng.integers(1, 3))
            dims, terms, pairs = [], [], []
            w = rng.random(n_vars) + 0.2
            w /= w.sum()
            for v in range(n_vars):
                d = int(rng.integers(1, 5))
                m = int(rng.integers(1, 5))
                h = crandn(rng, (m, d))
                dims.append(d)
                terms.append(psdopt.Term(float(w[v]), [(v, h)]))
                mus = np.linalg.eigvalsh(h.conj().T @ h)
                pairs.extend((float(w[v]), float(mu)) for mu in mus if mu > 1e-12)
            power = float(rng.uniform(0.5, 8.0))
            cons = [psdopt.Halfspace({v: np.ones(dims[v]) for v in range(n_vars)},
                                     power)]
            rep = psdopt.solve(psdopt.LogDetProblem(dims, terms, cons))
            want = waterfill_value(pairs, power)
            assert rep.converged, f"case {case} did not converge"
            assert abs(rep.objective_nats - want) <= 1e-6 * (1.0 + abs(want))

    def test_monotone_trace_and_feasibility(self):
        rng = np.random.default_rng(12)
        prob = single_var_problem(crandn(rng, (3, 4)), 2.5)
        rep = psdopt.solve(prob)
        assert np.all(np.diff(rep.objective_trace) >= -1e-10)
        assert rep.constraint_violation <= 1e-9
        assert np.linalg.eigvalsh(rep.solution[0]).min() >= -1e-9
        assert rep.kkt_residual >= 0.0
        assert "method" in rep.metadata

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        h = crandn(rng, (2, 3))
        a = psdopt.solve(single_var_problem(h, 1.5))
        b = psdopt.solve(single_var_problem(h, 1.5))
        assert a.objective_nats == b.objective_nats
        assert np.array_equal(a.solution[0], b.solution[0])

    def test_concavity_midpoints(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            d = int(rng.integers(1, 5))
            prob = single_var_problem(crandn(rng, (2, d)), 3.0)
            qa = rand_feasible_psd(rng, d, 2.0)
            qb = rand_feasible_psd(rng, d, 2.5)
            mid = psdopt.objective(prob, [0.5 * (qa + qb)])
            avg = 0.5 * (psdopt.objective(prob, [qa]) + psdopt.objective(prob, [qb]))
            assert mid >= avg - 1e-10

    def test_warm_start_agrees(self):
        rng = np.random.default_rng(15)
        h = crandn(rng, (2, 3))
        prob = single_var_problem(h, 2.0)
        cold = psdopt.solve(prob)
        warm = psdopt.solve(prob, x0=[np.eye(3, dtype=complex) * 0.1])
        assert abs(cold.objective_nats - warm.objective_nats) <= 1e-7
