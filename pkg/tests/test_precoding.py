import numpy as np
import pytest

from dcsit import channel, precoding, psdopt
from dcsit.errors import DomainError, NonFiniteError

CONVEX_OPT = 1.7532789486599908  # counterexample optimum, nats
RANK2_BEST = 1.7525148240962747  # 5-restart d'=2 search, seed 0xC0FFEE


def crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rand_psd(rng, n, scale=1.0):
    a = crandn(rng, (n, n))
    return scale * (a @ a.conj().T) / n


def small_ensemble(rng_seed, n_samples=6, m=2, beta=1):
    cb1 = channel.generate_quantizer(beta, m, rng_seed=rng_seed)
    cb2 = channel.generate_quantizer(beta, m, rng_seed=rng_seed + 1)
    return channel.sample_ensemble(n_samples, m, cb1, cb2, rng_seed=rng_seed + 2)


class TestSelector:
    def test_columns(self):
        e = precoding.selector_matrix(1, 0, 2, 2)
        assert e.shape == (4, 2)
        want = np.zeros((4, 2))
        want[1, 0] = 1.0
        want[2, 1] = 1.0
        assert np.array_equal(e, want)

    def test_trivial_alphabets_identity(self):
        assert np.array_equal(precoding.selector_matrix(0, 0, 1, 1), np.eye(2))

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            precoding.selector_matrix(2, 0, 2, 2)


class TestAssembleProblem:
    def test_paper_scale_dims(self):
        cb1 = channel.generate_quantizer(4, 2, rng_seed=3)
        cb2 = channel.generate_quantizer(3, 2, rng_seed=4)
        ens = channel.sample_ensemble(40, 2, cb1, cb2, rng_seed=5)
        prob = precoding.assemble_problem(ens, 1.0, 1.0)
        assert prob.dims == (24,)
        assert len(prob.terms) == 40
        assert all(h.shape == (2, 24) for t in prob.terms for _, h in t.channels)

    def test_effective_channel_is_selected_columns(self):
        ens = small_ensemble(6, n_samples=5)
        prob = precoding.assemble_problem(ens, 1.0, 1.0)
        for idx in range(ens.size):
            _, h = prob.terms[idx].channels[0]
            e = precoding.selector_matrix(
                int(ens.s1[idx]), int(ens.s2[idx]), ens.ns1, ens.ns2)
            assert np.allclose(h, ens.states[idx] @ e.T, atol=1e-14)

    def test_power_constraints_use_marginals(self):
        ens, _ = precoding.build_counterexample()
        prob = precoding.assemble_problem(ens, 1.5, 2.5)
        (v1, w1), = prob.constraints[0].diag_weights
        (v2, w2), = prob.constraints[1].diag_weights
        assert v1 == v2 == 0
        assert np.allclose(w1, [0.5, 0.5, 0.0, 0.0])
        assert np.allclose(w2, [0.0, 0.0, 0.5, 0.5])
        assert prob.constraints[0].limit == 1.5
        assert prob.constraints[1].limit == 2.5

    def test_rejects_nonpositive_power(self):
        ens = small_ensemble(7)
        with pytest.raises(DomainError):
            precoding.assemble_problem(ens, 0.0, 1.0)


class TestExtractReconstruct:
    def test_identity_covariances(self):
        ens, _ = precoding.build_counterexample()
        pre = precoding.extract_precoders(np.eye(4), ens)
        cov = precoding.reconstruct_covariance(pre)
        assert np.allclose(cov, np.broadcast_to(np.eye(2), (2, 2, 2, 2)), atol=1e-12)
        # rows of Q^(1/2) = I are orthonormal unit vectors
        assert np.allclose(pre.g1 @ pre.g1.conj().T, np.eye(2), atol=1e-12)

    def test_covariance_reads_q_pattern(self):
        # Sigma(s1,s2) = [[Q[s1,s1], Q[s1,n1+s2]], [conj, Q[n1+s2,n1+s2]]]
        rng = np.random.default_rng(21)
        ens = small_ensemble(22, n_samples=8)
        n1 = ens.ns1
        for _ in range(100):
            q = rand_psd(rng, ens.dim)
            cov = precoding.reconstruct_covariance(precoding.extract_precoders(q, ens))
            for s1 in range(ens.ns1):
                for s2 in range(ens.ns2):
                    want = np.array(
                        [[q[s1, s1], q[s1, n1 + s2]],
                         [q[n1 + s2, s1], q[n1 + s2, n1 + s2]]])
                    assert np.max(np.abs(cov[s1, s2] - want)) <= 1e-10

    def test_achieved_rate_matches_objective(self):
        # the selector embedding makes S Sigma S^H == H Q H^H sample by sample
        rng = np.random.default_rng(23)
        ens = small_ensemble(24, n_samples=10)
        prob = precoding.assemble_problem(ens, 1.0, 1.0)
        for _ in range(100):
            q = rand_psd(rng, ens.dim)
            pre = precoding.extract_precoders(q, ens)
            got = precoding.achieved_rate(pre, ens)
            want = psdopt.objective(prob, [q])
            assert abs(got - want) <= 1e-10 * (1.0 + abs(want))

    def test_compress_drops_null_directions(self):
        rng = np.random.default_rng(25)
        ens, _ = precoding.build_counterexample()
        v = crandn(rng, (4, 2))
        q = v @ v.conj().T  # rank 2
        full = precoding.extract_precoders(q, ens)
        slim = precoding.extract_precoders(q, ens, compress=True)
        assert full.d_prime == 4
        assert slim.d_prime == 2
        assert np.allclose(
            precoding.reconstruct_covariance(full),
            precoding.reconstruct_covariance(slim), atol=1e-10)

    def test_power_guard(self):
        ens, _ = precoding.build_counterexample()
        with pytest.raises(DomainError):
            precoding.extract_precoders(10.0 * np.eye(4), ens, power=(1.0, 1.0))

    def test_private_power_enters_diagonal(self):
        pre = precoding.PrecoderSet(
            g1=np.array([[1.0, 0.0]]), g2=np.array([[0.0, 1.0]]),
            gamma1=np.array([0.5]), gamma2=np.array([0.25]))
        cov = precoding.reconstruct_covariance(pre)
        assert np.allclose(cov[0, 0], np.diag([1.5, 1.25]), atol=1e-14)

    def test_wrong_q_size(self):
        ens, _ = precoding.build_counterexample()
        with pytest.raises(DomainError):
            precoding.extract_precoders(np.eye(3), ens)


class TestCounterexample:
    def test_target_covariances(self):
        ens, sigma = precoding.build_counterexample()
        assert ens.size == 4 and ens.ns1 == ens.ns2 == 2 and ens.m == 2
        assert np.allclose(ens.weights, 0.25)
        assert np.array_equal(ens.s1, [0, 0, 1, 1])
        assert np.array_equal(ens.s2, [0, 1, 0, 1])
        rho = {(0, 0): 0.0, (0, 1): 0.6, (1, 0): 0.0, (1, 1): 0.8}
        for (s1, s2), r in rho.items():
            assert np.allclose(sigma[s1, s2], [[1.0, r], [r, 1.0]], atol=1e-14)

    def test_states_invert_waterfilling(self):
        # S^2 eigenvalues are 1/(nu - xi) on the eigenbasis of Sigma*(s)
        ens, sigma = precoding.build_counterexample(nu_star=2.0)
        total = 0.0
        for idx in range(4):
            s1, s2 = int(ens.s1[idx]), int(ens.s2[idx])
            xi = np.linalg.eigvalsh(sigma[s1, s2])
            s2mat = ens.states[idx] @ ens.states[idx].conj().T
            lam = np.sort(np.linalg.eigvalsh(s2mat))
            assert np.allclose(lam, np.sort(1.0 / (2.0 - xi)), atol=1e-12)
            # water-filling at level nu allocates exactly xi on each mode
            assert np.allclose(np.maximum(2.0 - 1.0 / lam, 0.0), np.sort(xi), atol=1e-12)
            total += float(xi.sum())
        assert abs(total - 8.0) <= 1e-12

    def test_closed_form_objective(self):
        ens, sigma = precoding.build_counterexample()
        pre = precoding.PrecoderSet(
            g1=np.array([[1, 0, 0], [0, 1, 0]], dtype=complex),
            g2=np.array([[0, 0, 1], [0.6, 0.8, 0]], dtype=complex),
            gamma1=np.zeros(2), gamma2=np.zeros(2))
        # this d'=3 witness reproduces every target covariance exactly
        assert np.allclose(precoding.reconstruct_covariance(pre), sigma, atol=1e-14)
        rate = precoding.achieved_rate(pre, ens)
        xi = np.array([1.0, 1.0, 1.6, 0.4, 1.0, 1.0, 1.8, 0.2])
        want = float(0.25 * np.log1p(xi / (2.0 - xi)).sum())
        assert abs(want - CONVEX_OPT) <= 1e-12
        assert abs(rate - CONVEX_OPT) <= 1e-12

    def test_solver_recovers_sigma_star(self):
        ens, sigma = precoding.build_counterexample()
        rep = precoding.common_message_capacity(ens, 1.0, 1.0)
        assert rep.converged
        assert abs(rep.objective_nats - CONVEX_OPT) <= 1e-9
        pre = precoding.extract_precoders(rep.solution[0], ens, power=(1.0, 1.0))
        cov = precoding.reconstruct_covariance(pre)
        assert np.max(np.abs(cov - sigma)) <= 1e-4

    def test_other_water_level(self):
        ens, sigma = precoding.build_counterexample(nu_star=2.5)
        pre = precoding.extract_precoders(np.zeros((4, 4)), ens)
        xi = np.array([1.0, 1.0, 1.6, 0.4, 1.0, 1.0, 1.8, 0.2])
        want = float(0.25 * np.log1p(xi / (2.5 - xi)).sum())
        witness = precoding.PrecoderSet(
            g1=np.array([[1, 0, 0], [0, 1, 0]], dtype=complex),
            g2=np.array([[0, 0, 1], [0.6, 0.8, 0]], dtype=complex),
            gamma1=np.zeros(2), gamma2=np.zeros(2))
        assert abs(precoding.achieved_rate(witness, ens) - want) <= 1e-12

    def test_rejects_shallow_water(self):
        for bad in (1.8, 1.5, 0.0):
            with pytest.raises(DomainError):
                precoding.build_counterexample(nu_star=bad)

    def test_zero_power_shortcut(self):
        ens, _ = precoding.build_counterexample()
        rep = precoding.common_message_capacity(ens, 0.0, 0.0)
        assert rep.objective_nats == 0.0 and rep.converged


class TestRankReduce:
    def test_identity_walks_to_rank3(self):
        red = precoding.rank_reduce(np.eye(4), ns1=2)
        assert red.rank_before == 4 and red.rank_after == 3
        assert not red.already_deficient
        assert abs(red.t_star - 1.0) <= 1e-6
        vals = np.sort(np.linalg.eigvalsh(red.matrix))
        assert np.allclose(vals, [0.0, 1.0, 1.0, 2.0], atol=1e-6)
        assert np.allclose(np.diag(red.matrix), np.ones(4), atol=1e-14)

    def test_already_deficient_passthrough(self):
        q = np.diag([1.0, 1.0, 1.0, 0.0])
        red = precoding.rank_reduce(q, ns1=2)
        assert red.already_deficient
        assert red.t_star == 0.0
        assert np.array_equal(red.matrix, q)

    def test_objective_and_power_invariant(self):
        rng = np.random.default_rng(31)
        for k in range(50):
            ens = small_ensemble(200 + 3 * k, n_samples=int(rng.integers(2, 7)),
                                 m=int(rng.integers(1, 3)))
            prob = precoding.assemble_problem(ens, 1.0, 1.0)
            q = rand_psd(rng, ens.dim) + 0.1 * np.eye(ens.dim)
            red = precoding.rank_reduce(q, ns1=ens.ns1)
            before = psdopt.objective(prob, [q])
            after = psdopt.objective(prob, [red.matrix])
            assert abs(after - before) <= 1e-8 * (1.0 + abs(before))
            assert np.allclose(np.diag(red.matrix), np.diag(q), atol=1e-14)
            if not red.already_deficient:
                assert red.rank_after < red.rank_before

    def test_small_inputs_rejected(self):
        with pytest.raises(DomainError):
            precoding.rank_reduce(np.eye(2), ns1=2)
        with pytest.raises(DomainError):
            precoding.rank_reduce(np.eye(4), ns1=1)


class TestRankConstrainedSearch:
    def test_full_rank_matches_convex(self):
        # with d' = d the search space covers the convex optimum
        for k in range(10):
            ens = small_ensemble(400 + 5 * k, n_samples=4)
            want = precoding.common_message_capacity(ens, 1.0, 1.0).objective_nats
            got, pre = precoding.rank_constrained_search(
                ens, 1.0, 1.0, ens.dim, restarts=6, seed=k)
            assert abs(got - want) <= 1e-4 * (1.0 + abs(want))
            assert pre.d_prime == ens.dim

    def test_counterexample_rank3_reaches_optimum(self):
        ens, _ = precoding.build_counterexample()
        got, _ = precoding.rank_constrained_search(ens, 1.0, 1.0, 3, restarts=20, seed=1)
        assert CONVEX_OPT - got <= 1e-5
        assert got <= CONVEX_OPT + 1e-9

    def test_counterexample_rank2_frozen_value(self):
        ens, _ = precoding.build_counterexample()
        got, pre = precoding.rank_constrained_search(
            ens, 1.0, 1.0, 2, restarts=5, seed=0xC0FFEE)
        assert abs(got - RANK2_BEST) <= 1e-9
        assert pre.d_prime == 2
        e1, e2 = precoding.expected_powers(pre, ens)
        assert e1 <= 1.0 + 1e-8 and e2 <= 1.0 + 1e-8

    def test_deterministic(self):
        ens = small_ensemble(55, n_samples=3)
        a, _ = precoding.rank_constrained_search(ens, 1.0, 1.0, 2, restarts=3, seed=9)
        b, _ = precoding.rank_constrained_search(ens, 1.0, 1.0, 2, restarts=3, seed=9)
        assert a == b

    def test_bad_dim(self):
        ens = small_ensemble(56, n_samples=3)
        with pytest.raises(DomainError):
            precoding.rank_constrained_search(ens, 1.0, 1.0, 0)


class TestPrecoderSetValidation:
    def test_dim_mismatch(self):
        with pytest.raises(DomainError):
            precoding.PrecoderSet(
                g1=np.zeros((2, 3)), g2=np.zeros((2, 2)),
                gamma1=np.zeros(2), gamma2=np.zeros(2))

    def test_gamma_length(self):
        with pytest.raises(DomainError):
            precoding.PrecoderSet(
                g1=np.zeros((2, 2)), g2=np.zeros((2, 2)),
                gamma1=np.zeros(3), gamma2=np.zeros(2))

    def test_negative_gamma(self):
        with pytest.raises(DomainError):
            precoding.PrecoderSet(
                g1=np.zeros((1, 2)), g2=np.zeros((1, 2)),
                gamma1=np.array([-1e-3]), gamma2=np.zeros(1))

    def test_roundoff_gamma_clipped(self):
        pre = precoding.PrecoderSet(
            g1=np.zeros((1, 2)), g2=np.zeros((1, 2)),
            gamma1=np.array([-1e-13]), gamma2=np.zeros(1))
        assert pre.gamma1[0] == 0.0

    def test_nonfinite(self):
        with pytest.raises(NonFiniteError):
            precoding.PrecoderSet(
                g1=np.array([[np.nan, 0.0]]), g2=np.zeros((1, 2)),
                gamma1=np.zeros(1), gamma2=np.zeros(1))


class TestSerialization:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(41)
        pre = precoding.PrecoderSet(
            g1=crandn(rng, (2, 3)), g2=crandn(rng, (4, 3)),
            gamma1=rng.random(2), gamma2=rng.random(4), power=(1.5, 2.0))
        path = tmp_path / "pre.json"
        precoding.save_precoders(pre, path)
        back = precoding.load_precoders(path)
        assert np.array_equal(back.g1, pre.g1)
        assert np.array_equal(back.g2, pre.g2)
        assert np.array_equal(back.gamma1, pre.gamma1)
        assert np.array_equal(back.gamma2, pre.gamma2)
        assert back.power == pre.power

    def test_power_optional(self):
        pre = precoding.PrecoderSet(
            g1=np.zeros((1, 2)), g2=np.zeros((1, 2)),
            gamma1=np.zeros(1), gamma2=np.zeros(1))
        doc = precoding.precoders_to_json(pre)
        assert "P" not in doc
        assert precoding.precoders_from_json(doc).power is None
