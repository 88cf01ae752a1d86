"""Self-check suites wired to the `validate` CLI subcommand.

Each check re-derives a known answer or invariant at runtime and compares
against the library. Results come back as (name, ok, detail) tuples so the
CLI can print one line per check and exit nonzero if anything regressed.
"""

from __future__ import annotations

import numpy as np

from . import ba, channel, linalg, precoding, psdopt, region, strategies

Check = tuple[str, bool, str]

LN2 = float(np.log(2.0))


def _rand_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = channel.complex_gaussian(rng, (n, n))
    return linalg.hermitian_part(a)


def checks_linalg(rng: np.random.Generator) -> list[Check]:
    out = []
    a = _rand_hermitian(rng, 6)
    dec = linalg.eig_hermitian(a)
    res = linalg.frob(dec.reconstruct() - a) / (1.0 + linalg.frob(a))
    out.append(("eig-reconstruct", res < 1e-9, f"residual {res:.2e}"))

    p1 = linalg.psd_project(a)
    p2 = linalg.psd_project(p1)
    d = linalg.frob(p2 - p1)
    out.append(("psd-project-idempotent", d < 1e-10, f"drift {d:.2e}"))

    b = p1 + 1e-6 * np.eye(6)
    r = linalg.sqrt_psd(b)
    err = linalg.frob(r @ r - b)
    out.append(("sqrt-roundtrip", err < 1e-9, f"error {err:.2e}"))

    c = b + np.eye(6)
    ld = linalg.logdet_psd(c)
    ref = float(np.linalg.slogdet(c)[1])
    out.append(("logdet-cholesky", abs(ld - ref) < 1e-9, f"diff {abs(ld - ref):.2e}"))
    return out


def checks_channel(rng: np.random.Generator) -> list[Check]:
    out = []
    mac = channel.binary_additive_mac(0.5, 0.1, 0.2)
    csum = mac.channel.sum(axis=3)
    ok = bool(np.allclose(csum, 1.0, atol=1e-12))
    out.append(("adder-rows-normalized", ok, f"max dev {abs(csum - 1).max():.2e}"))

    cb = channel.generate_quantizer(3, 2, 7)
    h = channel.complex_gaussian(rng, (2, 2))
    i1 = channel.quantize(h, cb)
    i2 = channel.quantize(h, cb)
    dists = np.sum(np.abs(h[np.newaxis] - cb.codewords) ** 2, axis=(1, 2))
    nearest = abs(dists[i1] - dists.min()) < 1e-12
    out.append(("quantizer-nearest-deterministic", i1 == i2 and nearest,
                f"index {i1}, dist {dists[i1]:.6f}"))

    cb2 = channel.generate_quantizer(2, 2, 8)
    ens = channel.sample_ensemble(64, 2, cb, cb2, rng_seed=9)
    wsum = float(ens.weights.sum())
    m1 = ens.csit_marginal(1)
    ref = np.bincount(ens.s1, weights=ens.weights, minlength=ens.ns1)
    ok = abs(wsum - 1.0) < 1e-12 and np.allclose(m1, ref)
    out.append(("ensemble-marginals", ok, f"weight sum {wsum:.12f}"))
    return out


def checks_discrete(tol: float) -> list[Check]:
    out = []
    p_bsc = np.array([[0.9, 0.1], [0.1, 0.9]])
    res = ba.ba_capacity(p_bsc, tol=min(tol, 1e-10))
    ref = LN2 + 0.9 * np.log(0.9) + 0.1 * np.log(0.1)
    out.append(("ba-bsc-closed-form", abs(res.capacity_nats - ref) < 1e-8,
                f"got {res.capacity_nats:.12f} want {ref:.12f}"))

    blind = ba.discrete_common_capacity(channel.binary_additive_mac(0.5, 0.5, 0.5))
    out.append(("adder-blind-endpoint", abs(blind.capacity_bits - 1.0) < 1e-6,
                f"capacity {blind.capacity_bits:.8f} bits"))

    full = ba.discrete_common_capacity(channel.binary_additive_mac(0.5, 0.0, 0.0))
    want = float(np.log2(3.0))
    out.append(("adder-full-csit-endpoint", abs(full.capacity_bits - want) < 1e-6,
                f"capacity {full.capacity_bits:.8f} bits"))
    return out


def checks_psdopt(rng: np.random.Generator) -> list[Check]:
    out = []
    # identity channel, per-diagonal cap P: optimum is (P/2) I with value 2 ln(1+P/2)
    p = 1.7
    prob = psdopt.LogDetProblem(
        dims=[2],
        terms=[psdopt.Term(1.0, [(0, np.eye(2, dtype=np.complex128))])],
        constraints=[psdopt.Halfspace({0: [1.0, 1.0]}, p)],
    )
    rep = psdopt.solve(prob)
    want = 2.0 * np.log1p(p / 2.0)
    ok = rep.converged and abs(rep.objective_nats - want) < 1e-7
    out.append(("logdet-isotropic-optimum", ok,
                f"got {rep.objective_nats:.10f} want {want:.10f}"))

    h = channel.complex_gaussian(rng, (2, 3))
    prob2 = psdopt.LogDetProblem(
        dims=[3],
        terms=[psdopt.Term(1.0, [(0, h)])],
        constraints=[psdopt.Halfspace({0: [1.0, 1.0, 1.0]}, 1.0)],
    )
    x = np.eye(3, dtype=np.complex128) * 0.2
    err = linalg.fd_gradient_check(
        lambda m: psdopt.objective(prob2, [m]),
        psdopt.gradient(prob2, [x])[0],
        x,
    )
    out.append(("logdet-gradient-fd", err < 1e-5, f"rel err {err:.2e}"))
    return out


def checks_mimo(rng: np.random.Generator) -> list[Check]:
    out = []
    ens, sigma_star = precoding.build_counterexample()
    rep = precoding.common_message_capacity(ens, 1.0, 1.0)
    # water levels per state/eigendirection, gains 1/(2 - xi) by construction
    xi = np.array([[1.0, 1.0], [1.6, 0.4], [1.0, 1.0], [1.8, 0.2]])
    want = float(0.25 * np.log1p(xi / (2.0 - xi)).sum())
    ok = rep.converged and abs(rep.objective_nats - want) < 1e-6
    out.append(("counterexample-objective", ok,
                f"got {rep.objective_nats:.10f} want {want:.10f}"))

    pre = precoding.extract_precoders(rep.solution[0], ens, power=(1.0, 1.0))
    sig = precoding.reconstruct_covariance(pre)
    err = float(np.abs(sig - sigma_star).max())
    out.append(("counterexample-sigma-star", err < 1e-4, f"entrywise err {err:.2e}"))

    cb1 = channel.generate_quantizer(2, 2, 21)
    cb2 = channel.generate_quantizer(2, 2, 22)
    small = channel.sample_ensemble(8, 2, cb1, cb2, rng_seed=23)
    lo = region.no_csit_capacity(small, 2.0, 2.0)
    mid = precoding.common_message_capacity(small, 2.0, 2.0).objective_nats
    hi = region.perfect_csit_capacity(small, 2.0, 2.0)
    ok = lo <= mid + 1e-8 and mid <= hi + 1e-8
    out.append(("csit-sandwich", ok, f"{lo:.6f} <= {mid:.6f} <= {hi:.6f} (nats)"))

    pt, _ = region.inner_lp((1.0, 1.0, 1.5, 2.0), (0.0, 1.0, 1.0))
    got = pt.r1 + pt.r2
    out.append(("region-lp-corner", abs(got - 1.5) < 1e-12, f"R1+R2 {got:.12f}"))
    return out


def run_all(seed: int = 0xC0FFEE, tol: float = 1e-9) -> list[Check]:
    """Run every suite; deterministic for a fixed seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    checks = []
    checks += checks_linalg(rng)
    checks += checks_channel(rng)
    checks += checks_discrete(tol)
    checks += checks_psdopt(rng)
    checks += checks_mimo(rng)
    return checks
