import numpy as np
import pytest
from scipy.stats import norm

from stratnet import game, npl
from stratnet.errors import (DomainError, IdentificationError, NonContractionError,
                             SingularityError)
from stratnet.graph import Network
from stratnet.npl import (NplSettings, ReducedFormParams, StructuralParams, example_restrictions,
                          exclusion_restrictions, identification_check, npl_fixed_point_residuals,
                          npl_run, probit_fit, simulate_npl_data, structural_recovery)


def example_structural(rng, q=2, t=3):
    Phi = np.zeros((2, 2))
    Phi[1, 0] = rng.normal()
    Lam = np.array([[0.0, rng.normal()], [rng.normal(), 0.0]])
    return StructuralParams(Phi, Lam, rng.normal(size=(q, 2)), rng.normal(size=(t, 2)))


def test_example_round_trip(rng):
    for _ in range(50):
        st = example_structural(rng)
        rec = structural_recovery(st.reduced(), example_restrictions(2, 3))
        assert np.max(np.abs(rec.Phi - st.Phi)) < 1e-10
        assert np.max(np.abs(rec.B - st.B)) < 1e-10
        back = rec.reduced()
        assert np.max(np.abs(back.pi - st.reduced().pi)) < 1e-10


def test_example_closed_form(rng):
    st = example_structural(rng)
    red = st.reduced()
    rec = structural_recovery(red, example_restrictions(2, 3))
    # Lambda~ = Lambda (I - Phi)^-1 puts phi_21 lambda_12 in the first cell of
    # the row of psi_1 next to lambda_12 itself; alpha* mixes in the same way
    phi21 = red.lambda_star[0, 0] / red.lambda_star[0, 1]
    assert rec.Phi[1, 0] == pytest.approx(phi21, rel=1e-10)
    assert np.allclose(rec.alpha[:, 0], red.alpha_star[:, 0] - red.alpha_star[:, 1] * phi21, atol=1e-10)


def test_identification_reports(rng):
    st = example_structural(rng)
    R = example_restrictions(2, 3)
    rep = identification_check(R, st.reduced())
    assert rep.identified and rep.rank == [1, 1]
    assert identification_check(R, st).identified
    # with lambda~ entry that carries y_2's information set to zero the rank drops
    red0 = ReducedFormParams(np.array([[0.0, 0.0], [0.3, 0.0]]), np.ones((2, 2)), np.ones((3, 2)))
    bad = identification_check(R, red0)
    assert not bad.identified and not all(bad.rank_ok)
    with pytest.raises(IdentificationError):
        structural_recovery(red0, R)
    zero = [np.zeros((0, 2 * 2 + 2 + 3)), R[1]]
    rep0 = identification_check(zero, st.reduced())
    assert rep0.order[0] == 0 and not rep0.order_ok[0]
    d = rep.to_dict()
    assert d["rank"] == [1, 1]


def test_instrument_rank_check(rng):
    Z = rng.normal(size=(20, 3))
    rep = identification_check(example_restrictions(2, 3), example_structural(rng),
                               instruments=np.hstack([Z, Z[:, :1]]))
    assert rep.instrument_rank == 3 and rep.instrument_cols == 4


def test_no_simultaneity_identity(rng):
    r, q, t = 2, 2, 2
    zeros = [[("phi", 1)], [("phi", 0)]]
    R = exclusion_restrictions(r, q, t, zeros)
    red = ReducedFormParams(rng.normal(size=(r, r)), rng.normal(size=(q, r)), rng.normal(size=(t, r)))
    rec = structural_recovery(red, R)
    assert np.allclose(rec.Phi, 0.0) and np.allclose(rec.B, red.pi, atol=1e-12)


def test_over_identified_recovery(rng):
    st = example_structural(rng)
    st = StructuralParams(st.Phi, st.Lambda, np.vstack([st.alpha[:1], [[0.0, st.alpha[1, 1]]]]), st.gamma)
    zeros = [[("lambda", 0)], [("phi", 0), ("lambda", 1)]]
    zeros[0].append(("alpha", 1))
    R = exclusion_restrictions(2, 2, 3, zeros)
    rec = structural_recovery(st.reduced(), R)
    assert np.max(np.abs(rec.Phi - st.Phi)) < 1e-8 and np.max(np.abs(rec.B - st.B)) < 1e-8


def test_restriction_validation():
    with pytest.raises(DomainError):
        exclusion_restrictions(2, 1, 1, [[("phi", 0)], []])
    with pytest.raises(DomainError):
        exclusion_restrictions(2, 1, 1, [[("beta", 0)], []])
    with pytest.raises(SingularityError):
        StructuralParams([[0.0, 1.0], [1.0, 0.0]], np.zeros((2, 2)), np.zeros((1, 2)), np.zeros((1, 2)))


def test_probit_fit_matches_score(rng):
    Z = np.column_stack([np.ones(500), rng.normal(size=500)])
    a = (Z @ [0.3, -0.8] + rng.normal(size=500) > 0).astype(float)
    zeta, ll, g = probit_fit(Z, a)
    assert g <= 1e-8
    assert ll == pytest.approx(np.sum(norm.logcdf((2 * a - 1) * (Z @ zeta))), rel=1e-12)


def small_model(T=10):
    lam = np.array([[0.6, 0.3], [-0.4, 0.5]])
    return ReducedFormParams(lam, np.array([[0.5, -0.3]]), np.random.default_rng(1).normal(0, 0.5, (T, 2)))


def test_npl_fixed_point_properties():
    red = small_model()
    d = simulate_npl_data(red, 10, 40, 0.1, seed=3)
    est, beliefs, trace = npl_run(d.nets, d.X, d.actions)
    assert trace.converged and trace.step[-1] <= 1e-8
    res_psi, res_score = npl_fixed_point_residuals(d.nets, d.X, d.actions, est, beliefs)
    assert res_psi <= 1e-8 and res_score <= 1e-6
    assert np.all((beliefs.psi >= 0) & (beliefs.psi <= 1))
    assert trace.to_dict()["iterations"] == len(trace.loglik)


def test_step2_shares_equilibrium_map():
    assert npl.equilibrium_map is game.equilibrium_map


def test_npl_no_interaction():
    red = ReducedFormParams(np.zeros((2, 2)), np.array([[0.8, -0.5]]), np.zeros((20, 2)))
    lam, alpha = [], []
    for seed in range(10):
        d = simulate_npl_data(red, 20, 40, 0.1, seed=seed)
        est, _, trace = npl_run(d.nets, d.X, d.actions)
        assert trace.converged
        lam.append(est.lambda_star.ravel())
        alpha.append(est.alpha_star.ravel())
    lam, alpha = np.array(lam), np.array(alpha)
    se = lam.std(0, ddof=1) / np.sqrt(len(lam))
    assert np.all(np.abs(lam.mean(0)) < 3 * se)
    assert np.allclose(alpha.mean(0), red.alpha_star.ravel(), atol=0.1)


def test_npl_input_validation():
    red = small_model(3)
    d = simulate_npl_data(red, 3, 20, 0.2, seed=0)
    with pytest.raises(DomainError):
        npl_run(d.nets, d.X, d.actions * 2)
    with pytest.raises(DomainError):
        npl_run(d.nets, d.X, d.actions, psi0="median")
    with pytest.raises(DomainError):
        npl_run(d.nets, d.X[:-1], d.actions[:-1])
    with pytest.raises(IdentificationError):
        npl_run(d.nets, np.ones((d.X.shape[0], 1)), d.actions)


def test_npl_non_contraction_path():
    # matching pairs with anti-coordinating actions: the belief map flips
    rng = np.random.default_rng(0)
    m = 200
    n = 2 * m
    G = np.zeros((n, n))
    idx = np.arange(m)
    G[2 * idx, 2 * idx + 1] = 1
    G[2 * idx + 1, 2 * idx] = 1
    a = np.zeros(n)
    a[2 * idx] = 1
    sw = rng.random(m) < 0.5
    a[2 * idx[sw]] = 0
    a[2 * idx[sw] + 1] = 1
    noise = rng.random(n) < 0.05
    a[noise] = 1 - a[noise]
    X = rng.standard_normal((n, 1))
    with pytest.raises(NonContractionError) as e:
        npl_run([G], X, a[:, None], settings=NplSettings(max_iters=100))
    trace = e.value.trace
    assert len(trace.step) >= 6 and not trace.converged


def test_networks_accepted_as_objects():
    red = small_model(4)
    d = simulate_npl_data(red, 4, 30, 0.2, seed=2, normalize=False, force=True, method="newton")
    nets = [Network(g.astype(np.uint8)) for g in d.nets]
    est1, _, _ = npl_run(nets, d.X, d.actions)
    est2, _, _ = npl_run(d.nets, d.X, d.actions)
    assert np.allclose(est1.pi, est2.pi)
