import json

import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

from coopreg.exceptions import AssumptionViolation, DesignError
from coopreg.fixtures import (
    EXAMPLE_K1,
    expanding_leader_example,
    fig1_network,
    worked_example,
    example_gains,
    example_plant,
    random_plant,
    rotation,
)
from coopreg.plant import AgentPlant
from coopreg.regulator import RegulatorSolution, composite_exo, solve_regulator
from coopreg.scenario import Scenario
from coopreg.spectral import spectral_radius
from coopreg.synthesis import (
    ControllerRealization,
    assemble_controller,
    audit_assumptions,
    check_detectability,
    design_L,
    k1_loop,
    recheck_certificates,
    search_k1,
    synthesize,
    verify_k1,
)
from coopreg.topology import Network, build_h_matrix


def test_verify_k1_examples():
    cert = verify_k1(example_plant(1), np.array([EXAMPLE_K1]))
    assert cert.stable and cert.radius == pytest.approx(0.778269846862, abs=1e-9)
    with pytest.raises(AssumptionViolation) as info:
        verify_k1(AgentPlant(A=[[1.0, 1.0], [0.0, 1.0]], B=([[0.0], [1.0]],), E_x=[[0.0], [0.0]],
                             C=[[1.0, 0.0]], F_x=[[0.0]]), np.zeros((1, 2)))
    assert info.value.assumption == "delay_stabilizability"
    assert info.value.details["radius"] == pytest.approx(1.0)


def test_search_k1_worked_example_plant():
    K = search_k1(example_plant(1), budget=10_000)
    assert K is not None
    assert verify_k1(example_plant(1), K).stable


def test_search_k1_hopeless_plant():
    agent = AgentPlant(A=[[2.0]], B=([[0.0]], [[0.0]]), E_x=[[0.0]], C=[[1.0]], F_x=[[0.0]], delays=(0, 1))
    assert search_k1(agent, budget=500) is None


def test_search_k1_random_self_consistent():
    rng = np.random.default_rng(21)
    found = 0
    for k in range(50):
        agent = random_plant(rng, 2, delays=(0,) if k % 2 else (0, 1))
        K = search_k1(agent, budget=2000, seed=k)
        if K is not None:
            found += 1
            assert verify_k1(agent, K).stable
    # random B has full column rank almost surely, so most draws succeed
    assert found >= 40


def test_detectability_examples():
    assert check_detectability(example_plant(1), rotation(2.0)).passed
    blind = AgentPlant(A=[[1.0]], B=([[1.0]],), E_x=[[0.0]], C=[[1.0]], F_x=[[0.0]], C_m=[[0.0]])
    assert not check_detectability(blind, np.zeros((0, 0))).passed
    rng = np.random.default_rng(4)
    for _ in range(100):
        agent = random_plant(rng, 2)
        assert check_detectability(agent, rotation(rng.uniform(0.2, 2.5))).passed


def test_design_L_accepts_published_gain():
    _, Ls = example_gains()
    L = design_L(example_plant(1), rotation(2.0), L=Ls[0])
    np.testing.assert_array_equal(L, Ls[0])


def test_design_L_rejects_bad_supplied_gain():
    with pytest.raises(DesignError):
        design_L(example_plant(1), rotation(2.0), L=np.zeros((4, 1)))


def test_design_L_stable_plant():
    agent = AgentPlant(A=[[0.5, 0.1], [0.0, 0.3]], B=([[1.0], [0.0]],), E_x=[[0.0], [0.0]],
                       C=[[1.0, 0.0]], F_x=[[0.0]])
    M, Cm = agent.composite(np.zeros((0, 0)))
    assert spectral_radius(M) < 1
    L = design_L(agent, np.zeros((0, 0)))
    assert spectral_radius(M - L @ Cm) < 1


def _dare_filter_gain(M, Cm):
    P = solve_discrete_are(M.T, Cm.T, np.eye(M.shape[0]), np.eye(Cm.shape[0]))
    return M @ P @ Cm.T @ np.linalg.inv(Cm @ P @ Cm.T + np.eye(Cm.shape[0]))


def test_design_L_matches_dare_oracle():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = 3
        agent = AgentPlant(A=rng.normal(size=(n, n)), B=(rng.normal(size=(n, 1)),), E_x=np.zeros((n, 1)),
                           C=rng.normal(size=(1, n)), F_x=[[0.0]], C_m=rng.normal(size=(2, n)))
        M, Cm = agent.composite(np.zeros((0, 0)))
        L = design_L(agent, np.zeros((0, 0)))
        assert spectral_radius(M - L @ Cm) < 1
        np.testing.assert_allclose(L, _dare_filter_gain(M, Cm), rtol=1e-6, atol=1e-8)


def test_design_L_output_permutation_invariance():
    rng = np.random.default_rng(31)
    agent = random_plant(rng, 2)
    Q = rotation(0.9)
    M, Cm = agent.composite(Q)
    L = design_L(agent, Q)
    swapped = AgentPlant(
        A=agent.A, B=agent.B, E_x=agent.E_x, E_w=agent.E_w, C=agent.C, F_x=agent.F_x, F_w=agent.F_w,
        D=agent.D, C_m=agent.C_m[::-1], D_m=tuple(d[::-1] for d in agent.D_m), F_mx=agent.F_mx[::-1],
        F_mw=agent.F_mw[::-1],
    )
    Ms, Cms = swapped.composite(Q)
    Ls = design_L(swapped, Q)
    assert spectral_radius(Ms - Ls @ Cms) == pytest.approx(spectral_radius(M - L @ Cm), abs=1e-9)
    np.testing.assert_allclose(Ls, L[:, ::-1], atol=1e-8)


def _example_controller(i, mu=0.5):
    agent = example_plant(i)
    Q = rotation(i + 1.0)
    sol = solve_regulator(agent, composite_exo(agent, rotation(1.0), Q))
    K1, Ls = example_gains()
    H = build_h_matrix(fig1_network())
    return assemble_controller(agent, Q, sol, K1, Ls[i - 1], mu, rotation(1.0), H)


@pytest.mark.parametrize("i", [1, 3])
def test_assemble_partition(i):
    c = _example_controller(i)
    np.testing.assert_allclose(c.K2x, [[0.925, 0.465]], atol=1e-8)
    np.testing.assert_allclose(c.K2w, [[-0.925, -0.5 * i + 0.465]], atol=1e-8)
    np.testing.assert_array_equal(c.K2, c.U - c.K1 @ c.X)
    np.testing.assert_array_equal(c.K_xi, np.hstack([c.K1, c.K2w]))
    assert set(c.certificates) == {"k1_radius", "estimator_radius", "observer_radius"}


def test_assemble_zero_solution():
    agent = example_plant(1)
    sol = RegulatorSolution(np.zeros((2, 4)), np.zeros((1, 4)), 0.0, 1.0)
    K1, Ls = example_gains()
    c = assemble_controller(agent, rotation(2.0), sol, K1, Ls[0], 0.5, rotation(1.0), np.eye(4))
    assert not c.K2.any()


def test_assemble_names_violated_assumption():
    agent = example_plant(1)
    sol = solve_regulator(agent, composite_exo(agent, rotation(1.0), rotation(2.0)))
    K1, Ls = example_gains()
    with pytest.raises(AssumptionViolation) as info:
        assemble_controller(agent, rotation(2.0), sol, K1, Ls[0], 2.5, rotation(1.0), np.eye(4))
    assert info.value.assumption == "observer_gain"
    with pytest.raises(AssumptionViolation) as info:
        assemble_controller(agent, rotation(2.0), sol, np.zeros((1, 2)), Ls[0], 0.5, rotation(1.0), np.eye(4))
    assert info.value.assumption == "delay_stabilizability"


def test_controller_round_trip_recertifies():
    c = _example_controller(2)
    back = ControllerRealization.from_dict(json.loads(json.dumps(c.as_dict())), example_plant(2))
    for name in ("K1", "K2x", "K2w", "L", "X", "U"):
        np.testing.assert_array_equal(getattr(back, name), getattr(c, name))
    again = recheck_certificates(back, example_plant(2), rotation(3.0), rotation(1.0), build_h_matrix(fig1_network()))
    for k, v in c.certificates.items():
        assert again[k] == pytest.approx(v, abs=1e-12)


def test_audit_worked_example():
    report = audit_assumptions(worked_example())
    assert report.all_passed and report.sufficient_conditions_hold
    keys = {(c.key, c.agent) for c in report.checks}
    for i in range(1, 5):
        for k in ("delay_stabilizability", "detectability", "regulator_equations"):
            assert (k, i) in keys
    assert (report.mu_interval.lower, report.mu_interval.upper) == pytest.approx((0.0, 2.0), abs=1e-12)
    assert json.dumps(report.as_dict(), default=float)


def test_audit_disconnected_variant_still_evaluates_everything():
    sc = worked_example()
    sc.network = Network.from_edges(4, [(0, 1), (0, 2), (1, 3)])
    report = audit_assumptions(sc)
    failed = {c.key for c in report.failed()}
    assert "connectivity" in failed
    conn = next(c for c in report.checks if c.key == "connectivity")
    assert conn.detail["unreachable"] == [4]
    assert sum(c.key == "regulator_equations" and c.passed for c in report.checks) == 4


def test_audit_expanding_leader():
    report = audit_assumptions(Scenario([[2.0]], [], [], Network.from_edges(1, [(0, 1)])))
    assert [c.key for c in report.failed()] == ["leader_marginal"]
    assert (report.mu_interval.lower, report.mu_interval.upper) == pytest.approx((0.5, 1.5))
    assert report.sufficient_conditions_hold
    report = audit_assumptions(expanding_leader_example())
    assert report.mu_interval.feasible


def test_audit_mu_override_outside_interval():
    report = audit_assumptions(worked_example().with_settings(mu=3.0))
    obs = next(c for c in report.checks if c.key == "observer_gain")
    assert not obs.passed and obs.detail["mu_status"] == "outside"


def test_synthesize_worked_example(example_controllers):
    assert len(example_controllers) == 4
    for c in example_controllers:
        assert c.mu == 0.5
        assert max(c.certificates.values()) < 0.8


def test_synthesize_refuses_failed_audit():
    sc = worked_example(with_gains=False)
    sc.network = Network.from_edges(4, [(0, 1), (0, 2), (1, 3)])
    with pytest.raises(AssumptionViolation) as info:
        synthesize(sc)
    assert info.value.assumption == "connectivity"
    controllers = synthesize(sc, strict=False)
    assert len(controllers) == 4


def test_synthesize_without_user_gains_searches():
    controllers = synthesize(worked_example(with_gains=False))
    for c in controllers:
        assert c.certificates["k1_radius"] < 1 and c.certificates["estimator_radius"] < 1


def test_delay_free_structure():
    rng = np.random.default_rng(17)
    agent = random_plant(rng, 2, delays=(0,))
    loop = k1_loop(agent, np.zeros((agent.m, agent.n)))
    assert loop.delays == (0,)
    assert len(agent.B) == 1 and len(agent.D_m) == 1
