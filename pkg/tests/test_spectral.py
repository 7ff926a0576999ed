import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coopreg.exceptions import NumericalError, ValidationError
from coopreg.fixtures import EXAMPLE_K1, example_plant, rotation
from coopreg.spectral import (
    DelaySystem,
    char_poly_determinant,
    char_poly_roots,
    factored_char_poly_check,
    is_exponentially_stable,
    is_schur,
    kron,
    lift,
    match_multisets,
    simulate_delay,
    simulate_lifted,
    spectral_radius,
    stability_certificate,
)

# nonzero roots of z^3 - 163/80 z^2 + 631/400 z - 93/200, expanded in exact
# rational arithmetic for the worked-example delay loop
EXAMPLE_LOOP_ROOTS = [0.629615076569 + 0.448401602261j, 0.629615076569 - 0.448401602261j, 0.778269846862]


def test_lift_delay_free_identity():
    L = lift(DelaySystem((0,), ([[0.5]],)))
    np.testing.assert_array_equal(L.matrix, [[0.5]])


def test_lift_two_term_companion():
    L = lift(DelaySystem((0, 1), ([[0.3]], [[0.4]])))
    np.testing.assert_array_equal(L.matrix, [[0.3, 0.4], [1.0, 0.0]])
    # (0.3 +- sqrt(0.09 + 1.6)) / 2
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(L.matrix).real), [-0.5, 0.8], atol=1e-14)
    assert is_exponentially_stable(DelaySystem((0, 1), ([[0.3]], [[0.4]]))).radius == pytest.approx(0.8)


def test_lift_block_structure_and_padding():
    F0, F2 = np.eye(2), 2 * np.eye(2)
    L = lift(DelaySystem((0, 2), (F0, F2)), max_delay=3)
    assert L.matrix.shape == (8, 8)
    np.testing.assert_array_equal(L.matrix[:2, :2], F0)
    np.testing.assert_array_equal(L.matrix[:2, 4:6], F2)
    np.testing.assert_array_equal(L.matrix[2:, :6], np.eye(6))
    with pytest.raises(ValidationError):
        lift(DelaySystem((0, 2), (F0, F2)), max_delay=1)


@pytest.mark.parametrize("delays", [(0, 0), (1, 0), (-1, 0)])
def test_delay_system_rejects_bad_schedules(delays):
    with pytest.raises(ValidationError):
        DelaySystem(delays, (np.eye(1), np.eye(1)))


def test_from_terms_sums_repeats():
    sys = DelaySystem.from_terms([(1, [[1.0]]), (0, [[2.0]]), (1, [[0.5]])])
    assert sys.delays == (0, 1)
    np.testing.assert_array_equal(sys.coefficient(1), [[1.5]])
    np.testing.assert_array_equal(sys.coefficient(7), [[0.0]])


def test_stability_examples():
    marginal = is_exponentially_stable(DelaySystem((0, 1), ([[0.0]], [[1.0]])))
    assert not marginal.stable and marginal.radius == pytest.approx(1.0) and marginal.verdict == "marginal"
    zero = is_exponentially_stable(DelaySystem((0, 2), (np.zeros((2, 2)), np.zeros((2, 2)))))
    assert zero.stable and zero.radius == 0.0
    assert stability_certificate([[1.5]]).verdict == "unstable"


def test_example_loop_radius():
    agent = example_plant(1)
    K1 = np.array([EXAMPLE_K1])
    sys = DelaySystem.from_terms([(0, agent.A)] + [(d, b @ K1) for d, b in zip(agent.delays, agent.B)])
    cert = is_exponentially_stable(sys)
    assert cert.stable
    assert cert.radius == pytest.approx(0.778269846862, abs=1e-9)


def test_example_loop_roots_against_exact_expansion():
    agent = example_plant(1)
    K1 = np.array([EXAMPLE_K1])
    rs = char_poly_roots(agent.A, [(d, b @ K1) for d, b in zip(agent.delays, agent.B)])
    assert rs.zero_roots == 1
    assert match_multisets(rs.nonzero, EXAMPLE_LOOP_ROOTS) < 1e-9
    coeffs = char_poly_determinant(agent.A, [(d, b @ K1) for d, b in zip(agent.delays, agent.B)])
    np.testing.assert_allclose(coeffs, [1, -163 / 80, 631 / 400, -93 / 200, 0], atol=1e-14)


def test_char_poly_trivial():
    rs = char_poly_roots(np.diag([0.5, 0.2]), [])
    assert match_multisets(rs.nonzero, [0.5, 0.2]) < 1e-14


def test_char_poly_determinant_degenerate():
    with pytest.raises(ValidationError):
        char_poly_determinant(np.eye(5), [])


def _roots_from_coeffs(coeffs):
    r = np.roots(coeffs)
    return r[np.abs(r) > 1e-5]


def test_char_poly_dual_route_random():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 4))
        tau = int(rng.integers(1, 3))
        A = rng.normal(size=(n, n))
        gains = [(0, rng.normal(size=(n, n))), (tau, rng.normal(size=(n, n)))]
        lifted = char_poly_roots(A, gains).nonzero
        leibniz = _roots_from_coeffs(char_poly_determinant(A, gains))
        assert match_multisets(lifted, leibniz) < 1e-6


def test_kron_and_radius_examples():
    S0 = rotation(1.0)
    spec = np.linalg.eigvals(kron(np.eye(2), S0))
    assert match_multisets(spec, np.tile(np.linalg.eigvals(S0), 2)) < 1e-12
    assert spectral_radius(S0) == pytest.approx(1.0, abs=1e-14)
    assert not is_schur(S0)
    assert is_schur(0.5 * S0)


small = arrays(np.float64, (2, 2), elements=st.floats(-2, 2))


@given(small, arrays(np.float64, (3, 3), elements=st.floats(-2, 2)))
def test_kron_spectrum_products(A, B):
    got = np.linalg.eigvals(kron(A, B))
    want = np.outer(np.linalg.eigvals(A), np.linalg.eigvals(B)).ravel()
    assert match_multisets(got, want) < 1e-6 * (1 + np.abs(want).max())


@given(
    st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**31 - 1),
)
def test_lift_reproduces_delay_recursion(n, tau, seed):
    rng = np.random.default_rng(seed)
    delays = sorted({0, tau})
    mats = [0.5 * rng.normal(size=(n, n)) / n for _ in delays]
    sys = DelaySystem(tuple(delays), tuple(mats))
    history = rng.uniform(-1, 1, size=(tau + 1, n))
    direct = simulate_delay(sys, history, 100)
    lifted = simulate_lifted(lift(sys), history, 100)
    scale = np.abs(direct).max() + 1e-300
    assert np.abs(direct - lifted).max() <= 1e-12 * scale


def test_cascade_decoupled_and_unstable_block():
    F = [(0, [[0.5]])]
    H = [(0, [[0.2]]), (1, [[0.1]])]
    ok = factored_char_poly_check(F, [(0, [[0.0]])], H)
    assert ok.factorization_holds and ok.stable
    bad = factored_char_poly_check([(0, [[1.3]])], [(1, [[2.0]])], H)
    assert bad.factorization_holds and not bad.stable


def test_cascade_random_stable_blocks_decay():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n, m = 2, 2
        F = [(0, rng.normal(size=(n, n))), (1, rng.normal(size=(n, n)))]
        H = [(0, rng.normal(size=(m, m))), (2, rng.normal(size=(m, m)))]
        for terms in (F, H):
            rho = is_exponentially_stable(DelaySystem.from_terms(terms)).radius
            for k in range(len(terms)):
                terms[k] = (terms[k][0], terms[k][1] * 0.8 / max(rho, 1e-3) ** (1 + terms[k][0]))
        # rescaling F_l by c^(1+tau_l) scales every root by c
        G = [(0, rng.normal(size=(n, m))), (1, rng.normal(size=(n, m)))]
        chk = factored_char_poly_check(F, G, H)
        assert chk.factorization_holds and chk.stable
        blocks = DelaySystem.from_terms(
            [(d, np.block([[dict(F).get(d, np.zeros((n, n))), dict(G).get(d, np.zeros((n, m)))],
                           [np.zeros((m, n)), dict(H).get(d, np.zeros((m, m)))]]))
             for d in (0, 1, 2)]
        )
        traj = simulate_delay(blocks, rng.uniform(-1, 1, size=(3, n + m)), 500)
        assert np.abs(traj[-50:]).max() < 1e-6 * max(1.0, np.abs(traj).max())


def test_match_multisets_size_mismatch():
    assert match_multisets([1, 2], [1]) == float("inf")
    assert match_multisets([], []) == 0.0


def test_non_finite_roots_rejected():
    with pytest.raises((NumericalError, ValidationError, np.linalg.LinAlgError)):
        char_poly_roots([[np.inf]], [])
