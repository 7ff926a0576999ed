"""Controller synthesis and the solvability audit.

Each follower runs

    u(t)    = [K1, K2w] xi(t) + K2x eta(t)
    xi(t+1) = M xi(t) + sum_l [B_l; 0] u(t - r_l) + [E_x; 0] eta(t)
              + L (y_m(t) - [C_m, F_mw] xi(t) - sum_l D_m,l u(t - r_l) - F_mx eta(t))

with ``M = [[A, E_w], [0, Q]]``, ``[K2x, K2w] = U - K1 X`` and ``eta`` the
distributed observer state.  With a single zero delay this is the
delay-free controller.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_are

from .exceptions import AssumptionViolation, DesignError, RegulatorError, ValidationError
from .observer import (
    leader_spectral_radius,
    mu_interval,
    observer_matrix,
    pick_mu,
)
from .regulator import composite_exo, rank_condition, solve_regulator
from .spectral import (
    EPS_STAB,
    DelaySystem,
    is_exponentially_stable,
    lift,
    spectral_radius,
    stability_certificate,
)
from .topology import build_h_matrix, check_connectivity

log = logging.getLogger(__name__)

__all__ = [
    "ControllerRealization",
    "DetectabilityReport",
    "AssumptionCheck",
    "AuditReport",
    "k1_loop",
    "verify_k1",
    "search_k1",
    "check_detectability",
    "design_L",
    "assemble_controller",
    "audit_assumptions",
    "synthesize",
    "recheck_certificates",
]

ASSUMPTION_TITLES = {
    "delay_stabilizability": "delay feedback K1 stabilizes x(t+1) = A x + sum B_l K1 x(t-r_l)",
    "detectability": "([[A, E_w], [0, Q]], [C_m, F_mw]) detectable",
    "regulator_equations": "delay regulator equations solvable",
    "connectivity": "every follower reachable from the leader",
    "leader_marginal": "leader eigenvalues inside the closed unit disc",
    "observer_gain": "some mu makes (I - mu H) kron S0 Schur",
}


@dataclass(frozen=True)
class ControllerRealization:
    K1: np.ndarray
    K2x: np.ndarray
    K2w: np.ndarray
    L: np.ndarray
    mu: float
    X: np.ndarray
    U: np.ndarray
    certificates: dict = field(default_factory=dict)

    @property
    def K2(self):
        return np.hstack([self.K2x, self.K2w])

    @property
    def K_xi(self):
        return np.hstack([self.K1, self.K2w])

    def as_dict(self):
        return {
            "K1": self.K1.tolist(),
            "K2x": self.K2x.tolist(),
            "K2w": self.K2w.tolist(),
            "L": self.L.tolist(),
            "mu": self.mu,
            "X": self.X.tolist(),
            "U": self.U.tolist(),
            "certificates": dict(self.certificates),
        }

    @classmethod
    def from_dict(cls, d, agent):
        def mat(key, shape):
            a = np.array(d[key], dtype=float)
            return a.reshape(shape)

        nv = agent.q + agent.s
        return cls(
            K1=mat("K1", (agent.m, agent.n)),
            K2x=mat("K2x", (agent.m, agent.q)),
            K2w=mat("K2w", (agent.m, agent.s)),
            L=mat("L", (agent.n + agent.s, agent.p_m)),
            mu=float(d["mu"]),
            X=mat("X", (agent.n, nv)),
            U=mat("U", (agent.m, nv)),
            certificates=dict(d.get("certificates", {})),
        )


@dataclass(frozen=True)
class DetectabilityReport:
    passed: bool
    modes: tuple = field(default=(), repr=False)  # (z, rank, required)


@dataclass(frozen=True)
class AssumptionCheck:
    key: str
    passed: bool
    agent: int = None
    detail: dict = field(default_factory=dict)


@dataclass
class AuditReport:
    checks: list
    mu_interval: object = None
    regulator: dict = field(default_factory=dict)
    k1: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    @property
    def sufficient_conditions_hold(self):
        """Everything except the marginal-leader condition, which is not needed."""
        return all(c.passed for c in self.checks if c.key != "leader_marginal")

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def as_dict(self):
        return {
            "all_passed": self.all_passed,
            "sufficient_conditions_hold": self.sufficient_conditions_hold,
            "checks": [
                {"assumption": c.key, "agent": c.agent, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "mu_interval": self.mu_interval.as_dict() if self.mu_interval is not None else None,
        }

    def format_text(self):
        lines = []
        for c in self.checks:
            who = "global " if c.agent is None else f"agent {c.agent}"
            status = "PASS" if c.passed else "FAIL"
            info = ", ".join(f"{k}={_fmt(v)}" for k, v in c.detail.items())
            lines.append(f"[{status}] {who:8s} {c.key:22s} {info}")
        lines.append("sufficient conditions: " + ("satisfied" if self.sufficient_conditions_hold else "NOT satisfied"))
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list) and len(v) > 6:
        return f"[{len(v)} items]"
    return str(v)


def k1_loop(agent, K1):
    """Delay recursion ``x(t+1) = A x(t) + sum_l B_l K1 x(t - r_l)``."""
    K1 = np.atleast_2d(np.asarray(K1, dtype=float))
    if K1.shape != (agent.m, agent.n):
        raise ValidationError(f"K1 has shape {K1.shape}, expected {(agent.m, agent.n)}")
    return DelaySystem.from_terms([(0, agent.A)] + [(d, b @ K1) for b, d in zip(agent.B, agent.delays)])


def verify_k1(agent, K1):
    """Certify the delay feedback loop; raise if it is not exponentially stable."""
    cert = is_exponentially_stable(k1_loop(agent, K1))
    if not cert.stable:
        raise AssumptionViolation(
            "delay_stabilizability", f"K1 loop spectral radius {cert.radius:.6g} (not < 1)", radius=cert.radius
        )
    return cert


def _dare_gain(A, B):
    P = solve_discrete_are(A, B, np.eye(A.shape[0]), np.eye(B.shape[1]))
    return -np.linalg.solve(np.eye(B.shape[1]) + B.T @ P @ B, B.T @ P @ A)


def search_k1(agent, budget=10_000, seed=0, stop_radius=0.9):
    """Best-effort search for a stabilizing delay feedback gain.

    Starts from zero and from the Riccati gain of the pair ``(A, sum_l B_l)``,
    then alternates coordinate descent on the lifted spectral radius with
    random restarts until ``stop_radius`` is reached or ``budget``
    evaluations are spent.

    Returns
    -------
    ndarray or None
        A gain certified by :func:`verify_k1`, or None.
    """
    rng = np.random.default_rng(seed)
    m, n = agent.m, agent.n
    evals = 0

    def radius(K):
        nonlocal evals
        evals += 1
        return spectral_radius(lift(k1_loop(agent, K)).matrix)

    starts = [np.zeros((m, n))]
    try:
        starts.append(_dare_gain(agent.A, sum(agent.B)))
    except (np.linalg.LinAlgError, ValueError):
        pass
    scored = [(radius(K), K) for K in starts]
    best_val, best = min(scored, key=lambda t: t[0])
    cur_val, cur = best_val, best.copy()
    step = 0.25 * max(1.0, float(np.abs(cur).max()))

    while evals < budget and best_val >= stop_radius:
        improved = False
        for idx in rng.permutation(m * n):
            for sign in (1.0, -1.0):
                trial = cur.copy()
                trial.flat[idx] += sign * step
                val = radius(trial)
                if val < cur_val:
                    cur_val, cur, improved = val, trial, True
                    break
            if evals >= budget:
                break
        if cur_val < best_val:
            best_val, best = cur_val, cur.copy()
        if not improved:
            step *= 0.5
            if step < 1e-6:
                # restart near the incumbent with a fresh scale
                scale = max(1.0, float(np.abs(best).max()))
                cur = best + rng.normal(scale=scale, size=best.shape)
                cur_val = radius(cur)
                step = 0.25 * scale

    if best_val < 1 - EPS_STAB:
        verify_k1(agent, best)
        return best
    log.info("search_k1: no stabilizing gain found (best radius %.6g after %d evaluations)", best_val, evals)
    return None


def _numerical_rank(M, rtol=1e-9):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def check_detectability(agent, Q, tol=EPS_STAB):
    """PBH test on the modes of ``[[A, E_w], [0, Q]]`` with modulus >= 1 - tol."""
    M, Cm = agent.composite(Q)
    dim = M.shape[0]
    modes = []
    for z in np.linalg.eigvals(M):
        if abs(z) >= 1 - tol:
            rank = _numerical_rank(np.vstack([z * np.eye(dim) - M, Cm]))
            modes.append((complex(z), rank, dim))
    return DetectabilityReport(all(rk == req for _, rk, req in modes), tuple(modes))


def design_L(agent, Q, L=None, max_iter=10_000, rtol=1e-10):
    """Output-injection gain making ``M - L [C_m, F_mw]`` Schur.

    A supplied ``L`` is only checked.  Otherwise the filtering Riccati
    recursion with unit weights is iterated until the gain settles.

    Raises
    ------
    DesignError
        On non-convergence or if the post-check fails.
    """
    M, Cm = agent.composite(Q)
    dim, pm = M.shape[0], Cm.shape[0]
    if L is not None:
        L = np.array(L, dtype=float).reshape(dim, pm)
    else:
        P = np.eye(dim)
        L = np.zeros((dim, pm))
        for it in range(max_iter):
            S = Cm @ P @ Cm.T + np.eye(pm)
            L_new = np.linalg.solve(S.T, (M @ P @ Cm.T).T).T
            P = M @ P @ M.T - L_new @ S @ L_new.T + np.eye(dim)
            P = 0.5 * (P + P.T)
            change = np.linalg.norm(L_new - L)
            L = L_new
            if change <= rtol * max(np.linalg.norm(L), 1.0):
                break
            if not np.all(np.isfinite(P)):
                raise DesignError("Riccati iteration diverged")
        else:
            raise DesignError(f"Riccati iteration did not converge in {max_iter} iterations")
    cert = stability_certificate(M - L @ Cm)
    if not cert.stable:
        raise DesignError(f"estimator matrix not Schur (radius {cert.radius:.6g})")
    return L


def assemble_controller(agent, Q, solution, K1, L, mu, S0, H, strict=True):
    """Bundle gains and re-run the three stability certificates.

    ``K2 = U - K1 X`` is split after the first ``q`` columns.
    """
    K1 = np.atleast_2d(np.asarray(K1, dtype=float)).reshape(agent.m, agent.n)
    K2 = solution.U - K1 @ solution.X
    q = agent.q
    M, Cm = agent.composite(Q)
    L = np.asarray(L, dtype=float).reshape(M.shape[0], Cm.shape[0])
    k1c = is_exponentially_stable(k1_loop(agent, K1))
    estc = stability_certificate(M - L @ Cm)
    obsc = stability_certificate(observer_matrix(S0, H, mu))
    certs = {
        "k1_radius": k1c.radius,
        "estimator_radius": estc.radius,
        "observer_radius": obsc.radius,
    }
    if strict:
        for key, cert in (("delay_stabilizability", k1c), ("detectability", estc), ("observer_gain", obsc)):
            if not cert.stable:
                raise AssumptionViolation(key, f"certificate failed (radius {cert.radius:.6g})", radius=cert.radius)
    return ControllerRealization(
        K1=K1, K2x=K2[:, :q], K2w=K2[:, q:], L=L, mu=float(mu),
        X=solution.X, U=solution.U, certificates=certs,
    )


def recheck_certificates(controller, agent, Q, S0, H):
    """Recompute the three spectral radii of an existing realization."""
    M, Cm = agent.composite(Q)
    return {
        "k1_radius": is_exponentially_stable(k1_loop(agent, controller.K1)).radius,
        "estimator_radius": spectral_radius(M - controller.L @ Cm),
        "observer_radius": spectral_radius(observer_matrix(S0, H, controller.mu)),
    }


def audit_assumptions(scenario, search_budget=10_000):
    """Evaluate every solvability hypothesis independently.

    ``scenario`` needs ``S0``, ``agents``, ``disturbances``, ``network`` and
    optional per-agent ``K1`` / ``L`` lists and ``settings.mu``.
    """
    checks = []
    S0 = scenario.S0
    net = scenario.network

    connected, unreachable = check_connectivity(net)
    checks.append(AssumptionCheck("connectivity", connected, None, {"unreachable": unreachable}))

    lam, marginal = leader_spectral_radius(S0)
    checks.append(AssumptionCheck("leader_marginal", marginal, None, {"leader_radius": lam}))

    H = build_h_matrix(net)
    interval = mu_interval(S0, H)
    detail = {"lower": interval.lower, "upper": interval.upper}
    ok = interval.feasible
    mu = getattr(scenario.settings, "mu", None)
    if mu is not None:
        detail["mu"] = mu
        detail["mu_status"] = interval.classify(mu)
        ok = ok and detail["mu_status"] == "inside"
    checks.append(AssumptionCheck("observer_gain", ok, None, detail))

    report = AuditReport(checks=checks, mu_interval=interval)
    for i, (agent, Q) in enumerate(zip(scenario.agents, scenario.disturbances), start=1):
        K1 = scenario.K1[i - 1] if scenario.K1 else None
        source = "supplied"
        if K1 is None:
            K1 = search_k1(agent, budget=search_budget, seed=i)
            source = "search"
        if K1 is None:
            checks.append(AssumptionCheck("delay_stabilizability", False, i, {"source": source}))
        else:
            cert = is_exponentially_stable(k1_loop(agent, K1))
            checks.append(AssumptionCheck(
                "delay_stabilizability", cert.stable, i, {"source": source, "radius": cert.radius}
            ))
            report.k1[i] = np.atleast_2d(K1)

        det = check_detectability(agent, Q)
        failing = sum(rk < req for _, rk, req in det.modes)
        checks.append(AssumptionCheck(
            "detectability", det.passed, i, {"marginal_modes": len(det.modes), "undetectable": failing}
        ))

        exo = composite_exo(agent, S0, Q)
        rank = rank_condition(agent, exo)
        try:
            sol = solve_regulator(agent, exo)
            report.regulator[i] = sol
            detail = {"residual": sol.residual, "rank_certified": rank.passed}
            if not rank.passed:
                log.warning("agent %d: rank test fails but regulator equations solved (tolerance anomaly)", i)
            checks.append(AssumptionCheck("regulator_equations", True, i, detail))
        except RegulatorError as exc:
            detail = {"residual": exc.residual, "rank_certified": rank.passed}
            checks.append(AssumptionCheck("regulator_equations", False, i, detail))
    return report


def synthesize(scenario, strict=True, report=None, search_budget=10_000):
    """Controllers for every follower.

    Parameters
    ----------
    strict : bool
        Refuse when the audit fails and enforce every certificate.

    Returns
    -------
    list of ControllerRealization
    """
    if report is None:
        report = audit_assumptions(scenario, search_budget=search_budget)
    if strict and not report.sufficient_conditions_hold:
        first = report.failed()[0]
        raise AssumptionViolation(first.key, f"audit failed for agent {first.agent}: {ASSUMPTION_TITLES[first.key]}")
    H = build_h_matrix(scenario.network)
    interval = report.mu_interval
    mu = scenario.settings.mu
    if mu is None:
        mu = pick_mu(interval, scenario.S0, H) if interval.feasible else 1.0
    out = []
    for i, (agent, Q) in enumerate(zip(scenario.agents, scenario.disturbances), start=1):
        sol = report.regulator.get(i)
        if sol is None:
            raise RegulatorError(f"agent {i}: no regulator solution", float("nan"))
        K1 = report.k1.get(i)
        if K1 is None:
            if strict:
                raise AssumptionViolation("delay_stabilizability", f"agent {i}: no stabilizing K1")
            K1 = np.zeros((agent.m, agent.n))
        L_user = scenario.L[i - 1] if scenario.L else None
        try:
            L = design_L(agent, Q, L=L_user)
        except DesignError:
            if strict:
                raise
            M, Cm = agent.composite(Q)
            L = np.zeros((M.shape[0], Cm.shape[0])) if L_user is None else np.asarray(L_user, dtype=float)
        out.append(assemble_controller(agent, Q, sol, K1, L, mu, scenario.S0, H, strict=strict))
    return out
