"""Discrete time-delay regulator equations.

For each follower, find ``(X, U)`` with

    X S^(r+1) = A X S^r + sum_l B_l U S^(r - r_l) + E S^r
    0         = C X S^r + sum_l D_l U S^(r - r_l) + F S^r

where ``S = blockdiag(S0, Q)``.  The equations are vectorised with
``vec(M K) = (K^T kron I) vec(M)`` and solved by least squares.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .exceptions import RegulatorError, ValidationError

__all__ = [
    "CompositeExo",
    "RegulatorSolution",
    "RankReport",
    "composite_exo",
    "rank_condition",
    "regulator_residual",
    "regulator_tolerance",
    "solve_regulator",
    "delay_free_regulator",
]

RANK_RTOL = 1e-9


@dataclass(frozen=True)
class CompositeExo:
    """Exogenous model ``v = col(x0, w)`` seen by one follower."""

    S0: np.ndarray
    Q: np.ndarray
    E_x: np.ndarray
    E_w: np.ndarray
    F_x: np.ndarray
    F_w: np.ndarray

    @property
    def q(self):
        return self.S0.shape[0]

    @property
    def s(self):
        return self.Q.shape[0]

    @property
    def S_bar(self):
        return block_diag(self.S0, self.Q)

    @property
    def E(self):
        return np.hstack([self.E_x, self.E_w])

    @property
    def F(self):
        return np.hstack([self.F_x, self.F_w])


@dataclass(frozen=True)
class RegulatorSolution:
    X: np.ndarray
    U: np.ndarray
    residual: float
    tol: float

    def as_dict(self):
        return {"X": self.X.tolist(), "U": self.U.tolist(), "residual": self.residual}


@dataclass(frozen=True)
class RankReport:
    passed: bool
    checks: tuple = field(default=(), repr=False)  # (z, rank, required)


def composite_exo(agent, S0, Q):
    S0 = np.atleast_2d(np.asarray(S0, dtype=float))
    Q = np.asarray(Q, dtype=float).reshape(agent.s, agent.s)
    if S0.shape != (agent.q, agent.q):
        raise ValidationError(f"leader is {S0.shape}, agent expects q={agent.q}")
    return CompositeExo(S0, Q, agent.E_x, agent.E_w, agent.F_x, agent.F_w)


def _powers(S, k):
    out = [np.eye(S.shape[0])]
    for _ in range(k + 1):
        out.append(out[-1] @ S)
    return out


def _numerical_rank(M, rtol):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def rank_condition(agent, exo, rtol=RANK_RTOL):
    """Sufficient solvability test at every eigenvalue of ``S_bar``.

    At each ``z`` the complex matrix
    ``[[z^r A - z^(r+1) I, sum_l B_l z^(r - r_l)], [z^r C, sum_l D_l z^(r - r_l)]]``
    must have rank ``n + p``.
    """
    r, n = agent.max_delay, agent.n
    checks = []
    for z in np.linalg.eigvals(exo.S_bar):
        top = np.hstack([z**r * agent.A - z ** (r + 1) * np.eye(n),
                         sum(b * z ** (r - d) for b, d in zip(agent.B, agent.delays))])
        bot = np.hstack([z**r * agent.C,
                         sum(dm * z ** (r - d) for dm, d in zip(agent.D, agent.delays))])
        rank = _numerical_rank(np.vstack([top, bot]), rtol)
        checks.append((complex(z), rank, n + agent.p))
    return RankReport(all(rk == req for _, rk, req in checks), tuple(checks))


def regulator_tolerance(agent, exo):
    norms = [agent.A, *agent.B, exo.E, agent.C, *agent.D, exo.F, exo.S_bar]
    return 1e-8 * (1.0 + float(np.sqrt(sum(np.linalg.norm(m) ** 2 for m in norms))))


def regulator_residual(agent, exo, X, U):
    """Plug-back residual (sum of Frobenius norms of both equations)."""
    r = agent.max_delay
    Sp = _powers(exo.S_bar, r)
    eq1 = X @ Sp[r + 1] - agent.A @ X @ Sp[r] - exo.E @ Sp[r]
    eq2 = agent.C @ X @ Sp[r] + exo.F @ Sp[r]
    for b, dm, d in zip(agent.B, agent.D, agent.delays):
        eq1 = eq1 - b @ U @ Sp[r - d]
        eq2 = eq2 + dm @ U @ Sp[r - d]
    return float(np.linalg.norm(eq1) + np.linalg.norm(eq2))


def _finish(agent, exo, X, U, what):
    residual = regulator_residual(agent, exo, X, U)
    tol = regulator_tolerance(agent, exo)
    if not residual <= tol:
        raise RegulatorError(f"{what}: regulator equations not solvable to tolerance {tol:.2e}", residual)
    return RegulatorSolution(X=X, U=U, residual=residual, tol=tol)


def solve_regulator(agent, exo):
    """Least-squares (minimum-norm) solution of the delay regulator equations.

    Raises
    ------
    RegulatorError
        If the plug-back residual exceeds the tolerance.
    """
    n, m = agent.n, agent.m
    nv = exo.q + exo.s
    r = agent.max_delay
    Sp = _powers(exo.S_bar, r)

    # unknowns: [vec(X) (n*nv); vec(U) (m*nv)], column-major
    top_x = np.kron(Sp[r + 1].T, np.eye(n)) - np.kron(Sp[r].T, agent.A)
    top_u = -sum(np.kron(Sp[r - d].T, b) for b, d in zip(agent.B, agent.delays))
    bot_x = np.kron(Sp[r].T, agent.C)
    bot_u = sum(np.kron(Sp[r - d].T, dm) for dm, d in zip(agent.D, agent.delays))
    lhs = np.block([[top_x, top_u], [bot_x, bot_u]])
    rhs = np.concatenate([
        (exo.E @ Sp[r]).reshape(-1, order="F"),
        -(exo.F @ Sp[r]).reshape(-1, order="F"),
    ])
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    X = sol[:n * nv].reshape((n, nv), order="F")
    U = sol[n * nv:].reshape((m, nv), order="F")
    return _finish(agent, exo, X, U, "solve_regulator")


def delay_free_regulator(agent, exo):
    """Classical regulator equations ``XS = AX + BU + E``, ``0 = CX + DU + F``."""
    if not agent.delay_free:
        raise ValidationError("delay_free_regulator requires a single zero delay")
    n, m = agent.n, agent.m
    nv = exo.q + exo.s
    S = exo.S_bar
    B, D = agent.B[0], agent.D[0]
    Iv = np.eye(nv)
    lhs = np.block([
        [np.kron(S.T, np.eye(n)) - np.kron(Iv, agent.A), -np.kron(Iv, B)],
        [np.kron(Iv, agent.C), np.kron(Iv, D)],
    ])
    rhs = np.concatenate([exo.E.reshape(-1, order="F"), -exo.F.reshape(-1, order="F")])
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    X = sol[:n * nv].reshape((n, nv), order="F")
    U = sol[n * nv:].reshape((m, nv), order="F")
    return _finish(agent, exo, X, U, "delay_free_regulator")
