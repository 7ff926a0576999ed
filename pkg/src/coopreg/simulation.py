"""Lockstep closed-loop simulation.

Every step reads one snapshot of time ``t`` and writes time ``t + 1``:

1. outputs at ``t``: each follower's input ``u_i(t)`` from its estimator
   and observer states, then ``y_mi(t)`` and ``e_i(t)``;
2. advance leader and disturbances;
3. advance distributed observers (neighbors' ``eta_j(t)``, ``eta_0 = x0``);
4. advance local estimators;
5. advance plants.

Steps 2-5 only read the time-``t`` snapshot, so the order among them
does not affect results; it is fixed anyway for bitwise reproducibility.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import IdentityViolation, SimulationDiverged, ValidationError

__all__ = [
    "DelayHistory",
    "InitialConditions",
    "SimulationTrace",
    "ErrorCoordinates",
    "ConvergenceMetrics",
    "random_initial_conditions",
    "zero_initial_conditions",
    "run",
    "run_observer",
    "error_coordinates",
    "convergence_metrics",
    "recompute_errors",
    "write_csv",
    "read_csv",
]


class DelayHistory:
    """Window of the last ``r + 1`` vectors; offset 0 is the newest."""

    def __init__(self, depth, dim, initial=None):
        self.depth = depth
        self._buf = np.zeros((depth + 1, dim))
        self._head = 0  # index of offset 0
        if initial is not None:
            # initial[k] is the value at offset -(depth - k), oldest first
            for row in np.asarray(initial, dtype=float).reshape(-1, dim):
                self.push(row)

    def push(self, value):
        self._head = (self._head + 1) % (self.depth + 1)
        self._buf[self._head] = value

    def at(self, offset):
        if not -self.depth <= offset <= 0:
            raise IndexError(f"offset {offset} outside [-{self.depth}, 0]")
        return self._buf[(self._head + offset) % (self.depth + 1)]


@dataclass
class InitialConditions:
    """Initial data for every signal.

    ``u_past[i]`` holds follower ``i``'s inputs on ``t = -r .. -1`` (oldest
    first).  Leader and plant states only matter at ``t = 0``.
    """

    x0: np.ndarray
    w: list
    x: list
    eta: list
    xi: list
    u_past: list

    def __add__(self, other):
        add = lambda a, b: [p + q for p, q in zip(a, b)]  # noqa: E731
        return InitialConditions(
            self.x0 + other.x0, add(self.w, other.w), add(self.x, other.x),
            add(self.eta, other.eta), add(self.xi, other.xi), add(self.u_past, other.u_past),
        )


def zero_initial_conditions(scenario):
    agents = scenario.agents
    r = max((a.max_delay for a in agents), default=0)
    q = scenario.S0.shape[0]
    return InitialConditions(
        x0=np.zeros(q),
        w=[np.zeros(a.s) for a in agents],
        x=[np.zeros(a.n) for a in agents],
        eta=[np.zeros(q) for _ in agents],
        xi=[np.zeros(a.n + a.s) for a in agents],
        u_past=[np.zeros((r, a.m)) for a in agents],
    )


def random_initial_conditions(scenario, seed, random_inputs=False):
    """Uniform ``[-1, 1]`` draws; past inputs are zero unless ``random_inputs``."""
    rng = np.random.default_rng(seed)
    agents = scenario.agents
    r = max((a.max_delay for a in agents), default=0)
    q = scenario.S0.shape[0]
    uni = lambda *shape: rng.uniform(-1.0, 1.0, size=shape)  # noqa: E731
    return InitialConditions(
        x0=uni(q),
        w=[uni(a.s) for a in agents],
        x=[uni(a.n) for a in agents],
        eta=[uni(q) for _ in agents],
        xi=[uni(a.n + a.s) for a in agents],
        u_past=[uni(r, a.m) if random_inputs else np.zeros((r, a.m)) for a in agents],
    )


@dataclass
class SimulationTrace:
    """Signals at ``t = 0..T``; per-agent lists are indexed from 0."""

    t: np.ndarray
    x0: np.ndarray
    w: list
    x: list
    eta: list
    xi: list
    u: list
    e: list
    ym: list
    u_past: list
    mu: float = math.nan

    @property
    def horizon(self):
        return int(self.t[-1])

    @property
    def n_agents(self):
        return len(self.x)

    def u_at(self, i, t):
        """Input of agent ``i`` at any ``t >= -r``."""
        if t >= 0:
            return self.u[i][t]
        return self.u_past[i][len(self.u_past[i]) + t]


@dataclass
class ErrorCoordinates:
    xbar: list
    ubar: list
    xi_e: list
    eta_tilde: list
    residuals: dict = field(default_factory=dict)


@dataclass
class ConvergenceMetrics:
    tail_max: list
    rates: list
    observer_tail: float
    observer_rate: float
    tail_start: int

    @property
    def worst_tail(self):
        return max(self.tail_max) if self.tail_max else 0.0

    @property
    def diverging(self):
        return self.observer_rate >= 1.0 or any(r >= 1.0 for r in self.rates)

    def as_dict(self):
        return {
            "tail_start": self.tail_start,
            "tail_max": self.tail_max,
            "rates": self.rates,
            "observer_tail": self.observer_tail,
            "observer_rate": self.observer_rate,
            "diverging": self.diverging,
        }


def _check_finite(step, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise SimulationDiverged(step)


def run(scenario, controllers, initial=None, horizon=None, mu=None, seed=None):
    """Simulate leader, disturbances, plants, observers and controllers.

    Parameters
    ----------
    scenario : Scenario
    controllers : list of ControllerRealization
    initial : InitialConditions, optional
        Defaults to random (seeded) or zero according to the scenario settings.
    horizon : int, optional
        Last time index ``T``; the trace holds ``T + 1`` samples.
    mu : float, optional
        Observer gain; defaults to the controllers' ``mu``.

    Raises
    ------
    SimulationDiverged
        If any state becomes non-finite.
    """
    agents = scenario.agents
    N = len(agents)
    if len(controllers) != N:
        raise ValidationError(f"{len(controllers)} controllers for {N} agents")
    T = int(scenario.settings.horizon if horizon is None else horizon)
    if initial is None:
        s = scenario.settings.seed if seed is None else seed
        initial = (zero_initial_conditions(scenario) if scenario.settings.initial == "zero"
                   else random_initial_conditions(scenario, s))
    mu = float(controllers[0].mu if mu is None else mu)
    S0 = scenario.S0
    adj = scenario.network.adjacency
    Qs = scenario.disturbances
    q = S0.shape[0]

    # per-agent constant blocks
    blocks = []
    for a, c, Q in zip(agents, controllers, Qs):
        M, Cm = a.composite(Q)
        blocks.append({
            "M": M, "Cm": Cm,
            "Bx": [np.vstack([b, np.zeros((a.s, a.m))]) for b in a.B],
            "Ex": np.vstack([a.E_x, np.zeros((a.s, q))]),
            "Kxi": c.K_xi, "K2x": c.K2x, "L": c.L,
        })

    hist = [DelayHistory(a.max_delay, a.m, initial.u_past[i]) for i, a in enumerate(agents)]
    x0 = np.array(initial.x0, dtype=float)
    w = [np.array(v, dtype=float) for v in initial.w]
    x = [np.array(v, dtype=float) for v in initial.x]
    eta = [np.array(v, dtype=float) for v in initial.eta]
    xi = [np.array(v, dtype=float) for v in initial.xi]

    rec = {k: [np.empty((T + 1, d)) for d in dims] for k, dims in {
        "w": [a.s for a in agents], "x": [a.n for a in agents], "eta": [q] * N,
        "xi": [a.n + a.s for a in agents], "u": [a.m for a in agents],
        "e": [a.p for a in agents], "ym": [a.p_m for a in agents],
    }.items()}
    x0_rec = np.empty((T + 1, q))

    # overflow is detected explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T + 1):
            ys, es = [], []
            for i, (a, b) in enumerate(zip(agents, blocks)):
                u = b["Kxi"] @ xi[i] + b["K2x"] @ eta[i]
                hist[i].push(u)
                ym = a.C_m @ x[i] + a.F_mx @ x0 + a.F_mw @ w[i]
                e = a.C @ x[i] + a.F_x @ x0 + a.F_w @ w[i]
                for d, dm, dd in zip(a.delays, a.D_m, a.D):
                    ud = hist[i].at(-d)
                    ym = ym + dm @ ud
                    e = e + dd @ ud
                ys.append(ym)
                es.append(e)
                rec["u"][i][t] = u
                rec["e"][i][t] = e
                rec["ym"][i][t] = ym
                rec["w"][i][t] = w[i]
                rec["x"][i][t] = x[i]
                rec["eta"][i][t] = eta[i]
                rec["xi"][i][t] = xi[i]
            x0_rec[t] = x0
            if t == T:
                break

            x0_next = S0 @ x0
            w_next = [Q @ wi for Q, wi in zip(Qs, w)]

            eta_all = [x0] + eta
            eta_next = []
            for i in range(N):
                diff = np.zeros(q)
                for j in np.flatnonzero(adj[i + 1]):
                    diff += adj[i + 1, j] * (eta_all[j] - eta[i])
                eta_next.append(S0 @ eta[i] + mu * (S0 @ diff))

            xi_next, x_next = [], []
            for i, (a, b) in enumerate(zip(agents, blocks)):
                innov = ys[i] - b["Cm"] @ xi[i] - a.F_mx @ eta[i]
                xn = b["M"] @ xi[i] + b["Ex"] @ eta[i]
                pn = a.A @ x[i] + a.E_x @ x0 + a.E_w @ w[i]
                for d, bx, bb, dm in zip(a.delays, b["Bx"], a.B, a.D_m):
                    ud = hist[i].at(-d)
                    xn = xn + bx @ ud
                    pn = pn + bb @ ud
                    innov = innov - dm @ ud
                xi_next.append(xn + b["L"] @ innov)
                x_next.append(pn)

            x0, w, eta, xi, x = x0_next, w_next, eta_next, xi_next, x_next
            _check_finite(t + 1, x0, *w, *eta, *xi, *x)

    return SimulationTrace(
        t=np.arange(T + 1), x0=x0_rec, w=rec["w"], x=rec["x"], eta=rec["eta"], xi=rec["xi"],
        u=rec["u"], e=rec["e"], ym=rec["ym"],
        u_past=[np.array(u, dtype=float).reshape(-1, a.m) for u, a in zip(initial.u_past, agents)],
        mu=mu,
    )


def run_observer(S0, network, mu, x0, eta, steps):
    """Distributed observer alone; returns ``eta_i(t) - x0(t)`` stacked, shape ``(steps+1, N*q)``."""
    S0 = np.atleast_2d(S0)
    adj = network.adjacency
    N = network.n_followers
    x0 = np.array(x0, dtype=float)
    eta = [np.array(v, dtype=float) for v in eta]
    out = np.empty((steps + 1, N * S0.shape[0]))
    for t in range(steps + 1):
        out[t] = np.concatenate([e - x0 for e in eta])
        if t == steps:
            break
        eta_all = [x0] + eta
        eta = [S0 @ eta[i] + mu * (S0 @ sum(adj[i + 1, j] * (eta_all[j] - eta[i])
                                            for j in np.flatnonzero(adj[i + 1])))
               if np.any(adj[i + 1]) else S0 @ eta[i] for i in range(N)]
        x0 = S0 @ x0
    return out


def recompute_errors(trace, scenario):
    """Regulated errors rebuilt from recorded states and inputs."""
    out = []
    for i, a in enumerate(scenario.agents):
        e = np.empty_like(trace.e[i])
        for t in range(len(trace.t)):
            v = a.C @ trace.x[i][t] + a.F_x @ trace.x0[t] + a.F_w @ trace.w[i][t]
            for d, dd in zip(a.delays, a.D):
                v = v + dd @ trace.u_at(i, t - d)
            e[t] = v
        out.append(e)
    return out


def _rel(lhs, rhs_terms):
    scale = 1.0 + np.linalg.norm(lhs) + sum(np.linalg.norm(r) for r in rhs_terms)
    return np.linalg.norm(lhs - sum(rhs_terms)) / scale


def error_coordinates(trace, scenario, controllers, tol=1e-9):
    """Transform a trace into regulation-error coordinates and certify the identities.

    With ``v = col(x0, w)``, ``xbar = x - X v``, ``ubar = u - U v``,
    ``xi_e = xi - col(x, w)`` and ``eta_tilde = eta - x0``, checks at every
    admissible step:

    * ``ubar(t) = K1 xbar(t) + K_xi xi_e(t) + K2x eta_tilde(t)``
    * ``xbar(s+1) = A xbar(s) + sum_l B_l ubar(s - r_l)`` for ``s >= r``
    * ``xi_e(t+1) = (M - L C_m') xi_e(t) + ([E_x; 0] - L F_mx) eta_tilde(t)``
    * ``e(s) = C xbar(s) + sum_l D_l ubar(s - r_l)`` for ``s >= r``

    Raises
    ------
    IdentityViolation
        If any relative residual exceeds ``tol``.
    """
    T = trace.horizon
    q = scenario.S0.shape[0]
    coords = ErrorCoordinates([], [], [], [], {})
    worst = {"input": 0.0, "state": 0.0, "estimator": 0.0, "error": 0.0}
    for i, (a, c, Q) in enumerate(zip(scenario.agents, controllers, scenario.disturbances)):
        v = np.hstack([trace.x0, trace.w[i]])
        xbar = trace.x[i] - v @ c.X.T
        ubar = trace.u[i] - v @ c.U.T
        xi_e = trace.xi[i] - np.hstack([trace.x[i], trace.w[i]])
        eta_t = trace.eta[i] - trace.x0
        M, Cm = a.composite(Q)
        Acl = M - c.L @ Cm
        Gin = np.vstack([a.E_x, np.zeros((a.s, q))]) - c.L @ a.F_mx
        r = a.max_delay

        def check(name, t, res):
            worst[name] = max(worst[name], float(res))
            if res > tol:
                raise IdentityViolation(name, t, res)

        for t in range(T + 1):
            check("input", t, _rel(ubar[t], [c.K1 @ xbar[t], c.K_xi @ xi_e[t], c.K2x @ eta_t[t]]))
            if t < T:
                check("estimator", t, _rel(xi_e[t + 1], [Acl @ xi_e[t], Gin @ eta_t[t]]))
            if t >= r:
                terms = [dd @ ubar[t - d] for d, dd in zip(a.delays, a.D)]
                check("error", t, _rel(trace.e[i][t], [a.C @ xbar[t]] + terms))
                if t < T:
                    terms = [bb @ ubar[t - d] for d, bb in zip(a.delays, a.B)]
                    check("state", t, _rel(xbar[t + 1], [a.A @ xbar[t]] + terms))
        coords.xbar.append(xbar)
        coords.ubar.append(ubar)
        coords.xi_e.append(xi_e)
        coords.eta_tilde.append(eta_t)
    coords.residuals = worst
    return coords


def _envelope_rate(norms, floor_rel=1e-12):
    """Geometric rate fitted to the log of a monotone envelope.

    Decay is read from the running maximum of the future (non-increasing),
    cut where it falls below ``floor_rel`` of its start.  When the last
    quarter outgrows the first, the past running maximum over the second
    half is fitted instead, giving a rate above 1.
    """
    norms = np.asarray(norms, dtype=float)
    if norms.size < 10 or norms.max() == 0.0:
        return 0.0
    t = np.arange(norms.size, dtype=float)
    quarter = norms.size // 4
    if norms[-quarter:].max() > norms[:quarter].max():
        half = norms.size // 2
        past = np.maximum.accumulate(norms)[half:]
        return float(np.exp(np.polyfit(t[half:], np.log(past), 1)[0]))
    env = np.maximum.accumulate(norms[::-1])[::-1]
    keep = np.flatnonzero(env > floor_rel * env[0])
    if keep.size < 10:
        return 0.0
    slope = np.polyfit(t[keep], np.log(env[keep]), 1)[0]
    return float(np.exp(slope))


def convergence_metrics(trace, tail_fraction=0.6):
    """Tail error and fitted geometric decay rate per agent.

    The tail covers the last ``tail_fraction`` of the horizon.  Rates are
    least-squares fits of the log running-maximum envelope until it drops
    below ``1e-12`` of its initial value.
    """
    T = trace.horizon
    if T < 50:
        raise ValidationError("horizon must be at least 50 steps")
    start = int(round((1.0 - tail_fraction) * T))
    tails, rates = [], []
    for e in trace.e:
        norms = np.linalg.norm(e, axis=1)
        tails.append(float(norms[start:].max()))
        rates.append(_envelope_rate(norms))
    obs = np.linalg.norm(np.hstack([eta - trace.x0 for eta in trace.eta]), axis=1)
    return ConvergenceMetrics(
        tail_max=tails, rates=rates,
        observer_tail=float(obs[start:].max()), observer_rate=_envelope_rate(obs),
        tail_start=start,
    )


def write_csv(trace, path):
    """One row per step: ``t``, then ``e``, ``u`` and ``eta`` columns per agent."""
    cols, data = ["t"], [trace.t[:, None].astype(float)]
    for prefix, series in (("e", trace.e), ("u", trace.u), ("eta", trace.eta)):
        for i, arr in enumerate(series, start=1):
            cols += [f"{prefix}{i}_{k}" for k in range(1, arr.shape[1] + 1)]
            data.append(arr)
    table = np.hstack(data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in table:
            writer.writerow([str(int(row[0]))] + [f"{v:.17e}" for v in row[1:]])
    return cols


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    return header, rows


def steady_state_input(controller, trace, i):
    """Feedforward ``U v(t)`` the input converges to."""
    v = np.hstack([trace.x0, trace.w[i]])
    return v @ controller.U.T

