"""Built-in scenarios and random scenario generators."""

import numpy as np

from .exceptions import CoopregError
from .plant import AgentPlant
from .scenario import Scenario, SimulationSettings
from .synthesis import audit_assumptions, synthesize
from .topology import Network

__all__ = [
    "rotation",
    "fig1_network",
    "worked_example",
    "example_gains",
    "diag_leader_example",
    "zero_leader_example",
    "expanding_leader_example",
    "random_plant",
    "random_network",
    "random_scenario",
    "random_solvable_scenario",
    "BUILTIN",
]

EXAMPLE_K1 = (-0.0750, -0.4650)
EXAMPLE_L = (
    (0.0293, -1.5213, 0.2372, -0.9982),
    (-10.5975, 3.6208, -9.2420, 4.4453),
    (-1.6276, -1.1082, -0.9447, -0.4423),
    (1.3550, 0.1854, 0.1633, 0.0026),
)
PUBLISHED_ROOTS = (0.6435 + 0.4436j, 0.6435 - 0.4436j, 0.7530)


def rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]])


def fig1_network():
    """Leader feeds followers 1 and 2; follower 1 feeds 3 and 4."""
    return Network.from_edges(4, [(0, 1), (0, 2), (1, 3), (1, 4)])


def _example_E_w_table():
    c, s = np.cos, np.sin
    return [
        np.array([[-1.5 + 2 * c(2) + 0.5 * s(2), -1.25 + 0.5 * c(2)],
                  [-0.5 * s(2) + c(2), 1.5 * c(2) - 1 - s(2)]]),
        np.array([[-1.5 + 2 * c(3) + s(3), -1.5 + c(3)],
                  [c(3), 2 * c(3) - 1 - s(3)]]),
        np.array([[-1.5 + 2 * c(4) + 1.5 * s(4), -1.75 + 1.5 * c(4)],
                  [0.5 * s(4) + c(4), 2.5 * c(4) - 1 - s(4)]]),
        np.array([[-1.5 + 2 * c(5) + 2 * s(5), -2 + 2 * c(5)],
                  [s(5) + c(5), 3 * c(5) - 1 - s(5)]]),
    ]


def example_plant(i):
    """Follower ``i`` (1-based) of the four-agent delayed double-integrator example."""
    c, s = np.cos, np.sin
    return AgentPlant(
        A=[[1.0, 1.0], [0.0, 1.0]],
        B=([[-0.5], [0.0]], [[1.0], [1.0]]),
        E_x=[[-2 * c(1) + 1.5, -1.0], [-c(1) - s(1), c(1) - 1 + s(1)]],
        E_w=_example_E_w_table()[i - 1],
        C=[[1.0, 0.0]],
        F_x=[[1.0, 0.0]],
        F_w=[[-1.0, 0.0]],
        delays=(0, 1),
    )


def example_gains():
    """Published ``K1`` (shared) and per-agent ``L`` as arrays."""
    K1 = np.array([EXAMPLE_K1])
    L = [np.array(col).reshape(4, 1) for col in EXAMPLE_L]
    return K1, L


def worked_example(with_gains=True):
    """The four-follower example with a rotating leader and mu = 0.5."""
    K1, L = example_gains()
    n = 4
    return Scenario(
        S0=rotation(1.0),
        agents=[example_plant(i) for i in range(1, n + 1)],
        disturbances=[rotation(i + 1.0) for i in range(1, n + 1)],
        network=fig1_network(),
        K1=[K1.copy() for _ in range(n)] if with_gains else None,
        L=L if with_gains else None,
        settings=SimulationSettings(horizon=500, seed=0, mu=0.5),
        name="worked_example",
    )


def diag_leader_example():
    """Leader ``diag(1, -1)`` pinned directly to two followers (H = I)."""
    return Scenario(
        S0=np.diag([1.0, -1.0]), agents=[], disturbances=[],
        network=Network.from_edges(2, [(0, 1), (0, 2)]), name="diag_leader",
    )


def zero_leader_example():
    return Scenario(
        S0=np.zeros((2, 2)), agents=[], disturbances=[],
        network=Network.from_edges(2, [(0, 1), (1, 2), (2, 1)]), name="zero_leader",
    )


def expanding_leader_example():
    """Scalar leader 1.2 on an undirected graph: leader check fails, gain still exists."""
    adj = np.zeros((3, 3))
    adj[1, 0] = 1.0
    adj[1, 2] = adj[2, 1] = 1.0
    return Scenario(
        S0=[[1.2]], agents=[], disturbances=[], network=Network(adj), name="expanding_leader",
    )


BUILTIN = {
    "worked_example": worked_example,
    "diag_leader": diag_leader_example,
    "zero_leader": zero_leader_example,
    "expanding_leader": expanding_leader_example,
}


def random_plant(rng, q, delays=(0,), n=None, m=None, s=2):
    n = n or int(rng.integers(2, 4))
    m = m or int(rng.integers(1, 3))
    p = 1
    pm = min(n, p + 1)
    h = len(delays)
    return AgentPlant(
        A=rng.normal(size=(n, n)) / np.sqrt(n),
        B=tuple(rng.normal(size=(n, m)) for _ in range(h)),
        E_x=rng.normal(size=(n, q)),
        E_w=rng.normal(size=(n, s)),
        C=rng.normal(size=(p, n)),
        D=tuple(0.3 * rng.normal(size=(p, m)) for _ in range(h)),
        F_x=rng.normal(size=(p, q)),
        F_w=rng.normal(size=(p, s)),
        C_m=rng.normal(size=(pm, n)),
        D_m=tuple(0.3 * rng.normal(size=(pm, m)) for _ in range(h)),
        F_mx=rng.normal(size=(pm, q)),
        F_mw=rng.normal(size=(pm, s)),
        delays=delays,
    )


def random_network(rng, n_followers, extra_edge_prob=0.3):
    """Random spanning tree from the leader plus random extra follower edges."""
    adj = np.zeros((n_followers + 1, n_followers + 1))
    for i in range(1, n_followers + 1):
        parent = int(rng.integers(0, i))
        adj[i, parent] = rng.uniform(0.5, 1.5)
    for i in range(1, n_followers + 1):
        for j in range(1, n_followers + 1):
            if i != j and adj[i, j] == 0 and rng.random() < extra_edge_prob:
                adj[i, j] = rng.uniform(0.5, 1.5)
    return Network(adj)


def random_scenario(rng, n_followers=3, delays=(0,), s=2):
    q = 2
    S0 = rotation(rng.uniform(0.2, 2.5))
    agents = [random_plant(rng, q, delays=delays, s=s) for _ in range(n_followers)]
    dists = [rotation(rng.uniform(0.2, 2.5)) if s == 2 else np.zeros((s, s)) for _ in range(n_followers)]
    return Scenario(S0, agents, dists, random_network(rng, n_followers), name="random")


def random_solvable_scenario(seed, n_followers=3, delays=(0,), max_radius=0.9, max_gain=50.0, attempts=200):
    """Draw scenarios until synthesis succeeds with every loop radius <= ``max_radius``.

    Returns
    -------
    scenario, controllers
    """
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        sc = random_scenario(rng, n_followers=n_followers, delays=delays)
        try:
            report = audit_assumptions(sc, search_budget=2000)
            if not report.all_passed:
                continue
            ctrls = synthesize(sc, report=report)
        except CoopregError:
            continue
        radii = [max(c.certificates.values()) for c in ctrls]
        sizes = [max(np.abs(c.X).max(), np.abs(c.U).max(), np.abs(c.L).max()) for c in ctrls]
        if max(radii) <= max_radius and max(sizes) <= max_gain:
            mu = ctrls[0].mu
            return sc.with_settings(mu=mu), ctrls
    raise RuntimeError(f"no solvable scenario found in {attempts} attempts (seed {seed})")
