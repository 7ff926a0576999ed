"""Leader-follower communication graphs.

Node 0 is the leader (exosystem); nodes ``1..N`` are followers.  The
weighted adjacency follows the convention ``a[i, j] > 0`` iff node ``i``
receives information from node ``j`` (edge ``j -> i``).  Row 0 is never
used: the leader listens to nobody.
"""

from collections import deque
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter

import numpy as np

from .exceptions import ValidationError

__all__ = ["Network", "HMatrix", "build_h_matrix", "check_connectivity"]


@dataclass(frozen=True)
class Network:
    """Weighted leader-follower digraph.

    Parameters
    ----------
    adjacency : (N+1, N+1) array_like
        Nonnegative weights with zero diagonal.  ``adjacency[i, j]`` is the
        weight of edge ``j -> i``.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
            raise ValidationError(f"adjacency must be (N+1)x(N+1) with N >= 1, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("adjacency weights must be finite")
        if np.any(a < 0):
            i, j = np.argwhere(a < 0)[0]
            raise ValidationError(f"negative weight a[{i},{j}] = {a[i, j]}")
        if np.any(np.diag(a) != 0):
            i = int(np.flatnonzero(np.diag(a))[0])
            raise ValidationError(f"nonzero diagonal a[{i},{i}] = {a[i, i]}")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @classmethod
    def from_edges(cls, n_followers, edges):
        """Build from ``(src, dst)`` or ``(src, dst, weight)`` tuples."""
        a = np.zeros((n_followers + 1, n_followers + 1))
        for edge in edges:
            src, dst = int(edge[0]), int(edge[1])
            weight = float(edge[2]) if len(edge) > 2 else 1.0
            if not (0 <= src <= n_followers and 1 <= dst <= n_followers):
                raise ValidationError(f"edge {tuple(edge)} out of range for N={n_followers}")
            a[dst, src] = weight
        return cls(a)

    @property
    def n_followers(self):
        return self.adjacency.shape[0] - 1

    def neighbors(self, i):
        """Nodes that follower ``i`` listens to (may include 0)."""
        return [int(j) for j in np.flatnonzero(self.adjacency[i] > 0)]

    def edges(self):
        """List of ``(src, dst, weight)`` for follower in-edges."""
        out = []
        for i in range(1, self.n_followers + 1):
            for j in self.neighbors(i):
                out.append((j, i, float(self.adjacency[i, j])))
        return out

    def follower_block(self):
        """Adjacency restricted to followers, ``N x N``."""
        return self.adjacency[1:, 1:]

    def leader_weights(self):
        """Pinning weights ``a[i, 0]`` for ``i = 1..N``."""
        return self.adjacency[1:, 0]

    def is_undirected(self):
        """True if the follower subgraph is symmetric."""
        block = self.follower_block()
        return bool(np.array_equal(block, block.T))

    def rescaled(self, factor):
        if factor <= 0:
            raise ValidationError("rescaling factor must be positive")
        return Network(self.adjacency * factor)


@dataclass(frozen=True)
class HMatrix:
    """Follower matrix ``H`` and its complex spectrum."""

    entries: np.ndarray
    spectrum: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.entries.shape[0]

    def distinct_eigenvalues(self, tol=1e-12):
        """One representative per conjugate pair (nonnegative imaginary part)."""
        reps = []
        for nu in self.spectrum:
            nu = complex(nu.real, abs(nu.imag))
            if nu.imag <= tol:
                nu = complex(nu.real, 0.0)
            reps.append(nu)
        return np.array(reps)


def _follower_order(net):
    """Topological order of the follower subgraph, or None if it has a cycle."""
    n = net.n_followers
    # neighbors are 1-based; shift them to 0-based predecessors
    graph = {i: {j - 1 for j in net.neighbors(i + 1) if j > 0} for i in range(n)}
    sorter = TopologicalSorter(graph)
    try:
        return list(sorter.static_order())
    except CycleError:
        return None


def build_h_matrix(net):
    """Construct ``H`` with ``h_ii = sum_j a_ij`` and ``h_ij = -a_ij``.

    The diagonal sum runs over ``j = 0..N`` so leader pinning is included.
    When the follower subgraph is acyclic, ``H`` is permutation-similar to
    a triangular matrix and its spectrum is read off the diagonal exactly;
    otherwise a dense eigensolver is used and each eigenpair is checked.

    Examples
    --------
    >>> net = Network.from_edges(1, [(0, 1)])
    >>> build_h_matrix(net).entries
    array([[1.]])
    """
    if not isinstance(net, Network):
        net = Network(net)
    a = net.adjacency
    block = a[1:, 1:]
    h = -block.copy()
    np.fill_diagonal(h, a[1:, :].sum(axis=1))
    h.setflags(write=False)

    if _follower_order(net) is not None:
        spectrum = np.diag(h).astype(complex)
    else:
        spectrum, vecs = np.linalg.eig(h)
        scale = max(np.linalg.norm(h, 2), 1.0)
        for k in range(len(spectrum)):
            res = np.linalg.norm(h @ vecs[:, k] - spectrum[k] * vecs[:, k])
            if res > 1e-10 * scale * max(np.linalg.norm(vecs[:, k]), 1.0):
                raise ValidationError(f"eigenpair {k} of H failed residual check ({res:.2e})")
    spectrum = np.array(spectrum, dtype=complex)
    spectrum.setflags(write=False)
    return HMatrix(entries=h, spectrum=spectrum)


def check_connectivity(net):
    """Breadth-first search from the leader along directed edges.

    Returns
    -------
    connected : bool
        True iff every follower is reachable from node 0.
    unreachable : list of int
        Followers not reached, in ascending order.
    """
    n = net.n_followers
    seen = {0}
    queue = deque([0])
    while queue:
        j = queue.popleft()
        # followers i that listen to j
        for i in np.flatnonzero(net.adjacency[1:, j] > 0) + 1:
            i = int(i)
            if i not in seen:
                seen.add(i)
                queue.append(i)
    unreachable = [i for i in range(1, n + 1) if i not in seen]
    return not unreachable, unreachable
