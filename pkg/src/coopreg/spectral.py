"""Spectra, Schur tests and integer-delay lifting.

A delay recursion ``x(t+1) = sum_l F_l x(t - tau_l)`` is lifted to the
delay-free system on the stacked state
``[x(t); x(t-1); ...; x(t-tau)]``.  All stability verdicts for delay loops
go through that lifting.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import linear_sum_assignment

from .exceptions import NumericalError, ValidationError

__all__ = [
    "EPS_STAB",
    "DelaySystem",
    "LiftedSystem",
    "StabilityCertificate",
    "RootSet",
    "CascadeCheck",
    "lift",
    "simulate_delay",
    "simulate_lifted",
    "spectral_radius",
    "is_schur",
    "stability_certificate",
    "is_exponentially_stable",
    "char_poly_roots",
    "char_poly_determinant",
    "kron",
    "match_multisets",
    "factored_char_poly_check",
]

EPS_STAB = 1e-9
ZERO_ROOT_TOL = 1e-7


@dataclass(frozen=True)
class DelaySystem:
    """Linear recursion with integer delays.

    Parameters
    ----------
    delays : tuple of int
        Strictly increasing nonnegative delays.
    matrices : tuple of ndarray
        One ``n x n`` coefficient per delay.
    """

    delays: tuple
    matrices: tuple

    def __post_init__(self):
        delays = tuple(int(d) for d in self.delays)
        mats = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in self.matrices)
        if not delays or len(delays) != len(mats):
            raise ValidationError("need one matrix per delay and at least one term")
        if delays[0] < 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValidationError(f"delays must be strictly increasing and nonnegative: {delays}")
        n = mats[0].shape[0]
        for m in mats:
            if m.shape != (n, n):
                raise ValidationError(f"coefficient shape {m.shape} != ({n}, {n})")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "matrices", mats)

    @classmethod
    def from_terms(cls, terms):
        """Build from ``(delay, matrix)`` pairs; repeated delays are summed."""
        acc = {}
        for d, m in terms:
            m = np.atleast_2d(np.asarray(m, dtype=float))
            acc[int(d)] = acc[int(d)] + m if int(d) in acc else m
        keys = sorted(acc)
        return cls(tuple(keys), tuple(acc[k] for k in keys))

    @property
    def n(self):
        return self.matrices[0].shape[0]

    @property
    def max_delay(self):
        return self.delays[-1]

    def coefficient(self, delay):
        for d, m in zip(self.delays, self.matrices):
            if d == delay:
                return m
        return np.zeros((self.n, self.n))


@dataclass(frozen=True)
class LiftedSystem:
    n: int
    max_delay: int
    matrix: np.ndarray

    @property
    def dimension(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class StabilityCertificate:
    stable: bool
    radius: float
    verdict: str  # "stable", "marginal" or "unstable"


@dataclass(frozen=True)
class RootSet:
    """Roots of a cleared delay characteristic polynomial.

    ``zero_roots`` counts roots flagged as artifacts of clearing negative
    powers of ``z``; they are kept out of ``nonzero``.
    """

    roots: np.ndarray
    nonzero: np.ndarray
    zero_roots: int


@dataclass(frozen=True)
class CascadeCheck:
    factorization_holds: bool
    max_deviation: float
    stable: bool
    radius: float


def lift(sys, max_delay=None):
    """Companion-block lifting of a delay recursion.

    Parameters
    ----------
    sys : DelaySystem
    max_delay : int, optional
        Pad the lifting to this delay (must be >= ``sys.max_delay``).
    """
    tau = sys.max_delay if max_delay is None else int(max_delay)
    if tau < sys.max_delay:
        raise ValidationError("max_delay smaller than the system's largest delay")
    n = sys.n
    dim = n * (tau + 1)
    big = np.zeros((dim, dim))
    for d, m in zip(sys.delays, sys.matrices):
        big[:n, d * n:(d + 1) * n] += m
    if tau > 0:
        big[n:, :-n] = np.eye(n * tau)
    return LiftedSystem(n=n, max_delay=tau, matrix=big)


def simulate_delay(sys, history, steps):
    """Iterate the delay recursion directly.

    ``history[k]`` is ``x(-k)`` for ``k = 0..tau``.  Returns an array of
    shape ``(steps + 1, n)`` holding ``x(0), ..., x(steps)``.
    """
    tau, n = sys.max_delay, sys.n
    hist = np.asarray(history, dtype=float).reshape(tau + 1, n)
    # buf[t + tau] = x(t)
    buf = np.zeros((steps + tau + 1, n))
    buf[:tau + 1] = hist[::-1]
    for t in range(steps):
        nxt = np.zeros(n)
        for d, m in zip(sys.delays, sys.matrices):
            nxt += m @ buf[t + tau - d]
        buf[t + tau + 1] = nxt
    return buf[tau:]


def simulate_lifted(lifted, history, steps):
    """Iterate the lifted system from the same stacked history."""
    z = np.asarray(history, dtype=float).reshape(-1)
    n = lifted.n
    out = np.empty((steps + 1, n))
    out[0] = z[:n]
    for t in range(steps):
        z = lifted.matrix @ z
        out[t + 1] = z[:n]
    return out


def spectral_radius(M):
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _verdict(radius, eps):
    if radius < 1 - eps:
        return "stable"
    if radius <= 1 + eps:
        return "marginal"
    return "unstable"


def stability_certificate(M, eps=EPS_STAB):
    """Schur verdict for a square matrix."""
    rho = spectral_radius(M)
    verdict = _verdict(rho, eps)
    return StabilityCertificate(stable=verdict == "stable", radius=rho, verdict=verdict)


def is_schur(M, eps=EPS_STAB):
    return spectral_radius(M) < 1 - eps


def is_exponentially_stable(sys, eps=EPS_STAB):
    """Stability certificate of a delay recursion via its lifting."""
    return stability_certificate(lift(sys).matrix, eps)


def _loop_system(A, gains):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValidationError(f"A must be a nonempty square matrix, got shape {A.shape}")
    return DelaySystem.from_terms([(0, A)] + [(d, g) for d, g in gains])


def char_poly_roots(A, gains, zero_tol=ZERO_ROOT_TOL):
    """Roots of ``z^(n r) det(zI - A - sum_l G_l z^(-r_l))``.

    Parameters
    ----------
    A : (n, n) array_like
    gains : iterable of (int, ndarray)
        Pairs ``(r_l, B_l K)``.

    Computed as the spectrum of the lifted recursion.  Roots with modulus
    below ``zero_tol`` (relative to the largest root) are reported as
    clearing artifacts.
    """
    sys = _loop_system(A, gains)
    roots = np.linalg.eigvals(lift(sys).matrix)
    if not np.all(np.isfinite(roots)):
        raise NumericalError("eigensolver returned non-finite roots")
    scale = max(1.0, float(np.max(np.abs(roots))))
    small = np.abs(roots) <= zero_tol * scale
    return RootSet(roots=roots, nonzero=roots[~small], zero_roots=int(small.sum()))


def char_poly_determinant(A, gains, max_n=4):
    """Coefficients (highest power first) of the cleared characteristic polynomial.

    Expands ``det(z^(r+1) I - sum_l F_l z^(r - r_l))`` symbolically by the
    Leibniz formula.  Intended as an independent cross-check for small
    systems only.
    """
    sys = _loop_system(A, gains)
    n, tau = sys.n, sys.max_delay
    if n > max_n:
        raise ValidationError(f"determinant expansion limited to n <= {max_n}")
    # entries as low-to-high coefficient arrays
    entry = [[np.zeros(tau + 2) for _ in range(n)] for _ in range(n)]
    for i in range(n):
        entry[i][i][tau + 1] += 1.0
    for d, m in zip(sys.delays, sys.matrices):
        for i in range(n):
            for j in range(n):
                entry[i][j][tau - d] -= m[i, j]
    total = np.zeros(n * (tau + 1) + 1)
    for perm in permutations(range(n)):
        sign = _perm_sign(perm)
        prod = np.array([1.0])
        for i, j in enumerate(perm):
            prod = P.polymul(prod, entry[i][j])
        total[:len(prod)] += sign * prod
    if not np.any(total):
        raise NumericalError("characteristic determinant is identically zero")
    return total[::-1]


def _perm_sign(perm):
    sign, seen = 1, list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def kron(A, B):
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def match_multisets(a, b):
    """Largest pairwise distance under the optimal one-to-one matching.

    Returns ``inf`` when the sizes differ.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.size != b.size:
        return float("inf")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def factored_char_poly_check(F_terms, G_terms, H_terms, tol=1e-6, zero_tol=1e-4):
    """Check that a block-triangular delay cascade factors into its diagonal blocks.

    The cascade is ``zeta(t+1) = sum F_l zeta(t-tau_l) + sum G_l xi(t-tau_l)``,
    ``xi(t+1) = sum H_l xi(t-tau_l)``.  Root multisets of the lifted cascade
    and of the two lifted diagonal recursions (padded to the common maximum
    delay) are matched; near-zero roots, which are ill-conditioned under
    Jordan structure, are compared by count only.
    """
    F = DelaySystem.from_terms(F_terms)
    H = DelaySystem.from_terms(H_terms)
    G = {int(d): np.atleast_2d(np.asarray(g, dtype=float)) for d, g in G_terms}
    n, m = F.n, H.n
    delays = sorted(set(F.delays) | set(H.delays) | set(G))
    blocks = []
    for d in delays:
        g = G.get(d, np.zeros((n, m)))
        blocks.append((d, np.block([[F.coefficient(d), g], [np.zeros((m, n)), H.coefficient(d)]])))
    cascade = DelaySystem.from_terms(blocks)
    tau = cascade.max_delay

    full = np.linalg.eigvals(lift(cascade).matrix)
    parts = np.concatenate([
        np.linalg.eigvals(lift(F, tau).matrix),
        np.linalg.eigvals(lift(H, tau).matrix),
    ])
    small_full = np.abs(full) <= zero_tol
    small_parts = np.abs(parts) <= zero_tol
    if small_full.sum() != small_parts.sum():
        dev = float("inf")
    else:
        dev = match_multisets(full[~small_full], parts[~small_parts])
    radius = float(np.max(np.abs(full))) if full.size else 0.0
    return CascadeCheck(
        factorization_holds=dev <= tol,
        max_deviation=dev,
        stable=radius < 1 - EPS_STAB,
        radius=radius,
    )
