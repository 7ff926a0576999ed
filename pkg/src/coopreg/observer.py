"""Gain analysis for the discrete distributed observer.

Two observer families are compared:

* proposed:  ``eta_i+ = S0 eta_i + mu S0 sum_j a_ij (eta_j - eta_i)``,
  error matrix ``(I - mu H) kron S0``;
* naive:     ``eta_i+ = S0 eta_i + mu sum_j a_ij (eta_j - eta_i)``,
  error matrix ``I kron S0 - mu H kron I``.

For the proposed observer the eigenvalues are ``(1 - mu nu) lambda`` for
``nu`` in eig(H) and ``lambda`` in eig(S0), so the Schur condition
reduces to one quadratic inequality in ``mu`` per eigenvalue of ``H``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import AssumptionViolation, ValidationError
from .spectral import EPS_STAB, is_schur, spectral_radius
from .topology import HMatrix

__all__ = [
    "EigenConstraint",
    "MuInterval",
    "NaiveObserverVerdict",
    "leader_spectral_radius",
    "observer_matrix",
    "naive_observer_matrix",
    "mu_interval",
    "mu_interval_undirected",
    "marginal_leader_guarantee",
    "naive_observer_feasibility",
    "pick_mu",
]


@dataclass(frozen=True)
class EigenConstraint:
    """Admissible ``mu`` range contributed by one eigenvalue ``a + jb`` of H."""

    a: float
    b: float
    delta: float
    lower: float
    upper: float

    @property
    def feasible(self):
        return self.lower < self.upper


@dataclass(frozen=True)
class MuInterval:
    feasible: bool
    lower: float
    upper: float
    leader_radius: float
    diagnostics: tuple = field(default=(), repr=False)

    @property
    def bounded(self):
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def classify(self, mu, eps=EPS_STAB):
        """``"inside"``, ``"marginal"`` (within eps of an endpoint) or ``"outside"``."""
        if not self.feasible:
            return "outside"
        if self.lower + eps < mu < self.upper - eps:
            return "inside"
        if abs(mu - self.lower) <= eps or abs(mu - self.upper) <= eps:
            return "marginal"
        return "outside"

    def __contains__(self, mu):
        return self.feasible and self.lower < mu < self.upper

    def as_dict(self):
        return {
            "feasible": self.feasible,
            "lower": self.lower,
            "upper": self.upper,
            "leader_radius": self.leader_radius,
            "eigenvalues": [
                {"a": c.a, "b": c.b, "delta": c.delta, "lower": c.lower, "upper": c.upper}
                for c in self.diagnostics
            ],
        }


@dataclass(frozen=True)
class NaiveObserverVerdict:
    feasible: bool
    lower: float
    upper: float
    trace: tuple = field(default=(), repr=False)


def _h_spectrum(H):
    if isinstance(H, HMatrix):
        return np.asarray(H.spectrum, dtype=complex), H.entries
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return np.linalg.eigvals(H).astype(complex), H


def leader_spectral_radius(S0, tol=EPS_STAB):
    """Largest eigenvalue modulus of the leader and whether it is <= 1."""
    rho = spectral_radius(S0)
    return rho, rho <= 1 + tol


def observer_matrix(S0, H, mu):
    """``(I - mu H) kron S0``, the proposed observer's error matrix."""
    _, h = _h_spectrum(H)
    return np.kron(np.eye(h.shape[0]) - mu * h, np.atleast_2d(S0))


def naive_observer_matrix(S0, H, mu):
    _, h = _h_spectrum(H)
    S0 = np.atleast_2d(S0)
    return np.kron(np.eye(h.shape[0]), S0) - mu * np.kron(h, np.eye(S0.shape[0]))


def _dedup_conjugates(spectrum, tol=1e-10):
    reps = []
    for nu in spectrum:
        key = complex(nu.real, abs(nu.imag))
        if not any(abs(key - r) <= tol * max(1.0, abs(r)) for r in reps):
            reps.append(key)
    return reps


def _constraint(nu, lam):
    """Interval where ``(a^2+b^2) mu^2 - 2 a mu + 1 - 1/lam^2 < 0``."""
    a, b = float(nu.real), float(abs(nu.imag))
    mod2 = a * a + b * b
    if mod2 == 0.0:
        # constant 1 - 1/lam^2; negative iff lam < 1
        ok = lam < 1
        return EigenConstraint(a, b, math.nan, -math.inf if ok else 0.0, math.inf if ok else 0.0)
    delta = mod2 / lam**2 - b * b
    if delta <= 0:
        return EigenConstraint(a, b, delta, a / mod2, a / mod2)
    root = math.sqrt(delta)
    return EigenConstraint(a, b, delta, (a - root) / mod2, (a + root) / mod2)


def mu_interval(S0, H):
    """Open interval of ``mu`` making ``(I - mu H) kron S0`` Schur.

    Parameters
    ----------
    S0 : (q, q) array_like
        Leader matrix.
    H : HMatrix or (N, N) array_like

    Returns
    -------
    MuInterval
        ``lower = max_l (a_l - sqrt(Delta_l)) / (a_l^2 + b_l^2)`` and
        ``upper = min_l (a_l + sqrt(Delta_l)) / (a_l^2 + b_l^2)`` with
        ``Delta_l = (a_l^2 + b_l^2) / |lambda_q|^2 - b_l^2``.  A nilpotent
        leader (``|lambda_q| = 0``) gives the whole real line.

    Notes
    -----
    The condition is exact rather than merely sufficient: the modulus
    ``|1 - mu nu| |lambda|`` is largest at ``|lambda| = |lambda_q|``.
    """
    spectrum, _ = _h_spectrum(H)
    lam, _ = leader_spectral_radius(S0)
    if lam == 0.0:
        return MuInterval(True, -math.inf, math.inf, 0.0, ())

    reps = _dedup_conjugates(spectrum)
    diagnostics = tuple(_constraint(nu, lam) for nu in reps)
    lower = max(c.lower for c in diagnostics)
    upper = min(c.upper for c in diagnostics)
    feasible = all(c.feasible for c in diagnostics) and lower < upper
    return MuInterval(feasible, lower, upper, lam, diagnostics)


def mu_interval_undirected(S0, H):
    """Closed-form interval for a symmetric positive definite ``H``.

    ``( max_l (|lambda_q| - 1) / (a_l |lambda_q|),
        min_l (|lambda_q| + 1) / (a_l |lambda_q|) )``
    """
    _, h = _h_spectrum(H)
    if not np.allclose(h, h.T, rtol=0, atol=1e-12):
        raise ValidationError("H is not symmetric")
    a = np.linalg.eigvalsh(h)
    if np.any(a <= 0):
        raise ValidationError("H is not positive definite")
    lam, _ = leader_spectral_radius(S0)
    if lam == 0.0:
        return MuInterval(True, -math.inf, math.inf, 0.0, ())
    lows = (lam - 1) / (a * lam)
    ups = (lam + 1) / (a * lam)
    diagnostics = tuple(
        EigenConstraint(float(al), 0.0, float(al**2 / lam**2), float(lo), float(up))
        for al, lo, up in zip(a, lows, ups)
    )
    lower, upper = float(lows.max()), float(ups.min())
    return MuInterval(lower < upper, lower, upper, lam, diagnostics)


def marginal_leader_guarantee(S0, H, connected=True):
    """A marginally stable leader plus a connected graph always admits a gain.

    Raises
    ------
    AssumptionViolation
        If the leader has an eigenvalue outside the closed unit disc or the
        graph is not connected; the guarantee does not apply then.
    """
    lam, ok = leader_spectral_radius(S0)
    if not ok:
        raise AssumptionViolation("leader_marginal", f"|lambda_q| = {lam:.6g} > 1; guarantee not applicable")
    if not connected:
        raise AssumptionViolation("connectivity", "graph not connected; guarantee not applicable")
    interval = mu_interval(S0, H)
    assert interval.feasible, "marginal leader with connected graph must admit a gain"
    return True


def _naive_pair_interval(lam, nu):
    """Interval where ``|lam - mu nu| < 1``."""
    mod2 = abs(nu) ** 2
    c = abs(lam) ** 2 - 1.0
    re = lam.real * nu.real + lam.imag * nu.imag
    if mod2 == 0.0:
        return (-math.inf, math.inf) if c < 0 else (0.0, 0.0)
    disc = re * re - mod2 * c
    if disc <= 0:
        return (re / mod2, re / mod2)
    root = math.sqrt(disc)
    return ((re - root) / mod2, (re + root) / mod2)


def naive_observer_feasibility(S0, H):
    """Exact feasibility of the naive observer gain.

    Each eigenvalue pair ``(lambda, nu)`` contributes the open interval where
    ``|nu|^2 mu^2 - 2 Re(lambda conj(nu)) mu + |lambda|^2 - 1 < 0``; iterating
    over the full spectra covers both conjugate sign combinations.
    """
    spectrum, _ = _h_spectrum(H)
    lams = np.linalg.eigvals(np.atleast_2d(S0)).astype(complex)
    lower, upper = -math.inf, math.inf
    trace = []
    for lam in lams:
        for nu in spectrum:
            lo, up = _naive_pair_interval(complex(lam), complex(nu))
            trace.append((complex(lam), complex(nu), lo, up))
            lower, upper = max(lower, lo), min(upper, up)
    return NaiveObserverVerdict(lower < upper, lower, upper, tuple(trace))


def pick_mu(interval, S0, H, override=None):
    """Select an observer gain from a feasible interval.

    Defaults to the midpoint; an unbounded interval falls back to the
    midpoint of its intersection with ``(0, 2)``.  The choice is always
    re-verified against the observer matrix.
    """
    if not interval.feasible:
        raise AssumptionViolation("observer_gain", "mu interval is empty")
    if override is not None:
        mu = float(override)
    elif interval.bounded:
        mu = 0.5 * (interval.lower + interval.upper)
    else:
        lo = max(interval.lower, 0.0)
        up = min(interval.upper, 2.0)
        mu = 0.5 * (lo + up) if lo < up else (lo + 1.0 if math.isfinite(lo) else up - 1.0)
    if not is_schur(observer_matrix(S0, H, mu)):
        raise AssumptionViolation(
            "observer_gain",
            f"mu = {mu} does not make the observer Schur (interval {interval.lower}, {interval.upper})",
        )
    return mu
