"""Follower plant with delayed inputs.

    x(t+1) = A x(t) + sum_l B_l u(t - r_l) + E_x x0(t) + E_w w(t)
    y_m(t) = C_m x(t) + sum_l D_m,l u(t - r_l) + F_mx x0(t) + F_mw w(t)
    e(t)   = C x(t) + sum_l D_l u(t - r_l) + F_x x0(t) + F_w w(t)
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError

__all__ = ["AgentPlant"]


def _mat(value, shape, name):
    if value is None:
        return np.zeros(shape)
    m = np.array(value, dtype=float)
    if m.size == 0 and 0 in shape:
        m = m.reshape(shape)
    m = np.atleast_2d(m)
    if m.shape != shape:
        raise ValidationError(f"{name} has shape {m.shape}, expected {shape}")
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class AgentPlant:
    """Matrices of one follower.

    ``B``, ``D`` and ``D_m`` are sequences with one entry per delay in
    ``delays``.  Omitted disturbance blocks default to zero, omitted
    feedthrough blocks default to zero, and omitted measured-output blocks
    default to the regulated-output ones.

    Parameters
    ----------
    A : (n, n) array_like
    B : sequence of (n, m) array_like
    E_x : (n, q) array_like
    C : (p, n) array_like
    F_x : (p, q) array_like
    delays : sequence of int
        ``0 = r_0 < r_1 < ... < r_h``.
    s : int
        Disturbance dimension; inferred from ``E_w`` when given.
    """

    A: np.ndarray
    B: tuple
    E_x: np.ndarray
    C: np.ndarray
    F_x: np.ndarray
    delays: tuple = (0,)
    E_w: np.ndarray = None
    F_w: np.ndarray = None
    D: tuple = None
    C_m: np.ndarray = None
    D_m: tuple = None
    F_mx: np.ndarray = None
    F_mw: np.ndarray = None
    s: int = None

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        delays = tuple(int(d) for d in self.delays)
        if not delays or delays[0] != 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValidationError(f"delays must start at 0 and strictly increase: {delays}")
        set_("delays", delays)

        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        set_("A", _mat(A, (n, n), "A"))

        B = self.B
        if isinstance(B, np.ndarray) and B.ndim == 2:
            B = (B,)
        if len(B) != len(delays):
            raise ValidationError(f"{len(B)} input matrices for {len(delays)} delays")
        m = np.atleast_2d(np.asarray(B[0], dtype=float)).shape[1]
        set_("B", tuple(_mat(b, (n, m), f"B[{k}]") for k, b in enumerate(B)))

        E_x = np.atleast_2d(np.asarray(self.E_x, dtype=float))
        q = E_x.shape[1]
        set_("E_x", _mat(E_x, (n, q), "E_x"))

        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        p = C.shape[0]
        set_("C", _mat(C, (p, n), "C"))
        set_("F_x", _mat(self.F_x, (p, q), "F_x"))

        if self.s is not None:
            s = int(self.s)
        elif self.E_w is not None:
            s = np.atleast_2d(np.asarray(self.E_w, dtype=float)).shape[1]
        else:
            s = 0
        set_("s", s)
        set_("E_w", _mat(self.E_w, (n, s), "E_w"))
        set_("F_w", _mat(self.F_w, (p, s), "F_w"))

        D = self.D if self.D is not None else [None] * len(delays)
        if len(D) != len(delays):
            raise ValidationError("D needs one matrix per delay")
        set_("D", tuple(_mat(d, (p, m), f"D[{k}]") for k, d in enumerate(D)))

        if self.C_m is None:
            set_("C_m", self.C)
            set_("D_m", self.D if self.D_m is None else self.D_m)
            set_("F_mx", self.F_x if self.F_mx is None else self.F_mx)
            set_("F_mw", self.F_w if self.F_mw is None else self.F_mw)
        C_m = np.atleast_2d(np.asarray(self.C_m, dtype=float))
        pm = C_m.shape[0]
        set_("C_m", _mat(C_m, (pm, n), "C_m"))
        D_m = self.D_m if self.D_m is not None else [None] * len(delays)
        if len(D_m) != len(delays):
            raise ValidationError("D_m needs one matrix per delay")
        set_("D_m", tuple(_mat(d, (pm, m), f"D_m[{k}]") for k, d in enumerate(D_m)))
        set_("F_mx", _mat(self.F_mx, (pm, q), "F_mx"))
        set_("F_mw", _mat(self.F_mw, (pm, s), "F_mw"))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B[0].shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def p_m(self):
        return self.C_m.shape[0]

    @property
    def q(self):
        return self.E_x.shape[1]

    @property
    def max_delay(self):
        return self.delays[-1]

    @property
    def delay_free(self):
        return self.delays == (0,)

    @property
    def E(self):
        return np.hstack([self.E_x, self.E_w])

    @property
    def F(self):
        return np.hstack([self.F_x, self.F_w])

    def composite(self, Q):
        """``[[A, E_w], [0, Q]]`` and the measured map ``[C_m, F_mw]``."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float)).reshape(self.s, self.s)
        M = np.block([[self.A, self.E_w], [np.zeros((self.s, self.n)), Q]])
        return M, np.hstack([self.C_m, self.F_mw])

    def to_dict(self):
        lst = lambda a: np.asarray(a).tolist()  # noqa: E731
        return {
            "A": lst(self.A),
            "B": [lst(b) for b in self.B],
            "E_x": lst(self.E_x),
            "E_w": lst(self.E_w),
            "C": lst(self.C),
            "D": [lst(d) for d in self.D],
            "F_x": lst(self.F_x),
            "F_w": lst(self.F_w),
            "C_m": lst(self.C_m),
            "D_m": [lst(d) for d in self.D_m],
            "F_mx": lst(self.F_mx),
            "F_mw": lst(self.F_mw),
            "s": self.s,
        }

    def __eq__(self, other):
        if not isinstance(other, AgentPlant):
            return NotImplemented
        if self.delays != other.delays or self.s != other.s:
            return False
        mine, theirs = self.to_dict(), other.to_dict()
        return mine == theirs
