"""Scalar Krein system

    p'  = i lam p - conj(a) p*
    p*' = -a p,            p(0) = p*(0) = 1.

Constant stretches are crossed with the closed-form 2x2 propagator;
smooth stretches are integrated adaptively. States carry a common
``log_scale`` so that (p, p*) are stored as e^{-log_scale} times their
true values, and ``energy_integral`` holds 2 Im(lam) int_0^r |p|^2 in the
same (squared) scaling.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .coeffs import CoefficientProfile, Piece

SERIES_CUTOFF = 1e-4
RENORM_LO = 1e-100
RENORM_HI = 1e100
RTOL = 1e-10
ATOL = 1e-14
SMOOTH_CHUNK = 1.0


class PropagationError(ArithmeticError):
    def __init__(self, msg: str, r: float):
        super().__init__(f"{msg} at r = {r!r}")
        self.r = r


@dataclass(frozen=True)
class KreinState:
    r: float
    lam: complex
    p: complex
    p_star: complex
    log_scale: float = 0.0
    energy_integral: float = 0.0

    @classmethod
    def initial(cls, lam: complex, r: float = 0.0, p: complex = 1.0, p_star: complex = 1.0):
        return cls(float(r), complex(lam), complex(p), complex(p_star), 0.0, 0.0)

    @property
    def scale(self) -> float:
        return math.exp(self.log_scale)

    def true_p(self) -> complex:
        return self.p * math.exp(self.log_scale)

    def true_p_star(self) -> complex:
        return self.p_star * math.exp(self.log_scale)

    def true_energy(self) -> float:
        return self.energy_integral * math.exp(2.0 * self.log_scale)

    @property
    def log_abs_p_star(self) -> float:
        return math.log(abs(self.p_star)) + self.log_scale

    @property
    def ratio(self) -> complex:
        """p / p*, independent of the scaling."""
        return self.p / self.p_star


@dataclass(frozen=True)
class TransferMatrix2:
    """Exact propagator; true matrix = e^{log_scale} * [[m00, m01], [m10, m11]]."""
    m00: complex
    m01: complex
    m10: complex
    m11: complex
    log_scale: float = 0.0

    def array(self) -> np.ndarray:
        return np.array([[self.m00, self.m01], [self.m10, self.m11]], dtype=complex)

    def true_array(self) -> np.ndarray:
        return self.array() * math.exp(self.log_scale)

    def det(self) -> complex:
        """Determinant of the true matrix."""
        return (self.m00 * self.m11 - self.m01 * self.m10) * math.exp(2.0 * self.log_scale)

    def apply(self, p: complex, ps: complex) -> tuple:
        return (self.m00 * p + self.m01 * ps, self.m10 * p + self.m11 * ps)

    def __matmul__(self, other: "TransferMatrix2") -> "TransferMatrix2":
        a, b = self, other
        return TransferMatrix2(
            a.m00 * b.m00 + a.m01 * b.m10, a.m00 * b.m01 + a.m01 * b.m11,
            a.m10 * b.m00 + a.m11 * b.m10, a.m10 * b.m01 + a.m11 * b.m11,
            a.log_scale + b.log_scale)


def transfer_from_mass(mass: complex, lam: complex, delta: float) -> TransferMatrix2:
    """Propagator across a stretch of length delta where a is constant, int a = mass."""
    if delta == 0.0:
        return TransferMatrix2(1.0, 0.0, 0.0, 1.0)
    z = 1j * lam * delta
    if mass == 0:
        return TransferMatrix2(cmath.exp(z), 0j, 0j, 1.0 + 0j)
    # generator * delta = z/2 I + N, N = [[z/2, -conj(mass)], [-mass, -z/2]], N^2 = w^2 I
    half = 0.5 * z
    w2 = (mass.real * mass.real + mass.imag * mass.imag) + half * half
    if abs(w2) < SERIES_CUTOFF * SERIES_CUTOFF:
        ch = 1.0 + w2 / 2.0 + w2 * w2 / 24.0 + w2 * w2 * w2 / 720.0
        sh = 1.0 + w2 / 6.0 + w2 * w2 / 120.0 + w2 * w2 * w2 / 5040.0
        grow = 0.0
    else:
        w = cmath.sqrt(w2)
        if w.real < 0:
            w = -w
        e = cmath.exp(-2.0 * w)
        rot = cmath.exp(1j * w.imag)
        ch = 0.5 * rot * (1.0 + e)
        sh = 0.5 * rot * (1.0 - e) / w
        grow = w.real
    pref = cmath.exp(1j * half.imag)  # unit-modulus part of e^{z/2}
    mc = -mass.conjugate()
    return TransferMatrix2(
        pref * (ch + sh * half), pref * sh * mc,
        pref * sh * (-mass), pref * (ch - sh * half),
        grow + half.real)


def constant_transfer(c: complex, lam: complex, delta: float) -> TransferMatrix2:
    """Exact propagator of (p, p*) across length delta with a == c."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return transfer_from_mass(complex(c) * delta, complex(lam), float(delta))


def step_state(state: KreinState, mass: complex, length: float) -> KreinState:
    """Advance across one constant stretch, accumulating energy via the Lagrange identity."""
    T = transfer_from_mass(mass, state.lam, length)
    p, ps = T.apply(state.p, state.p_star)
    shift = T.log_scale
    before = abs(state.p_star) ** 2 - abs(state.p) ** 2
    after = abs(ps) ** 2 - abs(p) ** 2
    if shift == 0.0:
        energy = state.energy_integral + (after - before)
    else:
        f = math.exp(-2.0 * shift)
        energy = state.energy_integral * f + (after - before * f)
    out = KreinState(state.r + length, state.lam, p, ps, state.log_scale + shift, energy)
    return renormalize(out)


def renormalize(state: KreinState) -> KreinState:
    big = max(abs(state.p), abs(state.p_star))
    if not math.isfinite(big):
        raise PropagationError("non-finite state", state.r)
    if RENORM_LO <= big <= RENORM_HI:
        return state
    if big == 0.0:
        raise PropagationError("state vanished", state.r)
    _, k = math.frexp(big)
    return KreinState(state.r, state.lam, math.ldexp(1.0, -k) * state.p,
                      math.ldexp(1.0, -k) * state.p_star,
                      state.log_scale + k * math.log(2.0),
                      math.ldexp(state.energy_integral, -2 * k))


@dataclass(frozen=True)
class Trajectory:
    lam: complex
    states: tuple
    profile: Optional[CoefficientProfile] = None

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def final(self) -> KreinState:
        return self.states[-1]

    @property
    def r(self) -> np.ndarray:
        return np.array([s.r for s in self.states])

    def true_p(self) -> np.ndarray:
        return np.array([s.true_p() for s in self.states])

    def true_p_star(self) -> np.ndarray:
        return np.array([s.true_p_star() for s in self.states])


def _smooth_rhs(profile: CoefficientProfile, lam: complex):
    two_im = 2.0 * lam.imag

    def rhs(r, y):
        a = profile(r)
        p, ps = y[0], y[1]
        return np.array([1j * lam * p - a.conjugate() * ps, -a * p,
                         two_im * (p.real * p.real + p.imag * p.imag)], dtype=complex)
    return rhs


def _integrate_smooth(state: KreinState, profile: CoefficientProfile, r1: float,
                      rtol: float = RTOL, atol: float = ATOL) -> KreinState:
    from scipy.integrate import solve_ivp
    rhs = _smooth_rhs(profile, state.lam)
    r0 = state.r
    while r0 < r1:
        rb = min(r0 + SMOOTH_CHUNK, r1)
        y0 = np.array([state.p, state.p_star, state.energy_integral], dtype=complex)
        sol = solve_ivp(rhs, (r0, rb), y0, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise PropagationError(f"adaptive integration failed: {sol.message}", r0)
        y = sol.y[:, -1]
        state = renormalize(KreinState(rb, state.lam, complex(y[0]), complex(y[1]),
                                       state.log_scale, float(y[2].real)))
        r0 = rb
    return state


def advance(state: KreinState, profile: CoefficientProfile, r1: float,
            rtol: float = RTOL, atol: float = ATOL) -> KreinState:
    """Advance a state from state.r to r1 (>= state.r)."""
    for pc in profile.pieces(state.r, r1):
        if pc.kind == "const":
            state = step_state(state, pc.mass, pc.end - pc.start)
            # pin r to the piece boundary so positions do not drift
            state = replace(state, r=pc.end)
        else:
            state = _integrate_smooth(state, profile, pc.end, rtol, atol)
    return state


def propagate(profile: CoefficientProfile, lam: complex, r_end: float,
              checkpoints: Optional[Iterable[float]] = None,
              initial: Optional[KreinState] = None,
              rtol: float = RTOL, atol: float = ATOL) -> Trajectory:
    """Propagate from r = 0 (or ``initial``) to r_end, recording states at checkpoints.

    The returned trajectory holds the initial state, the checkpoint states and
    the final state, with strictly increasing r.
    """
    state = initial if initial is not None else KreinState.initial(lam)
    if r_end < state.r:
        raise ValueError("r_end before the initial position")
    cps = sorted({float(c) for c in (() if checkpoints is None else checkpoints) if state.r < c < r_end})
    if checkpoints is not None and any(c < 0 or c > r_end for c in checkpoints):
        raise ValueError("checkpoints must lie in [0, r_end]")
    states = [state]
    for c in cps + [float(r_end)]:
        if c <= state.r:
            continue
        state = advance(state, profile, c, rtol, atol)
        states.append(state)
    return Trajectory(complex(lam), tuple(states), profile)


def lagrange_residual(traj: Trajectory) -> float:
    """max |(|p*|^2 - |p|^2) - energy| / (1 + |p*|^2) over checkpoints, scale-free."""
    if traj.lam.imag < 0:
        raise ValueError("residual is defined for Im lam >= 0")
    worst = 0.0
    for s in traj.states:
        # compare in the state's own scaling; the common factor e^{2 log_scale}
        # cancels against the same factor in 1 + |p*|^2 when |p*| dominates.
        lhs = abs(s.p_star) ** 2 - abs(s.p) ** 2
        denom = math.exp(-2.0 * s.log_scale) + abs(s.p_star) ** 2
        worst = max(worst, abs(lhs - s.energy_integral) / denom)
    return worst


def q_propagate(profile: CoefficientProfile, c: complex, c_star: complex, r: float) -> tuple:
    """Solution of q' = -a q*, q*' = -a q (real a) via the sum/difference exponentials."""
    if not profile.is_real(r):
        raise ValueError("q_propagate needs a real-valued profile")
    A = profile.integral(0.0, r).real
    diff = (c - c_star) * math.exp(A)
    tot = (c + c_star) * math.exp(-A)
    return 0.5 * (tot + diff), 0.5 * (tot - diff)


def rk_oracle(profile: CoefficientProfile, lam: complex, r_end: float, step: float,
              initial: Optional[KreinState] = None) -> KreinState:
    """Classical fixed-step RK4 with the energy integral as a third component.

    Steps are fitted inside each piece of the profile so jumps of a fall on
    step boundaries. No renormalization: short ranges only.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    lam = complex(lam)
    s = initial if initial is not None else KreinState.initial(lam)
    y = [s.p, s.p_star, complex(s.energy_integral)]
    two_im = 2.0 * lam.imag
    il = 1j * lam

    def f(r, y, a):
        if a is None:
            a = profile(r)
        p, ps = y[0], y[1]
        return (il * p - a.conjugate() * ps, -a * p, two_im * (p.real * p.real + p.imag * p.imag))

    for pc in profile.pieces(s.r, r_end):
        n = max(1, math.ceil((pc.end - pc.start) / step - 1e-9))
        h = (pc.end - pc.start) / n
        aconst = pc.mass / (pc.end - pc.start) if pc.kind == "const" else None
        for k in range(n):
            r = pc.start + k * h
            k1 = f(r, y, aconst)
            y2 = [y[i] + 0.5 * h * k1[i] for i in range(3)]
            k2 = f(r + 0.5 * h, y2, aconst)
            y3 = [y[i] + 0.5 * h * k2[i] for i in range(3)]
            k3 = f(r + 0.5 * h, y3, aconst)
            y4 = [y[i] + h * k3[i] for i in range(3)]
            k4 = f(r + h, y4, aconst)
            y = [y[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(3)]
        if not all(cmath.isfinite(v) for v in y):
            raise PropagationError("oracle overflow", pc.end)
    return KreinState(float(r_end), lam, y[0], y[1], s.log_scale, y[2].real)


def _transfer_grid(mass: complex, lam: np.ndarray, delta: float):
    """Vectorized transfer_from_mass over an array of lam (same mass, delta)."""
    z = 1j * lam * delta
    if mass == 0:
        one = np.ones_like(z)
        return np.exp(z), np.zeros_like(z), np.zeros_like(z), one, np.zeros(lam.shape)
    half = 0.5 * z
    w2 = abs(mass) ** 2 + half * half
    w = np.sqrt(w2)
    w = np.where(w.real < 0, -w, w)
    small = np.abs(w2) < SERIES_CUTOFF * SERIES_CUTOFF
    wsafe = np.where(small, 1.0, w)
    e = np.exp(-2.0 * wsafe)
    rot = np.exp(1j * wsafe.imag)
    ch = np.where(small, 1.0 + w2 / 2.0 + w2 ** 2 / 24.0 + w2 ** 3 / 720.0, 0.5 * rot * (1.0 + e))
    sh = np.where(small, 1.0 + w2 / 6.0 + w2 ** 2 / 120.0 + w2 ** 3 / 5040.0,
                  0.5 * rot * (1.0 - e) / wsafe)
    grow = np.where(small, 0.0, wsafe.real)
    pref = np.exp(1j * half.imag)
    return (pref * (ch + sh * half), pref * sh * (-np.conj(mass)), pref * sh * (-mass),
            pref * (ch - sh * half), grow + half.real)


@dataclass
class GridState:
    """(p, p*) over a lambda grid at position r, true value = e^{log_scale} * stored."""
    r: float
    lam: np.ndarray
    p: np.ndarray
    p_star: np.ndarray
    log_scale: np.ndarray

    def log_abs_p_star(self) -> np.ndarray:
        return np.log(np.abs(self.p_star)) + self.log_scale


def advance_grid(st: GridState, profile: CoefficientProfile, r1: float) -> GridState:
    """Advance a grid state to r1 across piecewise-constant stretches."""
    p, ps, L = st.p, st.p_star, st.log_scale
    lams = st.lam
    for pc in profile.pieces(st.r, r1):
        if pc.kind != "const":
            raise ValueError("advance_grid needs a piecewise-constant profile")
        m00, m01, m10, m11, g = _transfer_grid(pc.mass, lams, pc.end - pc.start)
        p, ps = m00 * p + m01 * ps, m10 * p + m11 * ps
        L = L + g
        big = np.maximum(np.abs(p), np.abs(ps))
        if not np.all(np.isfinite(big)):
            raise PropagationError("non-finite grid state", pc.end)
        bad = (big > RENORM_HI) | (big < RENORM_LO)
        if np.any(bad):
            _, k = np.frexp(np.where(bad, big, 1.0))
            k = np.where(bad, k, 0)
            p = np.ldexp(p.real, -k) + 1j * np.ldexp(p.imag, -k)
            ps = np.ldexp(ps.real, -k) + 1j * np.ldexp(ps.imag, -k)
            L = L + k * math.log(2.0)
    return GridState(float(r1), lams, p, ps, L)


def propagate_grid(profile: CoefficientProfile, lams, r_end: float,
                   checkpoints: Optional[Iterable[float]] = None) -> list:
    """Exact propagation of many lambda values at once (piecewise-constant profiles).

    Returns the GridState at each checkpoint and at r_end (in increasing r).
    Smooth profiles fall back to per-lambda ``propagate``.
    """
    lams = np.asarray(lams, dtype=complex)
    stops = sorted({float(c) for c in (() if checkpoints is None else checkpoints) if 0.0 < c < r_end} | {float(r_end)})
    if not profile.is_piecewise_constant:
        trajs = [propagate(profile, lam, r_end, stops) for lam in lams]
        out = []
        for k, r in enumerate(stops):
            st = [t.states[k + 1] for t in trajs]
            out.append(GridState(r, lams, np.array([s.p for s in st]),
                                 np.array([s.p_star for s in st]),
                                 np.array([s.log_scale for s in st])))
        return out
    st = GridState(0.0, lams, np.ones_like(lams), np.ones_like(lams), np.zeros(lams.shape))
    out = []
    for stop in stops:
        st = advance_grid(st, profile, stop)
        out.append(st)
    return out


def rk_transfer_batch(c, lam, delta: float, step: float) -> np.ndarray:
    """RK4 transfer matrices of the constant-coefficient system for arrays of (c, lam).

    Returns shape (k, 2, 2); column j evolves the unit vector e_j. Plain
    fixed-step integration, independent of the closed form.
    """
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    k = c.size
    M = np.zeros((k, 2, 2), dtype=complex)
    M[:, 0, 0] = 1j * lam
    M[:, 0, 1] = -np.conj(c)
    M[:, 1, 0] = -c
    Y = np.broadcast_to(np.eye(2, dtype=complex), (k, 2, 2)).copy()
    if delta == 0:
        return Y
    n = max(1, math.ceil(delta / step - 1e-9))
    h = delta / n
    for _ in range(n):
        k1 = M @ Y
        k2 = M @ (Y + 0.5 * h * k1)
        k3 = M @ (Y + 0.5 * h * k2)
        k4 = M @ (Y + h * k3)
        Y = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Y
