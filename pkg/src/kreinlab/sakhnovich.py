"""Matrix (Sakhnovich) canonical system

    P1' = i lam D P1 + A1 P1 + A2^* P2
    P2' = A2 P1,                      P1(0) = P2(0) = I_m,

with D positive diagonal and A1 skew-Hermitian. Matrix norms are Frobenius
throughout. Two spectral parameters (lam0, lam) are always carried in
lockstep so that the mixed integral int P1^*(s, lam0) D P1(s, lam) ds is
accumulated on one shared step sequence. On constant stretches the
propagator and the Gram-type integrals come from block matrix exponentials
(Van Loan), so the Lagrange identities are checked, not assumed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import expm

from .coeffs import CoefficientProfile
from .krein import ATOL, RENORM_HI, RENORM_LO, RTOL, PropagationError

SKEW_TOL = 1e-12
MAX_STEP_NORM = 1.0


def fro(M) -> float:
    return float(np.linalg.norm(M, "fro"))


@dataclass(frozen=True)
class MatrixSegment:
    start: float
    length: float
    A1: np.ndarray
    A2: np.ndarray

    @property
    def end(self) -> float:
        return self.start + self.length


@dataclass(frozen=True)
class MatrixPiece:
    start: float
    end: float
    kind: str                      # "const" or "smooth"
    A1: Optional[np.ndarray] = None
    A2: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SakhnovichSystem:
    d: np.ndarray                                  # diagonal of D
    segments: tuple = ()
    a1: Optional[Callable[[float], np.ndarray]] = None
    a2: Optional[Callable[[float], np.ndarray]] = None
    smooth_support: tuple = (0.0, math.inf)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).ravel()
        if d.size == 0 or np.any(~(d > 0)):
            raise ValueError("D must be diagonal with strictly positive entries")
        object.__setattr__(self, "d", d)
        m = d.size
        segs = tuple(MatrixSegment(float(s.start), float(s.length),
                                   np.asarray(s.A1, dtype=complex).reshape(m, m),
                                   np.asarray(s.A2, dtype=complex).reshape(m, m))
                     for s in self.segments)
        for s in segs:
            if not s.length > 0:
                raise ValueError("segment length must be positive")
            _check_skew(s.A1, s.start)
        for left, right in zip(segs, segs[1:]):
            if right.start < left.end:
                raise ValueError("matrix segments overlap or are unsorted")
        object.__setattr__(self, "segments", segs)
        if self.a1 is not None:
            lo, hi = self.smooth_support
            hi = min(hi, lo + 100.0)
            for r in np.linspace(lo, hi, 17):
                _check_skew(np.asarray(self.a1(r), dtype=complex), r)

    @property
    def m(self) -> int:
        return self.d.size

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d).astype(complex)

    @property
    def has_smooth(self) -> bool:
        return self.a1 is not None or self.a2 is not None

    def _in_smooth(self, r: float) -> bool:
        lo, hi = self.smooth_support
        return self.has_smooth and lo <= r <= hi

    def segment_at(self, r: float) -> Optional[MatrixSegment]:
        for s in self.segments:
            if s.start <= r < s.end:
                return s
        return None

    def coefficients(self, r: float) -> tuple:
        m = self.m
        A1 = np.zeros((m, m), dtype=complex)
        A2 = np.zeros((m, m), dtype=complex)
        seg = self.segment_at(r)
        if seg is not None:
            A1 = A1 + seg.A1
            A2 = A2 + seg.A2
        if self._in_smooth(r):
            if self.a1 is not None:
                A1 = A1 + np.asarray(self.a1(r), dtype=complex)
            if self.a2 is not None:
                A2 = A2 + np.asarray(self.a2(r), dtype=complex)
        return A1, A2

    def A2(self, r: float) -> np.ndarray:
        return self.coefficients(r)[1]

    def pieces(self, r0: float, r1: float):
        cuts = {r0, r1}
        for s in self.segments:
            for x in (s.start, s.end):
                if r0 < x < r1:
                    cuts.add(x)
        if self.has_smooth:
            for x in self.smooth_support:
                if r0 < x < r1:
                    cuts.add(x)
        cuts = sorted(cuts)
        zero = np.zeros((self.m, self.m), dtype=complex)
        for a, b in zip(cuts, cuts[1:]):
            mid = 0.5 * (a + b)
            if self._in_smooth(mid):
                yield MatrixPiece(a, b, "smooth")
                continue
            seg = self.segment_at(mid)
            if seg is None:
                yield MatrixPiece(a, b, "const", zero, zero)
            else:
                yield MatrixPiece(a, b, "const", seg.A1, seg.A2)

    def a2_tail_l2(self, r: float) -> float:
        """int_r^inf ||A2||^2 (exact on segments, quadrature on the smooth part)."""
        total = sum(fro(s.A2) ** 2 * (s.end - max(s.start, r)) for s in self.segments if s.end > r)
        if self.a2 is not None:
            lo, hi = self.smooth_support
            a = max(lo, r)
            if hi > a:
                total += quad(lambda x: fro(self.a2(x)) ** 2, a, hi, limit=400)[0]
        return total

    @classmethod
    def from_krein(cls, profile: CoefficientProfile) -> "SakhnovichSystem":
        """m = 1, D = 1, A1 = 0, A2 = -a."""
        segs = tuple(MatrixSegment(s.start, s.length, np.zeros((1, 1)), np.array([[-s.value]]))
                     for s in profile.segments)
        a2 = None
        if profile.smooth_part is not None:
            f = profile.smooth_part
            a2 = (lambda r: np.array([[-complex(f(r))]]))
        return cls(np.ones(1), segs, None, a2, profile.smooth_support)

    def scaled_a2(self, factor: float) -> "SakhnovichSystem":
        segs = tuple(MatrixSegment(s.start, s.length, s.A1, factor * s.A2) for s in self.segments)
        a2 = None
        if self.a2 is not None:
            f = self.a2
            a2 = (lambda r: factor * np.asarray(f(r)))
        return SakhnovichSystem(self.d, segs, self.a1, a2, self.smooth_support)


def _check_skew(A1: np.ndarray, r: float) -> None:
    if np.max(np.abs(A1 + A1.conj().T), initial=0.0) > SKEW_TOL:
        raise ValueError(f"A1 is not skew-Hermitian at r = {r}")


def random_system(rng: np.random.Generator, m: int = 2, n_segments: int = 10,
                  max_len: float = 0.5, scale: float = 1.0) -> SakhnovichSystem:
    """Seeded random piecewise-constant system (skew-Hermitian A1, general A2)."""
    d = rng.uniform(0.5, 2.0, m)
    segs = []
    r = 0.0
    for _ in range(n_segments):
        length = float(rng.uniform(0.05, max_len))
        B = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        A1 = 0.5 * scale * (B - B.conj().T)
        A2 = scale * (rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))) / math.sqrt(2 * m)
        segs.append(MatrixSegment(r, length, A1, A2))
        r += length
    return SakhnovichSystem(d, tuple(segs))


# ---------------------------------------------------------------------------
# states and trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairState:
    """Both spectral parameters at one r; true X = e^{L} * stored X."""
    r: float
    lam0: complex
    lam: complex
    X0: np.ndarray          # [P1; P2] at lam0, shape (2m, m)
    X: np.ndarray           # [P1; P2] at lam
    cross: np.ndarray       # int P1^*(lam0) D P1(lam), true = e^{L0 + L} * stored
    L0: float = 0.0
    L: float = 0.0

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def P1(self) -> np.ndarray:
        return self.X[: self.m] * math.exp(self.L)

    def P2(self) -> np.ndarray:
        return self.X[self.m:] * math.exp(self.L)

    def P1_0(self) -> np.ndarray:
        return self.X0[: self.m] * math.exp(self.L0)

    def P2_0(self) -> np.ndarray:
        return self.X0[self.m:] * math.exp(self.L0)

    def cross_true(self) -> np.ndarray:
        return self.cross * math.exp(self.L0 + self.L)


@dataclass(frozen=True)
class MatrixState:
    r: float
    lam: complex
    P1: np.ndarray
    P2: np.ndarray
    gram: np.ndarray
    log_scale: float = 0.0

    def true_P1(self):
        return self.P1 * math.exp(self.log_scale)

    def true_P2(self):
        return self.P2 * math.exp(self.log_scale)

    def true_gram(self):
        return self.gram * math.exp(2.0 * self.log_scale)


@dataclass(frozen=True)
class PairTrajectory:
    system: SakhnovichSystem
    states: tuple

    @property
    def final(self) -> PairState:
        return self.states[-1]

    @property
    def r(self) -> np.ndarray:
        return np.array([s.r for s in self.states])


@dataclass(frozen=True)
class MatrixTrajectory:
    system: SakhnovichSystem
    lam: complex
    states: tuple

    @property
    def final(self) -> MatrixState:
        return self.states[-1]

    @property
    def r(self) -> np.ndarray:
        return np.array([s.r for s in self.states])


def _generator(sys: SakhnovichSystem, lam: complex, A1, A2) -> np.ndarray:
    m = sys.m
    G = np.zeros((2 * m, 2 * m), dtype=complex)
    G[:m, :m] = 1j * lam * np.diag(sys.d) + A1
    G[:m, m:] = A2.conj().T
    G[m:, :m] = A2
    return G


def _weight(sys: SakhnovichSystem) -> np.ndarray:
    m = sys.m
    F = np.zeros((2 * m, 2 * m), dtype=complex)
    F[:m, :m] = np.diag(sys.d)
    return F


def _renorm(X: np.ndarray) -> int:
    n = fro(X)
    if not math.isfinite(n):
        return None
    if RENORM_LO <= n <= RENORM_HI:
        return 0
    return math.frexp(n)[1]


def _const_step(st: PairState, sys: SakhnovichSystem, piece: MatrixPiece, same: bool) -> PairState:
    length = piece.end - piece.start
    G = _generator(sys, st.lam, piece.A1, piece.A2)
    G0 = G if same else _generator(sys, st.lam0, piece.A1, piece.A2)
    F = _weight(sys)
    n2 = G.shape[0]
    nsub = max(1, math.ceil(max(np.linalg.norm(G, 2), np.linalg.norm(G0, 2)) * length / MAX_STEP_NORM))
    h = length / nsub
    B = np.zeros((2 * n2, 2 * n2), dtype=complex)
    B[:n2, :n2] = -G0.conj().T
    B[:n2, n2:] = F
    B[n2:, n2:] = G
    E = expm(B * h)
    E11, K, E22 = E[:n2, :n2], E[:n2, n2:], E[n2:, n2:]
    # int_0^h e^{G0^* s} F e^{G s} ds = e^{G0^* h} K
    E0 = E22 if same else expm(G0 * h)
    W = E0.conj().T @ K
    X0, X, cross = st.X0, st.X, st.cross
    for _ in range(nsub):
        cross = cross + X0.conj().T @ W @ X
        X = E22 @ X
        X0 = X if same else E0 @ X0
    return _finish(PairState(piece.end, st.lam0, st.lam, X0, X, cross, st.L0, st.L), same)


def _finish(st: PairState, same: bool) -> PairState:
    X, X0, cross, L, L0 = st.X, st.X0, st.cross, st.L, st.L0
    k = _renorm(X)
    if k is None:
        raise PropagationError("non-finite matrix state", st.r)
    if k:
        X = np.ldexp(X.real, -k) + 1j * np.ldexp(X.imag, -k)
        cross = cross * math.ldexp(1.0, -k)
        L += k * math.log(2.0)
    if same:
        # cross is a Gram matrix in the squared scaling of X
        if k:
            cross = cross * math.ldexp(1.0, -k)
        X0, L0 = X, L
    else:
        k0 = _renorm(X0)
        if k0 is None:
            raise PropagationError("non-finite matrix state", st.r)
        if k0:
            X0 = np.ldexp(X0.real, -k0) + 1j * np.ldexp(X0.imag, -k0)
            cross = cross * math.ldexp(1.0, -k0)
            L0 += k0 * math.log(2.0)
    return PairState(st.r, st.lam0, st.lam, X0, X, cross, L0, L)


def _smooth_step(st: PairState, sys: SakhnovichSystem, r1: float, same: bool,
                 rtol: float, atol: float) -> PairState:
    m = sys.m
    n2 = 2 * m
    D = np.diag(sys.d).astype(complex)
    size = n2 * m

    def rhs(r, y):
        A1, A2 = sys.coefficients(r)
        X = y[:size].reshape(n2, m)
        G = _generator(sys, st.lam, A1, A2)
        dX = G @ X
        if same:
            P1 = X[:m]
            dC = P1.conj().T @ D @ P1
            return np.concatenate([dX.ravel(), dC.ravel()])
        X0 = y[size:2 * size].reshape(n2, m)
        G0 = _generator(sys, st.lam0, A1, A2)
        dX0 = G0 @ X0
        dC = X0[:m].conj().T @ D @ X[:m]
        return np.concatenate([dX.ravel(), dX0.ravel(), dC.ravel()])

    r0 = st.r
    while r0 < r1:
        rb = min(r0 + 1.0, r1)
        parts = [st.X.ravel()] if same else [st.X.ravel(), st.X0.ravel()]
        y0 = np.concatenate(parts + [st.cross.ravel()]).astype(complex)
        sol = solve_ivp(rhs, (r0, rb), y0, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise PropagationError(f"adaptive integration failed: {sol.message}", r0)
        y = sol.y[:, -1]
        X = y[:size].reshape(n2, m)
        if same:
            X0 = X
            cross = y[size:].reshape(m, m)
        else:
            X0 = y[size:2 * size].reshape(n2, m)
            cross = y[2 * size:].reshape(m, m)
        st = _finish(PairState(rb, st.lam0, st.lam, X0, X, cross, st.L0, st.L), same)
        r0 = rb
    return st


def _advance_pair(st: PairState, sys: SakhnovichSystem, r1: float, same: bool,
                  rtol: float, atol: float) -> PairState:
    for pc in sys.pieces(st.r, r1):
        if pc.kind == "const":
            st = _const_step(st, sys, pc, same)
        else:
            st = _smooth_step(st, sys, pc.end, same, rtol, atol)
    return st


def _initial_pair(sys: SakhnovichSystem, lam0: complex, lam: complex) -> PairState:
    m = sys.m
    X = np.vstack([np.eye(m), np.eye(m)]).astype(complex)
    return PairState(0.0, complex(lam0), complex(lam), X.copy(), X, np.zeros((m, m), complex))


def propagate_pair(sys: SakhnovichSystem, lam0: complex, lam: complex, r_end: float,
                   checkpoints: Optional[Iterable[float]] = None,
                   rtol: float = RTOL, atol: float = ATOL) -> PairTrajectory:
    """Propagate lam0 and lam in lockstep, accumulating int P1^*(lam0) D P1(lam)."""
    if r_end < 0:
        raise ValueError("r_end must be >= 0")
    same = complex(lam0) == complex(lam)
    st = _initial_pair(sys, lam0, lam)
    stops = sorted({float(c) for c in (() if checkpoints is None else checkpoints) if 0.0 < c < r_end} | {float(r_end)})
    states = [st]
    for stop in stops:
        if stop <= st.r:
            continue
        st = _advance_pair(st, sys, stop, same, rtol, atol)
        states.append(st)
    return PairTrajectory(sys, tuple(states))


def propagate_matrix(sys: SakhnovichSystem, lam: complex, r_end: float,
                     checkpoints: Optional[Iterable[float]] = None,
                     rtol: float = RTOL, atol: float = ATOL) -> MatrixTrajectory:
    pair = propagate_pair(sys, lam, lam, r_end, checkpoints, rtol, atol)
    m = sys.m
    states = tuple(MatrixState(s.r, complex(lam), s.X[:m].copy(), s.X[m:].copy(), s.cross.copy(), s.L)
                   for s in pair.states)
    return MatrixTrajectory(sys, complex(lam), states)


# ---------------------------------------------------------------------------
# identities and bounds
# ---------------------------------------------------------------------------

def gram_identity_residual(traj: MatrixTrajectory) -> float:
    """max ||P2^*P2 - P1^*P1 - 2 Im lam gram|| / (1 + ||P2||^2), in the stored scaling."""
    worst = 0.0
    two_im = 2.0 * traj.lam.imag
    for s in traj.states:
        lhs = s.P2.conj().T @ s.P2 - s.P1.conj().T @ s.P1
        denom = math.exp(-2.0 * s.log_scale) + fro(s.P2) ** 2
        worst = max(worst, fro(lhs - two_im * s.gram) / denom)
    return worst


@dataclass(frozen=True)
class PsdReport:
    hermitian_defect: float       # max ||H - H^*|| / (1 + ||P2||^2)
    min_eig_scaled: float         # min eigenvalue / (1 + ||P2||^2)
    identity_residual: float


def hermitian_psd_check(traj: MatrixTrajectory) -> PsdReport:
    """P2^*P2 - P1^*P1 must be Hermitian PSD for Im lam > 0."""
    herm = 0.0
    min_eig = math.inf
    for s in traj.states:
        P1, P2 = s.true_P1(), s.true_P2()
        H = P2.conj().T @ P2 - P1.conj().T @ P1
        scale = 1.0 + fro(P2) ** 2
        herm = max(herm, fro(H - H.conj().T) / scale)
        ev = np.linalg.eigvalsh(0.5 * (H + H.conj().T))
        min_eig = min(min_eig, float(ev.min()) / scale)
    return PsdReport(herm, min_eig, gram_identity_residual(traj))


def lagrange_bilinear(pair: PairTrajectory) -> float:
    """max over checkpoints of ||P2^*(lam0)P2(lam) - P1^*(lam0)P1(lam) - i(conj(lam0) - lam) cross||,
    relative to 1 + ||P2(lam0)|| ||P2(lam)||."""
    worst = 0.0
    for s in pair.states:
        m = s.m
        X0, X = s.X0, s.X
        lhs = X0[m:].conj().T @ X[m:] - X0[:m].conj().T @ X[:m]
        rhs = 1j * (s.lam0.conjugate() - s.lam) * s.cross
        denom = math.exp(-(s.L0 + s.L)) + fro(X0[m:]) * fro(X[m:])
        worst = max(worst, fro(lhs - rhs) / denom)
    return worst


def check_pair_alignment(a: PairTrajectory, b: PairTrajectory) -> None:
    if a.system is not b.system or len(a.states) != len(b.states) or np.any(a.r != b.r):
        raise ValueError("trajectories do not share system and checkpoints")


def log_norm_bound_check(traj: MatrixTrajectory) -> float:
    """Worst margin of d/dr log(||P1||^2 + ||P2||^2) <= 4 ||A2(r)||.

    The derivative is a finite difference between consecutive checkpoints
    lying in one smooth stretch; the right side is averaged over the same
    interval with Simpson's rule. A non-negative result means the bound holds.
    """
    if not traj.lam.imag > 0:
        raise ValueError("Im lam must be positive")
    sys = traj.system
    jumps = set()
    for s in sys.segments:
        jumps.update((s.start, s.end))
    if sys.has_smooth:
        jumps.update(sys.smooth_support)
    worst = math.inf
    sts = traj.states
    for a, b in zip(sts, sts[1:]):
        if any(a.r < j < b.r for j in jumps):
            continue
        h = b.r - a.r
        na = math.log(fro(a.P1) ** 2 + fro(a.P2) ** 2) + 2.0 * a.log_scale
        nb = math.log(fro(b.P1) ** 2 + fro(b.P2) ** 2) + 2.0 * b.log_scale
        slope = (nb - na) / h
        mid = 0.5 * (a.r + b.r)
        # evaluate A2 just inside the interval so a jump at an end point is not picked up
        left = a.r + 1e-12 * max(1.0, abs(a.r))
        right = b.r - 1e-12 * max(1.0, abs(b.r))
        bound = 4.0 * (fro(sys.A2(left)) + 4.0 * fro(sys.A2(mid)) + fro(sys.A2(right))) / 6.0
        worst = min(worst, bound - slope)
    return worst


# ---------------------------------------------------------------------------
# Pi(lam)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiEstimate:
    value: np.ndarray
    tail_bound: float
    r_end: float


def _p1_tail_estimate(n_half: float, n_end: float, r_end: float, rate: float) -> float:
    """Estimate int_R^inf ||P1||^2 from ||P1||^2 at R/2 and R.

    Power-law decay r^{-s} is fitted through the two values; an exponential
    floor 1/(2 rate) covers the free-decay case. Infinite if s <= 1.
    """
    if n_end == 0.0:
        return 0.0
    exp_tail = n_end / (2.0 * rate)
    if n_half <= n_end:
        return math.inf
    s = math.log(n_half / n_end) / math.log(2.0)
    if s <= 1.0:
        return math.inf
    return max(exp_tail, r_end * n_end / (s - 1.0)) if s < 50 else exp_tail


def pi_l2(sys: SakhnovichSystem, lam: complex, r_end: float,
          tol: Optional[float] = None) -> PiEstimate:
    """I + int_0^R A2 P1 dr with a Cauchy-Schwarz tail bound.

    The integral is accumulated as its own quadrature component alongside
    the propagation, not read off P2.
    """
    lam = complex(lam)
    if not lam.imag > 0:
        raise ValueError("Im lam must be positive")
    m = sys.m
    n2 = 2 * m
    size = n2 * m
    D = np.diag(sys.d).astype(complex)

    def rhs(r, y):
        A1, A2 = sys.coefficients(r)
        X = y[:size].reshape(n2, m)
        G = _generator(sys, lam, A1, A2)
        return np.concatenate([(G @ X).ravel(), (A2 @ X[:m]).ravel()])

    X = np.vstack([np.eye(m), np.eye(m)]).astype(complex)
    acc = np.zeros((m, m), dtype=complex)
    r = 0.0
    half_norm = None
    cuts = sorted({x for pc in sys.pieces(0.0, r_end) for x in (pc.start, pc.end)} | {0.5 * r_end})
    for a, b in zip(cuts, cuts[1:]):
        r0 = a
        while r0 < b:
            rb = min(r0 + 1.0, b)
            y0 = np.concatenate([X.ravel(), acc.ravel()])
            sol = solve_ivp(rhs, (r0, rb), y0, method="DOP853", rtol=RTOL, atol=ATOL)
            if not sol.success:
                raise PropagationError(sol.message, r0)
            y = sol.y[:, -1]
            X = y[:size].reshape(n2, m)
            acc = y[size:].reshape(m, m)
            r0 = rb
        if b == 0.5 * r_end:
            half_norm = fro(X[:m]) ** 2
    value = np.eye(m) + acc
    end_norm = fro(X[:m]) ** 2
    tail_p1 = _p1_tail_estimate(half_norm, end_norm, r_end, lam.imag * float(sys.d.min()))
    a2_tail = sys.a2_tail_l2(r_end)
    bound = 0.0 if a2_tail == 0.0 else math.sqrt(a2_tail) * math.sqrt(tail_p1)
    if tol is not None and not bound <= tol:
        raise PropagationError(f"tail bound {bound:.3g} above tolerance {tol}", r_end)
    return PiEstimate(value, bound, float(r_end))


def pi_via_integral(pair: PairTrajectory, pi_lam0: Optional[np.ndarray] = None,
                    tol: Optional[float] = None) -> PiEstimate:
    """Pi(lam) = i (conj(lam0) - lam) (Pi^*(lam0))^{-1} int_0^R P1^*(lam0) D P1(lam).

    Pi(lam0) defaults to P2(R, lam0). The reported bound adds the boundary
    term (Pi^*(lam0))^{-1} P1^*(R, lam0) P1(R, lam), which the identity says
    separates this value from P2(R, lam), and an estimate of the integral's tail.
    """
    st = pair.final
    if pi_lam0 is None:
        pi_lam0 = st.P2_0()
    pi_lam0 = np.asarray(pi_lam0, dtype=complex)
    if np.linalg.cond(pi_lam0) > 1e12:
        raise np.linalg.LinAlgError("Pi(lam0) is not invertible")
    inv_adj = np.linalg.inv(pi_lam0.conj().T)
    fac = 1j * (st.lam0.conjugate() - st.lam)
    value = fac * inv_adj @ st.cross_true()
    P1_0, P1 = st.P1_0(), st.P1()
    boundary = fro(inv_adj @ P1_0.conj().T @ P1)
    sys = pair.system
    # tail of the mixed integral by Cauchy-Schwarz with free-decay estimates
    rate0 = st.lam0.imag * float(sys.d.min())
    rate = st.lam.imag * float(sys.d.min())
    t0 = fro(P1_0) ** 2 / (2.0 * rate0) if rate0 > 0 else math.inf
    t1 = fro(P1) ** 2 / (2.0 * rate) if rate > 0 else math.inf
    tail = abs(fac) * fro(inv_adj) * float(sys.d.max()) * math.sqrt(t0 * t1)
    bound = boundary + tail
    if tol is not None and not bound <= tol:
        raise PropagationError(f"mixed integral not converged (bound {bound:.3g})", st.r)
    return PiEstimate(value, bound, st.r)
