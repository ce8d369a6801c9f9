"""Spectral densities, the Szego-Kolmogorov-Krein integral and limit diagnostics.

Everything here is built on top of the exact propagators in ``krein``.
The phase-drift run builds its pulse schedule on the fly: the gap before
pulse n is chosen from the current state so that |p/p*| has shrunk below
delta_n when the pulse starts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import coeffs
from .coeffs import CoefficientProfile, Thm62Schedule
from .krein import (GridState, KreinState, PropagationError, advance, advance_grid, propagate,
                    propagate_grid, step_state)

TWO_PI = 2.0 * math.pi
MODULUS_SPREAD = 0.01
PHASE_DRIFT = 0.1

CONVERGES = "converges"
PHASE_DRIFTS = "modulus-converges-phase-drifts"
OSCILLATES = "modulus-oscillates"
DIVERGES = "diverges"


@dataclass
class SpectralReport:
    lambda_grid: np.ndarray
    density: np.ndarray
    r_used: float
    skk_value: Optional[float] = None
    skk_remainder: Optional[float] = None


def density_at(profile: CoefficientProfile, r: float, lambda_grid) -> SpectralReport:
    """Density 1/(2 pi |p*(r, lam)|^2) of the truncated measure on a real grid."""
    grid = np.asarray(lambda_grid, dtype=float)
    if r <= 0:
        raise ValueError("r must be positive")
    st = propagate_grid(profile, grid.astype(complex), r)[-1]
    log_ps = st.log_abs_p_star()
    density = np.exp(-2.0 * log_ps) / TWO_PI
    return SpectralReport(grid, density, float(r))


def skk_integral(report: SpectralReport) -> float:
    """Trapezoid value of int |log density| / (1 + lam^2) over the grid.

    The out-of-window remainder, assuming |log density| on the tails does
    not exceed its value at the nearest grid edge, is stored on the report
    as ``skk_remainder`` (reported, not part of the value).
    """
    lam, dens = report.lambda_grid, report.density
    if np.any(~(dens > 0)):
        raise PropagationError("non-positive density", float(lam[np.argmin(dens)]))
    g = np.abs(np.log(dens)) / (1.0 + lam ** 2)
    value = float(np.trapezoid(g, lam))
    k = min(5, len(lam))
    left = float(np.max(np.abs(np.log(dens[:k]))))
    right = float(np.max(np.abs(np.log(dens[-k:]))))
    remainder = left * (math.pi / 2 + math.atan(lam[0])) + right * (math.pi / 2 - math.atan(lam[-1]))
    report.skk_value = value
    report.skk_remainder = remainder
    return value


@dataclass(frozen=True)
class HardyResult:
    value: float                 # int_0^{r_end} |p|^2
    last_decade_increment: float
    r_end: float


def hardy_integral(profile: CoefficientProfile, lam: complex, r_end: float) -> HardyResult:
    lam = complex(lam)
    if not lam.imag > 0:
        raise ValueError("Im lam must be positive")
    tr = propagate(profile, lam, r_end, [r_end / 10.0])
    vals = [s.true_energy() / (2.0 * lam.imag) for s in tr.states]
    return HardyResult(vals[-1], vals[-1] - vals[-2], float(r_end))


# ---------------------------------------------------------------------------
# limit diagnostics
# ---------------------------------------------------------------------------

@dataclass
class LimitDiagnostics:
    n: np.ndarray
    r: np.ndarray
    p_star: np.ndarray
    modulus: np.ndarray
    phase: np.ndarray
    p: np.ndarray
    cesaro: np.ndarray
    classification: str = ""
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.r)


def unwrap_phase(values: np.ndarray) -> np.ndarray:
    return np.unwrap(np.angle(values))


def classify(modulus: np.ndarray, phase: np.ndarray, window: float = 0.5,
             phase_window: float = 0.9, spread_tol: float = MODULUS_SPREAD,
             drift_tol: float = PHASE_DRIFT) -> tuple:
    """Classify a checkpoint sequence from trailing-window statistics.

    spread is (max - min) / mean of the modulus over the trailing ``window``
    fraction; drift is the range of the unwrapped phase over the trailing
    ``phase_window`` fraction (wider, because a drift that grows like
    log log n shows almost nothing in any fixed-fraction window of n).
    Growth that does not slow down (the second half of the modulus window
    gains at least half the log-modulus of the first half) is "diverges".
    """
    k = max(2, int(math.ceil(len(modulus) * window)))
    kp = max(2, int(math.ceil(len(phase) * phase_window)))
    mod = np.asarray(modulus[-k:], dtype=float)
    ph = np.asarray(phase[-kp:], dtype=float)
    spread = float((mod.max() - mod.min()) / mod.mean())
    drift = float(ph.max() - ph.min())
    h = k // 2
    g1 = math.log(mod[h] / mod[0]) if h > 0 else 0.0
    g2 = math.log(mod[-1] / mod[h])
    stats = {"spread": spread, "drift": drift, "window": k, "phase_window": kp,
             "growth_first": g1, "growth_second": g2}
    if spread <= spread_tol:
        label = CONVERGES if drift <= drift_tol else PHASE_DRIFTS
    elif g1 > 0 and g2 >= 0.5 * g1 and np.all(np.diff(mod) >= 0):
        label = DIVERGES
    else:
        label = OSCILLATES
    return label, stats


def _diagnostics_from_states(states, n=None, cesaro=None) -> LimitDiagnostics:
    r = np.array([s.r for s in states])
    ps = np.array([s.true_p_star() for s in states])
    p = np.array([s.true_p() for s in states])
    mod = np.abs(ps)
    phase = unwrap_phase(ps)
    n = np.arange(len(states)) if n is None else np.asarray(n)
    ces = np.full(len(states), np.nan + 0j) if cesaro is None else np.asarray(cesaro)
    return LimitDiagnostics(n, r, ps, mod, phase, p, ces)


def limit_diagnostics(profile: CoefficientProfile, lam: complex,
                      checkpoint_rs: Sequence[float], window: float = 0.5,
                      phase_window: float = 0.9) -> LimitDiagnostics:
    lam = complex(lam)
    if not lam.imag > 0:
        raise ValueError("Im lam must be positive")
    rs = sorted(float(x) for x in checkpoint_rs)
    state = KreinState.initial(lam)
    states = []
    for c in rs:
        state = advance(state, profile, c)
        states.append(state)
    ces = cesaro_series(profile, lam, rs)
    diag = _diagnostics_from_states(states, cesaro=ces)
    diag.classification, diag.stats = classify(diag.modulus, diag.phase, window, phase_window)
    return diag


# ---------------------------------------------------------------------------
# Cesaro averages of p*
# ---------------------------------------------------------------------------

def _segment_p_star_integral(before: KreinState, after: KreinState, mass: complex,
                             length: float) -> complex:
    """int p* over one constant stretch, from the ODE itself (no quadrature).

    With a == c: int p = -(dp*)/c and int p* = (i lam int p - dp)/conj(c).
    """
    scale_b = math.exp(before.log_scale)
    scale_a = math.exp(after.log_scale)
    if mass == 0:
        return before.p_star * scale_b * length
    c = mass / length
    dps = after.p_star * scale_a - before.p_star * scale_b
    dp = after.p * scale_a - before.p * scale_b
    int_p = -dps / c
    return (1j * before.lam * int_p - dp) / c.conjugate()


def _smooth_p_star_integral(state: KreinState, profile: CoefficientProfile, r1: float):
    from scipy.integrate import solve_ivp
    lam = state.lam

    def rhs(r, y):
        a = profile(r)
        return np.array([1j * lam * y[0] - a.conjugate() * y[1], -a * y[0], y[1]], dtype=complex)

    y0 = np.array([state.p, state.p_star, 0j], dtype=complex)
    sol = solve_ivp(rhs, (state.r, r1), y0, method="DOP853", rtol=1e-10, atol=1e-14)
    if not sol.success:
        raise PropagationError(sol.message, state.r)
    return complex(sol.y[2, -1]) * math.exp(state.log_scale)


def cesaro_series(profile: CoefficientProfile, lam: complex, rs: Sequence[float]) -> np.ndarray:
    """(1/r) int_0^r p*(s, lam) ds at each r in rs (increasing, positive)."""
    lam = complex(lam)
    state = KreinState.initial(lam)
    acc = 0j
    out = []
    for stop in rs:
        for pc in profile.pieces(state.r, stop):
            if pc.kind == "const":
                nxt = step_state(state, pc.mass, pc.end - pc.start)
                acc += _segment_p_star_integral(state, nxt, pc.mass, pc.end - pc.start)
                state = nxt
            else:
                acc += _smooth_p_star_integral(state, profile, pc.end)
                state = advance(state, profile, pc.end)
        out.append(acc / stop if stop > 0 else state.true_p_star())
    return np.array(out, dtype=complex)


def cesaro_pi(profile: CoefficientProfile, lam: complex, r_end: float) -> complex:
    """Running average (1/r) int_0^r p* ds at r = r_end."""
    if not complex(lam).imag > 0:
        raise ValueError("Im lam must be positive")
    return complex(cesaro_series(profile, lam, [float(r_end)])[-1])


def cauchy_window(values: np.ndarray, rel_tol: float = 0.01, window: float = 0.5) -> bool:
    """True if the trailing window of a complex sequence stays within rel_tol of its last value."""
    k = max(2, int(math.ceil(len(values) * window)))
    tail = np.asarray(values[-k:])
    ref = tail[-1]
    return bool(np.max(np.abs(tail - ref)) <= rel_tol * abs(ref))


# ---------------------------------------------------------------------------
# phase drift model and the phase-drift pulse run
# ---------------------------------------------------------------------------

def phase_drift_model(n_lo: int, n_hi: int) -> float:
    """sum_{n=n_lo}^{n_hi} 1/(n log n): predicted cumulative phase of p*(r_n, lam0)."""
    if not 3 <= n_lo <= n_hi:
        raise ValueError("need 3 <= n_lo <= n_hi")
    n = np.arange(n_lo, n_hi + 1, dtype=float)
    return math.fsum(1.0 / (n * np.log(n)))


def drift_threshold_n(target: float = TWO_PI, n_lo: int = 3, n_known: int = 100_000) -> float:
    """Smallest N (as a float, possibly astronomically large) with model(n_lo, N) >= target.

    Sums directly up to n_known, then continues with the integral
    log log N - log log n_known, whose error past n_known is below 1e-6.
    """
    s = phase_drift_model(n_lo, n_known)
    if s >= target:
        lo, hi = n_lo, n_known
        while lo < hi:
            mid = (lo + hi) // 2
            if phase_drift_model(n_lo, mid) >= target:
                hi = mid
            else:
                lo = mid + 1
        return float(lo)
    # sum_{n_known+1}^{N} ~ log log N - log log n_known
    loglog = target - s + math.log(math.log(n_known))
    return math.exp(math.exp(loglog))


@dataclass
class Thm62Run:
    schedule: Thm62Schedule
    diagnostics: LimitDiagnostics
    ratio_error_C: float                # max |ratio - (1 + i/(n log n))| * n log^2 n, n >= n_check
    energy: np.ndarray                  # 2 Im lam0 int_0^{r_n} |p|^2
    ratio_errors: np.ndarray
    lam0: complex
    final_state: KreinState

    def profile(self) -> CoefficientProfile:
        return self.schedule.profile()


RATIO_BUDGET = 50.0
RATIO_CHECK_FROM = 10


def thm62_build_and_run(n_max: int, lam0: complex = 1j,
                        delta_policy: Optional[Callable[[int], float]] = None,
                        gap_min: float = 1.0, ratio_budget: float = RATIO_BUDGET,
                        with_cesaro: bool = True) -> Thm62Run:
    """Place pulses n = 3..n_max, propagating (p, p*) at lam0 exactly.

    On the gap before pulse n, p* is frozen and p picks up e^{i lam0 gap},
    so the gap length that brings |p/p*| down to delta_n is known in closed
    form. Checkpoints are the pulse starts r_n.
    """
    lam0 = complex(lam0)
    if not lam0.imag > 0:
        raise ValueError("Im lam0 must be positive")
    if n_max < 10:
        raise ValueError("n_max must be >= 10")
    delta_policy = delta_policy or coeffs.thm62_delta
    count = n_max - 2
    ns = np.arange(3, n_max + 1)
    eps_a = np.empty(count)
    b_a = np.empty(count)
    xi_a = np.empty(count, dtype=complex)
    r_a = np.empty(count)
    d_a = np.empty(count)
    ps_a = np.empty(count, dtype=complex)
    p_a = np.empty(count, dtype=complex)
    en_a = np.empty(count)
    ces_a = np.empty(count, dtype=complex)
    err_a = np.empty(count)

    state = KreinState.initial(lam0)
    im = lam0.imag
    acc = 0j          # int_0^r p* ds
    for k, n in enumerate(range(3, n_max + 1)):
        eps, b, xi = coeffs.thm62_schedule_params(n)
        delta = delta_policy(n)
        rho = abs(state.p) / abs(state.p_star)
        gap = gap_min
        if rho > 0:
            gap = max(gap_min, math.log(rho / delta) / im)
        nxt = step_state(state, 0j, gap)
        acc += state.p_star * math.exp(state.log_scale) * gap
        state = nxt
        ps_true = state.true_p_star()
        eps_a[k], b_a[k], xi_a[k], r_a[k], d_a[k] = eps, b, xi, state.r, delta
        ps_a[k] = ps_true
        p_a[k] = state.true_p()
        en_a[k] = state.true_energy()
        ces_a[k] = acc / state.r
        L0 = state.log_scale
        before = state.p_star
        for mass in (-b * eps, xi.conjugate() * b * eps):
            nxt = step_state(state, mass, eps)
            if with_cesaro:
                acc += _segment_p_star_integral(state, nxt, mass, eps)
            state = nxt
        if not (math.isfinite(abs(state.p)) and math.isfinite(abs(state.p_star))):
            raise PropagationError("non-finite state", state.r)
        ratio = state.p_star / before * math.exp(state.log_scale - L0)
        logn = math.log(n)
        err_a[k] = abs(ratio - (1.0 + 1j / (n * logn))) * n * logn * logn

    check = ns >= RATIO_CHECK_FROM
    C = float(np.max(err_a[check])) if np.any(check) else float(np.max(err_a))
    if C > ratio_budget:
        raise PropagationError(f"pulse ratio error constant {C:.3g} exceeds budget {ratio_budget}",
                               float(r_a[np.argmax(err_a)]))
    sched = Thm62Schedule(ns, eps_a, b_a, xi_a, r_a, d_a)
    diag = LimitDiagnostics(ns, r_a, ps_a, np.abs(ps_a), unwrap_phase(ps_a), p_a, ces_a)
    diag.classification, diag.stats = classify(diag.modulus, diag.phase)
    return Thm62Run(sched, diag, C, en_a, err_a, lam0, state)


@dataclass(frozen=True)
class PhaseWitness:
    targets: np.ndarray
    distances: np.ndarray        # min over checkpoints of |p*/|p*| - theta|
    predicted_drift: float
    required_n: float            # n_max at which the predicted drift reaches 2 pi
    applicable: bool             # predicted drift >= 2 pi at the run's n_max

    @property
    def passed(self) -> bool:
        return self.applicable and bool(np.all(self.distances <= 0.05))


def phase_witness(diag: LimitDiagnostics, n_targets: int = 8) -> PhaseWitness:
    """Closest approach of p*(r_n)/|p*(r_n)| to each of n_targets equally spaced unit phases."""
    units = diag.p_star / np.abs(diag.p_star)
    targets = np.exp(1j * TWO_PI * np.arange(n_targets) / n_targets)
    dist = np.array([np.min(np.abs(units - t)) for t in targets])
    n_hi = int(diag.n[-1])
    drift = phase_drift_model(3, n_hi)
    return PhaseWitness(targets, dist, drift, drift_threshold_n(TWO_PI, 3, max(n_hi, 10)),
                        drift >= TWO_PI)


# ---------------------------------------------------------------------------
# isometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsometryResult:
    defect: float            # | ||Uf||_tau / ||f|| - 1 |
    norm_sq_f: float
    norm_sq_uf: float
    squared_defect: float    # | ||Uf||^2 / ||f||^2 - 1 |


def _gauss_nodes(breaks, per_piece: int):
    x, w = np.polynomial.legendre.leggauss(per_piece)
    nodes, weights = [], []
    for a, b in zip(breaks, breaks[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def verify_isometry(profile: CoefficientProfile, f: Callable, lambda_window=(-50.0, 50.0),
                    r_support: float = 1.0, r_density: Optional[float] = None,
                    n_lambda: int = 20001, pieces: int = 64, per_piece: int = 16) -> IsometryResult:
    """Plancherel defect of U f(lam) = int f(r) p(r, lam) dr on a finite lambda window.

    f is vectorized and supported in [0, r_support]; the density is taken at
    r_density (default: past the profile's support and 10 * r_support).
    """
    lam = np.linspace(lambda_window[0], lambda_window[1], n_lambda)
    breaks = set(np.linspace(0.0, r_support, pieces + 1))
    for pc in profile.pieces(0.0, r_support):
        breaks.update((pc.start, pc.end))
    breaks = sorted(breaks)
    nodes, weights = _gauss_nodes(breaks, per_piece)
    fv = np.asarray(f(nodes), dtype=complex)
    norm_f = float(np.sum(weights * np.abs(fv) ** 2))
    if not profile.is_piecewise_constant:
        raise ValueError("verify_isometry propagates exactly: piecewise-constant profiles only")
    st = GridState(0.0, lam.astype(complex), np.ones(lam.shape, complex), np.ones(lam.shape, complex),
                   np.zeros(lam.shape))
    uf = np.zeros(lam.shape, dtype=complex)
    for x, wt, fx in zip(nodes, weights, fv):
        st = advance_grid(st, profile, float(x))
        if fx != 0:
            uf += wt * fx * st.p * np.exp(st.log_scale)
    if r_density is None:
        r_density = max(10.0 * r_support, profile.support_end + 1.0)
    dens = density_at(profile, r_density, lam).density
    norm_uf = float(np.trapezoid(np.abs(uf) ** 2 * dens, lam))
    return IsometryResult(abs(math.sqrt(norm_uf / norm_f) - 1.0), norm_f, norm_uf,
                          abs(norm_uf / norm_f - 1.0))
