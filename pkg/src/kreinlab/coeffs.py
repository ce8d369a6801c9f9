"""Coefficient functions a(r) for the Krein system and the counterexample families.

A profile is an ordered list of constant pulses (zero on the gaps between
them), optionally superposed with a smooth callable on a bounded support.
Pulses keep their ``mass`` (value x length) explicitly so that very narrow,
very tall pulses never have to be rebuilt from a product that has lost
precision.
"""
from __future__ import annotations

import bisect
import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

XI_TOL = 1e-12
THM61_MAX_PULSES = 40


class SmoothProfileError(ValueError):
    """Raised when an exact segment computation is asked of a smooth profile.

    ``estimate`` carries a quadrature value when one could be computed.
    """

    def __init__(self, msg: str, estimate: Optional[float] = None):
        super().__init__(msg)
        self.estimate = estimate


@dataclass(frozen=True)
class PulseSegment:
    start: float
    length: float
    value: complex
    mass: Optional[complex] = None

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"segment length must be positive, got {self.length}")
        object.__setattr__(self, "value", complex(self.value))
        if self.mass is None:
            object.__setattr__(self, "mass", self.value * self.length)
        else:
            object.__setattr__(self, "mass", complex(self.mass))

    @property
    def end(self) -> float:
        return self.start + self.length


@dataclass(frozen=True)
class Piece:
    """One stretch of [0, r_end] as seen by a propagator.

    kind is "const" (value/mass valid over [start, end)) or "smooth".
    """
    start: float
    end: float
    kind: str
    value: complex = 0j
    mass: complex = 0j


@dataclass(frozen=True)
class CoefficientProfile:
    segments: tuple = ()
    smooth_part: Optional[Callable[[float], complex]] = None
    smooth_support: tuple = (0.0, math.inf)
    smooth_bound: float = math.inf
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        for left, right in zip(segs, segs[1:]):
            if right.start < left.end:
                raise ValueError(
                    f"segments overlap or are unsorted: [{left.start}, {left.end}) and "
                    f"[{right.start}, {right.end})")
        if segs and segs[0].start < 0:
            raise ValueError("segments must lie in r >= 0")
        object.__setattr__(self, "_starts", [s.start for s in segs])

    @property
    def is_piecewise_constant(self) -> bool:
        return self.smooth_part is None

    @property
    def support_end(self) -> float:
        """Right end of the support: a vanishes beyond this point."""
        end = self.segments[-1].end if self.segments else 0.0
        if self.smooth_part is not None:
            end = max(end, self.smooth_support[1])
        return end

    def segment_at(self, r: float) -> Optional[PulseSegment]:
        i = bisect.bisect_right(self._starts, r) - 1
        if i >= 0 and r < self.segments[i].end:
            return self.segments[i]
        return None

    def __call__(self, r: float) -> complex:
        seg = self.segment_at(r)
        val = seg.value if seg is not None else 0j
        if self.smooth_part is not None and self._in_smooth(r):
            val += complex(self.smooth_part(r))
        return val

    def _in_smooth(self, r: float) -> bool:
        lo, hi = self.smooth_support
        return lo <= r <= hi

    def is_real(self, r_end: float = math.inf, samples: int = 2001) -> bool:
        segs_ok = all(s.value.imag == 0 for s in self.segments if s.start < r_end)
        if self.smooth_part is None or not segs_ok:
            return segs_ok
        lo, hi = self.smooth_support
        hi = min(hi, r_end)
        if hi <= lo:
            return True
        grid = np.linspace(lo, hi, samples)
        return all(complex(self.smooth_part(x)).imag == 0 for x in grid)

    def pieces(self, r0: float, r1: float) -> Iterator[Piece]:
        """Split [r0, r1] into constant stretches and smooth stretches."""
        if r1 <= r0:
            return
        cuts = {r0, r1}
        i = max(bisect.bisect_right(self._starts, r0) - 1, 0)
        while i < len(self.segments) and self.segments[i].start < r1:
            s = self.segments[i]
            for x in (s.start, s.end):
                if r0 < x < r1:
                    cuts.add(x)
            i += 1
        if self.smooth_part is not None:
            for x in self.smooth_support:
                if r0 < x < r1:
                    cuts.add(x)
        cuts = sorted(cuts)
        for a, b in zip(cuts, cuts[1:]):
            mid = 0.5 * (a + b)
            if self.smooth_part is not None and self._in_smooth(mid):
                yield Piece(a, b, "smooth")
                continue
            seg = self.segment_at(mid)
            if seg is None:
                yield Piece(a, b, "const")
            elif a == seg.start and b == seg.end:
                yield Piece(a, b, "const", seg.value, seg.mass)
            else:
                frac = (b - a) / seg.length
                yield Piece(a, b, "const", seg.value, seg.mass * frac)

    def integral(self, r0: float, r1: float) -> complex:
        """Signed integral of a over [r0, r1] (exact on segments)."""
        total = 0j
        for pc in self.pieces(r0, r1):
            if pc.kind == "const":
                total += pc.mass
            else:
                total += _quad_complex(self.smooth_part, pc.start, pc.end)
        return total

    def local_mass(self, r0: float, r1: float) -> float:
        """Integral of |a| over [r0, r1]."""
        total = 0.0
        for pc in self.pieces(r0, r1):
            if pc.kind == "const":
                total += abs(pc.mass)
            else:
                f = self.smooth_part
                total += _quad_real(lambda x: abs(f(x)), pc.start, pc.end)
        return total

    def concat(self, other: "CoefficientProfile") -> "CoefficientProfile":
        if self.smooth_part is not None or other.smooth_part is not None:
            raise SmoothProfileError("concat is defined for piecewise-constant profiles")
        segs = sorted(self.segments + other.segments, key=lambda s: s.start)
        return CoefficientProfile(tuple(segs))

    def shifted(self, offset: float) -> "CoefficientProfile":
        if self.smooth_part is not None:
            f = self.smooth_part
            lo, hi = self.smooth_support
            smooth = (lambda r: f(r - offset))
            support = (lo + offset, hi + offset)
        else:
            smooth, support = None, self.smooth_support
        segs = tuple(PulseSegment(s.start + offset, s.length, s.value, s.mass)
                     for s in self.segments)
        return CoefficientProfile(segs, smooth, support, self.smooth_bound, dict(self.meta))

    def scaled(self, factor: complex) -> "CoefficientProfile":
        segs = tuple(PulseSegment(s.start, s.length, s.value * factor, s.mass * factor)
                     for s in self.segments)
        smooth = None
        if self.smooth_part is not None:
            f = self.smooth_part
            smooth = (lambda r: factor * f(r))
        return CoefficientProfile(segs, smooth, self.smooth_support,
                                  abs(factor) * self.smooth_bound, dict(self.meta))


def zero_profile() -> CoefficientProfile:
    return CoefficientProfile(meta={"kind": "zero"})


def smooth_profile(func, support=(0.0, math.inf), bound=math.inf, **meta) -> CoefficientProfile:
    return CoefficientProfile((), func, tuple(support), bound, meta)


def step_profile(starts, lengths, values) -> CoefficientProfile:
    segs = [PulseSegment(float(s), float(l), complex(v)) for s, l, v in zip(starts, lengths, values)]
    return CoefficientProfile(tuple(segs), meta={"kind": "steps"})


def random_step_profile(rng: np.random.Generator, n_segments: int, max_abs: float = 2.0,
                        min_len: float = 0.01, max_len: float = 0.2,
                        gap_prob: float = 0.2) -> CoefficientProfile:
    """Seeded random piecewise-constant profile with |c| <= max_abs.

    Some segments are left as zero gaps (not stored) with probability gap_prob.
    """
    segs = []
    r = 0.0
    for _ in range(n_segments):
        length = float(rng.uniform(min_len, max_len))
        if rng.random() >= gap_prob:
            rad = max_abs * math.sqrt(rng.random())
            val = cmath.rect(rad, rng.uniform(-math.pi, math.pi))
            segs.append(PulseSegment(r, length, val))
        r += length
    return CoefficientProfile(tuple(segs), meta={"kind": "random", "length": r})


def _quad_complex(f, a, b) -> complex:
    from scipy.integrate import quad
    re = quad(lambda x: complex(f(x)).real, a, b, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
    im = quad(lambda x: complex(f(x)).imag, a, b, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
    return complex(re, im)


def _quad_real(f, a, b) -> float:
    from scipy.integrate import quad
    return quad(f, a, b, limit=200, epsabs=1e-14, epsrel=1e-12)[0]


# ---------------------------------------------------------------------------
# Bumps for the zero-mass two-half pulses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpProfile:
    kind: str
    steps: tuple = ()           # ((x0, x1, value), ...) on [0, 1]
    x: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None
    func: Optional[Callable[[float], float]] = None
    integral_total: float = 0.0
    integral_half: float = 0.0

    @property
    def max_abs(self) -> float:
        if self.kind == "two-step":
            return max(abs(v) for _, _, v in self.steps)
        return float(np.max(np.abs(self.samples)))

    def __call__(self, x: float) -> float:
        if x < 0.0 or x > 1.0:
            return 0.0
        if self.kind == "two-step":
            for x0, x1, v in self.steps:
                if x0 <= x < x1:
                    return v
            return 0.0
        return self.func(x)


def _mollifier(t):
    # C-infinity bump on (0, 1), zero elsewhere.
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    u = t[inside]
    out[inside] = np.exp(-1.0 / (u * (1.0 - u)))
    return out


_MOLLIFIER_MASS = None


def _mollifier_mass() -> float:
    global _MOLLIFIER_MASS
    if _MOLLIFIER_MASS is None:
        from scipy.integrate import quad
        _MOLLIFIER_MASS = quad(lambda u: math.exp(-1.0 / (u * (1.0 - u))), 0.0, 1.0,
                               epsabs=1e-16, epsrel=1e-14)[0]
    return _MOLLIFIER_MASS


def make_bump(kind: str = "two-step", n_samples: int = 10_000) -> BumpProfile:
    """Zero-mean bump b on [0, 1] with positive mass on [0, 1/2].

    ``two-step`` is +1 on [0, 1/2), -1 on [1/2, 1). ``smooth-mollified`` is a
    positive C-infinity hump on the first half minus its mirror on the second
    half; the sampled curve has its trapezoid mean removed so the sampled
    total is zero to rounding.
    """
    if kind == "two-step":
        return BumpProfile("two-step", steps=((0.0, 0.5, 1.0), (0.5, 1.0, -1.0)),
                           integral_total=0.0, integral_half=0.5)
    if kind != "smooth-mollified":
        raise ValueError(f"unknown bump kind {kind!r}")
    norm = 2.0 * _mollifier_mass()

    def b(x):
        x = np.asarray(x, dtype=float)
        return (_mollifier(2.0 * x) - _mollifier(2.0 * x - 1.0)) / norm

    x = np.linspace(0.0, 1.0, n_samples + 1)
    y = b(x)
    y = y - np.trapezoid(y, x)  # interval length is 1
    half = x <= 0.5
    return BumpProfile(
        "smooth-mollified", x=x, samples=y,
        func=lambda t: float(b(t)),
        integral_total=float(np.trapezoid(y, x)),
        integral_half=float(np.trapezoid(y[half], x[half])),
    )


def _amplitude(eps: float, amp_mode: str, M: Optional[float]) -> float:
    if amp_mode == "logloginverse":
        return math.log(abs(math.log(eps)))
    if amp_mode == "fixed":
        if M is None or not M > 0:
            raise ValueError("fixed amplitude mode needs M > 0")
        return float(M)
    raise ValueError(f"unknown amp_mode {amp_mode!r}")


def lemma61_pulse(bump: BumpProfile, eps: float, amp_mode: str = "logloginverse",
                  M: Optional[float] = None) -> CoefficientProfile:
    """a_eps(r) = -(A/eps) b(r/eps) with A = log|log eps| or a fixed M."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    amp = _amplitude(eps, amp_mode, M)
    meta = {"kind": "lemma61", "eps": eps, "amp_mode": amp_mode, "amplitude": amp}
    if bump.kind == "two-step":
        segs = tuple(
            PulseSegment(x0 * eps, (x1 - x0) * eps, -amp / eps * v, mass=-amp * v * (x1 - x0))
            for x0, x1, v in bump.steps)
        return CoefficientProfile(segs, meta=meta)
    scale = -amp / eps

    def a(r, _b=bump, _eps=eps, _s=scale):
        return _s * _b(r / _eps)

    return CoefficientProfile((), a, (0.0, eps), amp / eps * bump.max_abs, meta)


def thm61_profile(n_max: int, amp_mode: str = "fixed", M: float = 1.0,
                  bump: Optional[BumpProfile] = None) -> CoefficientProfile:
    """Pulses -(A_n 2^n) b(2^n (r - n)) for n = 1..n_max.

    amp_mode "logn" uses A_n = log n (the explicit series); "fixed" uses A_n = M.
    Zero-amplitude pulses (n = 1 in "logn" mode) are omitted.
    """
    if not 3 <= n_max <= THM61_MAX_PULSES:
        raise ValueError(f"n_max must lie in [3, {THM61_MAX_PULSES}], got {n_max}")
    bump = bump or make_bump("two-step")
    if bump.kind != "two-step":
        raise ValueError("thm61_profile is built from the two-step bump")
    segs = []
    for n in range(1, n_max + 1):
        if amp_mode == "logn":
            amp = math.log(n)
        elif amp_mode == "fixed":
            amp = float(M)
        else:
            raise ValueError(f"unknown amp_mode {amp_mode!r}")
        if amp == 0.0:
            continue
        width = math.ldexp(1.0, -n)
        height = math.ldexp(amp, n)
        for x0, x1, v in bump.steps:
            segs.append(PulseSegment(n + x0 * width, (x1 - x0) * width, -height * v,
                                     mass=-amp * v * (x1 - x0)))
    return CoefficientProfile(tuple(segs), meta={"kind": "thm61", "n_max": n_max,
                                                 "amp_mode": amp_mode, "M": M})


def thm62_pulse(b_amp: float, xi: complex, eps: float, start: float = 0.0) -> CoefficientProfile:
    """Two-segment pulse: -b on [0, eps), conj(xi) b on [eps, 2 eps)."""
    if not b_amp > 0 or not eps > 0:
        raise ValueError("b_amp and eps must be positive")
    if abs(abs(xi) - 1.0) > XI_TOL:
        raise ValueError(f"|xi| must be 1 (got {abs(xi)!r})")
    xi = complex(xi)
    segs = (PulseSegment(start, eps, -b_amp),
            PulseSegment(start + eps, eps, xi.conjugate() * b_amp))
    return CoefficientProfile(segs, meta={"kind": "thm62_pulse"})


def thm62_schedule_params(n: int) -> tuple:
    """(eps_n, b_n, xi_n) with xi_n on the unit circle, |1 - xi_n| = 1/log n, Im xi_n > 0."""
    if n < 3:
        raise ValueError(f"schedule starts at n = 3, got {n}")
    L = math.log(n)
    eps = 1.0 / (L * L)
    b = L * L / math.sqrt(n)
    xi = complex(1.0 - 0.5 / (L * L), math.sqrt(1.0 - 0.25 / (L * L)) / L)
    return eps, b, xi


def thm62_delta(n: int) -> float:
    """Default smallness target for |p/p*| at the start of pulse n."""
    L = math.log(n)
    return 1.0 / (math.sqrt(n) * L ** 3)


@dataclass
class Thm62Schedule:
    n: np.ndarray
    eps: np.ndarray
    b: np.ndarray
    xi: np.ndarray
    r: np.ndarray
    delta: np.ndarray

    def profile(self) -> CoefficientProfile:
        segs = []
        for r_n, b_n, xi_n, e_n in zip(self.r, self.b, self.xi, self.eps):
            xi_n = complex(xi_n)
            segs.append(PulseSegment(float(r_n), float(e_n), -float(b_n)))
            segs.append(PulseSegment(float(r_n + e_n), float(e_n), xi_n.conjugate() * float(b_n)))
        return CoefficientProfile(tuple(segs), meta={
            "kind": "thm62", "n_min": int(self.n[0]), "n_max": int(self.n[-1])})

    def check(self) -> None:
        if np.any(np.abs(np.abs(self.xi) - 1.0) > 1e-14):
            raise AssertionError("xi_n off the unit circle")
        if np.any(np.diff(self.r) < 2.0 * self.eps[:-1]):
            raise AssertionError("pulses overlap")


@dataclass(frozen=True)
class LpNorm:
    value: float       # integral of |a|^p over the stored profile
    p: float
    diverges: Optional[bool] = None


def thm62_lp_series(p: float, n_lo: int, n_hi: int) -> float:
    """2 sum_{n_lo}^{n_hi} n^{-p/2} log^{2p-2} n, summed smallest-first."""
    n = np.arange(n_hi, n_lo - 1, -1, dtype=float)
    terms = 2.0 * n ** (-p / 2.0) * np.log(n) ** (2.0 * p - 2.0)
    return math.fsum(terms)


def lp_norm(profile: CoefficientProfile, p: float) -> LpNorm:
    """Exact sum of |c|^p * length over constant segments (p-th power of the norm).

    For the phase-drift pulse family the divergence flag reports whether the
    infinite family is in L^p: the per-pulse contribution is
    2 n^{-p/2} log^{2p-2} n, which is summable iff p > 2.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if profile.smooth_part is not None:
        f, (lo, hi) = profile.smooth_part, profile.smooth_support
        est = None
        if math.isfinite(hi):
            est = _quad_real(lambda x: abs(f(x)) ** p, lo, hi)
        raise SmoothProfileError("lp_norm needs a piecewise-constant profile", estimate=est)
    terms = []
    for s in profile.segments:
        if s.mass == 0:
            continue
        # |c|^p * len == |mass|^p * len^(1-p), which stays exact for thin tall pulses.
        terms.append(abs(s.mass) ** p * s.length ** (1.0 - p))
    terms.sort()
    value = math.fsum(terms)
    diverges = None
    if profile.meta.get("kind") == "thm62":
        diverges = not p > 2.0
    elif profile.segments:
        diverges = False
    return LpNorm(value, p, diverges)
