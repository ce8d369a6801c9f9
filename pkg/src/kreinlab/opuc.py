"""Szegő recursion for orthogonal polynomials on the unit circle, evaluated pointwise.

    phi_{n+1}  = rho_n^{-1} (z phi_n - conj(a_n) phi*_n)
    phi*_{n+1} = rho_n^{-1} (phi*_n - a_n z phi_n),      rho_n = sqrt(1 - |a_n|^2)

This is the discrete counterpart of the Krein system and serves as an
exactly computable cross-check of the continuous diagnostics.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .krein import RENORM_HI, RENORM_LO
from .spectral import LimitDiagnostics, classify, unwrap_phase

SUMMABLE = "summable"
DIVERGENT = "divergent"


@dataclass(frozen=True)
class VerblunskySeq:
    """a_n for n = 0, 1, ...; ``l2_class`` is the analytic class of sum |a_n|^2."""
    name: str
    func: Callable[[int], complex]
    l2_class: str
    params: dict = field(default_factory=dict)

    def __call__(self, n: int) -> complex:
        a = complex(self.func(n))
        if not abs(a) < 1.0:
            raise ValueError(f"|a_{n}| = {abs(a)} is not < 1")
        return a

    def values(self, n: int) -> np.ndarray:
        return np.array([self(k) for k in range(n)])


def zero_seq() -> VerblunskySeq:
    return VerblunskySeq("zero", lambda n: 0.0, SUMMABLE)


def geometric_seq(q: float = 0.5, a0: complex = 0.5) -> VerblunskySeq:
    if not (0 <= q < 1 and abs(a0) < 1):
        raise ValueError("need 0 <= q < 1 and |a0| < 1")
    return VerblunskySeq("geometric", lambda n: a0 * q ** n, SUMMABLE, {"q": q, "a0": a0})


def power_seq(s: float, c: complex = 1.0, offset: int = 2) -> VerblunskySeq:
    """a_n = c / (n + offset)^s; square-summable iff s > 1/2."""
    if not abs(c) < offset ** s:
        raise ValueError("|a_0| must be < 1")
    return VerblunskySeq("power", lambda n: c / (n + offset) ** s,
                         SUMMABLE if s > 0.5 else DIVERGENT, {"s": s, "c": c, "offset": offset})


def unit_phase_drift_seq(s: float = 0.5, c: float = 0.5, offset: int = 3) -> VerblunskySeq:
    """a_n = c e^{i theta_n} / (n + offset)^s with theta_n = log log(n + offset)."""
    def a(n):
        k = n + offset
        return c * cmath.exp(1j * math.log(math.log(k))) / k ** s
    return VerblunskySeq("unit-phase-drift", a, SUMMABLE if s > 0.5 else DIVERGENT,
                         {"s": s, "c": c, "offset": offset})


def explicit_seq(values: Sequence[complex], name: str = "explicit") -> VerblunskySeq:
    vals = tuple(complex(v) for v in values)

    def a(n):
        return vals[n] if n < len(vals) else 0.0
    return VerblunskySeq(name, a, SUMMABLE, {"length": len(vals)})


@dataclass(frozen=True)
class PolyPair:
    """phi_n(z), phi*_n(z); true values are e^{log_scale} times the stored ones.

    ``running_sum`` is sum_{k<n} |phi_k|^2 in the squared scaling.
    """
    n: int
    z: complex
    phi: complex
    phi_star: complex
    log_scale: float = 0.0
    running_sum: float = 0.0

    @classmethod
    def initial(cls, z: complex) -> "PolyPair":
        return cls(0, complex(z), 1.0 + 0j, 1.0 + 0j)

    def true_phi(self) -> complex:
        return self.phi * math.exp(self.log_scale)

    def true_phi_star(self) -> complex:
        return self.phi_star * math.exp(self.log_scale)

    def true_sum(self) -> float:
        return self.running_sum * math.exp(2.0 * self.log_scale)


def szego_step(pair: PolyPair, a_n: complex) -> PolyPair:
    a_n = complex(a_n)
    rho2 = 1.0 - abs(a_n) ** 2
    if not rho2 > 0:
        raise ValueError(f"|a_n| = {abs(a_n)} is not < 1")
    inv = 1.0 / math.sqrt(rho2)
    z = pair.z
    phi = inv * (z * pair.phi - a_n.conjugate() * pair.phi_star)
    phi_star = inv * (pair.phi_star - a_n * z * pair.phi)
    s = pair.running_sum + abs(pair.phi) ** 2
    L = pair.log_scale
    big = max(abs(phi), abs(phi_star))
    if big > RENORM_HI or (0 < big < RENORM_LO):
        k = math.frexp(big)[1]
        f = math.ldexp(1.0, -k)
        phi, phi_star, s = phi * f, phi_star * f, s * f * f
        L += k * math.log(2.0)
    return PolyPair(pair.n + 1, z, phi, phi_star, L, s)


def evaluate_polys(seq: VerblunskySeq, z: complex, N: int) -> list:
    """PolyPairs for n = 0..N."""
    if abs(z) > 1.0 + 1e-15:
        raise ValueError("|z| must be <= 1")
    pair = PolyPair.initial(z)
    out = [pair]
    for n in range(N):
        pair = szego_step(pair, seq(n))
        out.append(pair)
    return out


def discrete_energy_check(pairs: Sequence[PolyPair]) -> float:
    """max | |phi*_n|^2 - |phi_n|^2 - (1 - |z|^2) sum_{k<n} |phi_k|^2 | / |phi*_n|^2."""
    worst = 0.0
    for p in pairs:
        w = 1.0 - abs(p.z) ** 2
        lhs = abs(p.phi_star) ** 2 - abs(p.phi) ** 2
        worst = max(worst, abs(lhs - w * p.running_sum) / abs(p.phi_star) ** 2)
    return worst


def unit_circle_balance(pairs: Sequence[PolyPair]) -> float:
    return max(abs(abs(p.phi) - abs(p.phi_star)) / abs(p.phi_star) for p in pairs)


def discrete_diagnostics(seq: VerblunskySeq, z: complex, N: int,
                         window: float = 0.5, phase_window: float = 0.9) -> LimitDiagnostics:
    """phi*_n(z) limit classification with the same rules as the continuous side."""
    pairs = evaluate_polys(seq, z, N)[1:]
    n = np.array([p.n for p in pairs])
    ps = np.array([p.true_phi_star() for p in pairs])
    phi = np.array([p.true_phi() for p in pairs])
    mod = np.abs(ps)
    phase = unwrap_phase(ps)
    diag = LimitDiagnostics(n, n.astype(float), ps, mod, phase, phi, np.full(len(n), np.nan + 0j))
    diag.classification, diag.stats = classify(mod, phase, window, phase_window)
    diag.stats["energy_residual"] = discrete_energy_check(pairs)
    return diag


@dataclass(frozen=True)
class AnalogyRow:
    side: str               # "continuous" or "discrete"
    label: str
    energy_residual: float
    classification: str
    limit: complex
    stats: dict


def analogy_table(profile, seq: VerblunskySeq, lam: complex = 1j, z: complex = 0.5j,
                  checkpoint_rs: Optional[Sequence[float]] = None, N: int = 2000) -> list:
    """Matched diagnostics for a continuous profile and a discrete sequence."""
    from .krein import lagrange_residual, propagate
    from .spectral import limit_diagnostics

    if checkpoint_rs is None:
        end = profile.support_end if math.isfinite(profile.support_end) else 200.0
        end = max(end, 1.0)
        checkpoint_rs = np.linspace(end / 100, end, 100)
    cont = limit_diagnostics(profile, lam, checkpoint_rs)
    traj = propagate(profile, lam, float(max(checkpoint_rs)), checkpoints=checkpoint_rs)
    disc = discrete_diagnostics(seq, z, N)
    return [
        AnalogyRow("continuous", profile.meta.get("kind", "profile"), lagrange_residual(traj),
                   cont.classification, complex(cont.p_star[-1]), cont.stats),
        AnalogyRow("discrete", seq.name, disc.stats["energy_residual"],
                   disc.classification, complex(disc.p_star[-1]), disc.stats),
    ]
