"""Experiment driver: parse a flat config, run one experiment, archive artifacts.

Each run directory holds the resolved config (``config.resolved``), CSV
artifacts, ``summary.json`` and a human-readable ``summary.txt``. Exit
status is 0 when every enabled check passes, 1 when a check fails, 2 for an
invalid config and 3 for a numerical fault.

Random suites draw from ``np.random.SeedSequence([seed, crc32(suite)])``,
so each named suite is reproducible on its own whatever else runs.
"""
from __future__ import annotations

import cmath
import itertools
import math
import os
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import coeffs, io, krein, opuc, sakhnovich as sk, spectral

OUTPUT_ROOT_ENV = "KREINLAB_OUTPUT_ROOT"
DEFAULT_SEED = 20_240_501

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    status = EXIT_CONFIG


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    tolerance: object = None
    detail: str = ""


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = DEFAULT_SEED
    output_dir: str = ""

    def rng(self, suite: str) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, zlib.crc32(suite.encode())]))

    def run_dir(self) -> Path:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
        out = Path(self.output_dir or f"runs/{self.experiment}")
        return out if out.is_absolute() else root / out

    def resolved_text(self) -> str:
        lines = [f"experiment = {self.experiment}", f"seed = {self.seed}",
                 f"output_dir = {self.output_dir}"]
        for k in sorted(self.params):
            lines.append(f"{k} = {format_value(self.params[k])}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# values
# ---------------------------------------------------------------------------

def parse_complex(text: str) -> complex:
    """Accept "a+bi", "a-bi", "bi", "i" or a plain real number."""
    s = text.strip().replace(" ", "")
    if not s:
        raise ValueError("empty complex value")
    if not s.endswith("i"):
        return complex(float(s))
    body = s[:-1]
    # split at the last sign that is not part of an exponent
    for k in range(len(body) - 1, 0, -1):
        if body[k] in "+-" and body[k - 1] not in "eE":
            re_part, im_part = body[:k], body[k:]
            break
    else:
        re_part, im_part = "0", body
    if im_part in ("", "+"):
        im_part = "1"
    elif im_part == "-":
        im_part = "-1"
    return complex(float(re_part), float(im_part))


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, complex):
        return f"{v.real!r}{'+' if v.imag >= 0 or math.isnan(v.imag) else '-'}{abs(v.imag)!r}i"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, complex):
            return parse_complex(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"malformed value for {key!r}: {raw!r}") from exc


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class Context:
    config: ExperimentConfig
    run_dir: Path
    checks: list = field(default_factory=list)
    report: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def p(self) -> dict:
        return self.config.params

    def check(self, name, passed, value=None, tolerance=None, detail=""):
        self.checks.append(Check(name, bool(passed), value, tolerance, detail))

    def csv(self, name, header, rows):
        io.write_csv(self.run_dir / name, header, rows)
        self.artifacts.append(name)


def _exp_fourier(ctx: Context) -> None:
    p = ctx.p
    lam = np.arange(p["lambda_min"], p["lambda_max"] + 0.5 * p["lambda_step"], p["lambda_step"])
    r = p["r"]
    zero = coeffs.zero_profile()
    st = krein.propagate_grid(zero, lam.astype(complex), r)[-1]
    p_err = float(np.max(np.abs(st.p * np.exp(st.log_scale) - np.exp(1j * lam * r))))
    ps_err = float(np.max(np.abs(st.p_star * np.exp(st.log_scale) - 1.0)))
    rep = spectral.density_at(zero, r, lam)
    d_err = float(np.max(np.abs(rep.density - 1.0 / (2 * math.pi))))
    ctx.csv("density.csv", io.DENSITY_HEADER, io.density_rows(rep))
    tol = p["tol"]
    ctx.check("fourier_exact", max(p_err, ps_err, d_err) <= tol, max(p_err, ps_err, d_err), tol,
              f"p {p_err:.3g}, p* {ps_err:.3g}, density {d_err:.3g}")

    if p["check_lagrange"]:
        rng = ctx.config.rng("lagrange-random")
        worst = 0.0
        rows = []
        for i in range(p["n_random"]):
            nseg = int(rng.integers(1, p["max_segments"] + 1))
            prof = coeffs.random_step_profile(rng, nseg, max_abs=p["max_abs"])
            lam_i = complex(rng.uniform(-3, 3), rng.uniform(0.1, 2.0))
            end = prof.support_end + 1.0
            cps = np.linspace(0, end, 21)[1:-1]
            tracked = krein.lagrange_residual(krein.propagate(prof, lam_i, end, checkpoints=cps))
            indep = independent_lagrange_residual(prof, lam_i, end, cps)
            rows.append((i, nseg, lam_i, tracked, indep))
            worst = max(worst, tracked, indep)
        ctx.csv("lagrange_random.csv", ["index", "segments", "lambda_re", "lambda_im", "tracked_residual",
                                        "independent_residual"], rows)
        ctx.check("lagrange_random", worst <= p["lagrange_tol"], worst, p["lagrange_tol"])

    if p["check_oracle"]:
        worst, rows = transfer_oracle_grid(p["grid_points"], p["oracle_step"])
        ctx.csv("transfer_oracle.csv", ["c", "lambda", "delta", "max_abs_diff"], rows)
        ctx.check("transfer_vs_oracle", worst <= p["oracle_tol"], worst, p["oracle_tol"])


def independent_lagrange_residual(profile, lam, r_end, checkpoints) -> float:
    """Lagrange residual with the energy integral taken from a block-exponential quadrature.

    The scalar solver books the energy of a constant segment from the identity
    itself; the one-dimensional matrix embedding integrates |p|^2 separately,
    so this residual has content.
    """
    mt = sk.propagate_matrix(sk.SakhnovichSystem.from_krein(profile), lam, r_end, checkpoints)
    worst = 0.0
    for s in mt.states:
        p, ps = complex(s.P1[0, 0]), complex(s.P2[0, 0])
        lhs = abs(ps) ** 2 - abs(p) ** 2
        energy = 2.0 * complex(lam).imag * complex(s.gram[0, 0]).real
        worst = max(worst, abs(lhs - energy) / (math.exp(-2.0 * s.log_scale) + abs(ps) ** 2))
    return worst


def transfer_oracle_grid(points: int = 5, step: float = 1e-5) -> tuple:
    """Closed-form transfer vs fixed-step RK4 over a (|c|, lam, Delta) grid in [0, 2]^3.

    The lam = -2|c| cases are appended so both signs of the degenerate branch appear.
    """
    cs = np.linspace(0.0, 2.0, points)
    ls = np.linspace(0.0, 2.0, points)
    ds = np.linspace(0.0, 2.0, points)
    rows = []
    worst = 0.0
    for d in ds:
        pairs = list(itertools.product(cs, ls)) + [(c, -2.0 * c) for c in cs if c > 0]
        Y = krein.rk_transfer_batch([c for c, _ in pairs], [l for _, l in pairs], float(d), step)
        for (c, l), y in zip(pairs, Y):
            T = krein.constant_transfer(complex(c), complex(l), float(d)).true_array()
            err = float(np.max(np.abs(T - y)))
            rows.append((float(c), float(l), float(d), err))
            worst = max(worst, err)
    return worst, rows


def l2_decay_profile(s: float) -> coeffs.CoefficientProfile:
    return coeffs.smooth_profile(lambda r: (1.0 + r) ** (-s), (0.0, math.inf), 1.0, kind="power", s=s)


def _exp_l2_decay(ctx: Context) -> None:
    p = ctx.p
    prof = l2_decay_profile(p["s"])
    r_max = p["r_max"]
    Rs = [r_max / 8, r_max / 4, r_max / 2, r_max]
    system = sk.SakhnovichSystem.from_krein(prof)
    for tag, lam in (("lambda1", p["lambda1"]), ("lambda2", p["lambda2"])):
        traj = krein.propagate(prof, lam, r_max, checkpoints=Rs)
        ctx.csv(f"trajectory_{tag}.csv", io.TRAJECTORY_HEADER, io.trajectory_rows(traj))
        by_r = {round(s.r, 9): s for s in traj.states}
        pv = [abs(by_r[round(R, 9)].true_p()) for R in Rs]
        psv = {R: by_r[round(R, 9)].true_p_star() for R in Rs}
        diffs = [abs(psv[R] - krein.propagate(prof, lam, R / 2).final.true_p_star()) for R in Rs]
        ctx.report[tag] = {"lambda": lam, "abs_p": pv, "p_star_half_diffs": diffs}
        ctx.check(f"abs_p_decreasing[{tag}]", all(b < a for a, b in zip(pv, pv[1:])), pv)
        ctx.check(f"abs_p_final[{tag}]", pv[-1] <= p["p_final_tol"], pv[-1], p["p_final_tol"])
        ctx.check(f"p_star_cauchy_decreasing[{tag}]", all(b < a for a, b in zip(diffs, diffs[1:])), diffs)
        est = sk.pi_l2(system, lam, r_max / 2)
        direct = psv[r_max]
        gap = abs(complex(est.value[0, 0]) - direct)
        ctx.check(f"pi_l2_within_tail[{tag}]", gap <= est.tail_bound, gap, est.tail_bound,
                  f"pi_l2(R={r_max / 2:g}) vs P2({r_max:g})")


def _exp_thm61(ctx: Context) -> None:
    p = ctx.p
    n = p["n_pulses"]
    # M is the mass of each half of a pulse; the profile builder takes the full bump scale
    prof = coeffs.thm61_profile(n, "fixed", 2.0 * p["M"])
    rs = sorted({k + f * 2.0 ** -k for k in range(1, n + 1) for f in (0.0, 0.5, 1.0)} | {n + 0.5})
    diag = spectral.limit_diagnostics(prof, p["lambda"], rs)
    ctx.csv("diagnostics.csv", io.DIAGNOSTICS_HEADER, io.diagnostics_rows(diag))
    w = p["window"]
    tail = diag.modulus[diag.r >= n - w + 1 - 1e-12]
    ratio = float(tail.max() / tail.min())
    ctx.report.update(ratio=ratio, target=math.cosh(p["M"]), classification=diag.classification,
                      stats=diag.stats)
    ctx.check("trailing_max_min_ratio", p["ratio_lo"] <= ratio <= p["ratio_hi"], ratio,
              [p["ratio_lo"], p["ratio_hi"]], f"cosh(M) = {math.cosh(p['M']):.6f}")
    ctx.check("classification", diag.classification == spectral.OSCILLATES, diag.classification,
              spectral.OSCILLATES)


def pulse_algebra_errors(rng: np.random.Generator, count: int) -> list:
    """Propagate one thm62 pulse at lam = 0 from (0, 1) and compare with the closed form."""
    out = []
    for _ in range(count):
        b = float(rng.uniform(0.1, 3.0))
        eps = float(rng.uniform(0.01, 1.0))
        xi = cmath.exp(1j * rng.uniform(-math.pi, math.pi))
        prof = coeffs.thm62_pulse(b, xi, eps)
        st = krein.KreinState.initial(0j, p=0j, p_star=1.0 + 0j)
        st = krein.advance(st, prof, 2 * eps)
        want_p = 0.5 * (1 - xi) * math.sinh(2 * b * eps)
        want_ps = 1 + (1 - xi.conjugate()) * math.sinh(b * eps) ** 2
        out.append((b, eps, xi, max(abs(st.true_p() - want_p), abs(st.true_p_star() - want_ps))))
    return out


def _exp_thm62(ctx: Context) -> None:
    p = ctx.p
    if p["check_pulse_algebra"]:
        rows = pulse_algebra_errors(ctx.config.rng("pulse-algebra"), p["n_pulse_checks"])
        ctx.csv("pulse_algebra.csv", ["b", "eps", "xi_re", "xi_im", "error"], rows)
        worst = max(r[-1] for r in rows)
        ctx.check("pulse_algebra", worst <= p["pulse_tol"], worst, p["pulse_tol"])

    n_max = p["n_max"]
    run = spectral.thm62_build_and_run(n_max, p["lambda0"])
    diag = run.diagnostics
    ctx.csv("diagnostics.csv", io.DIAGNOSTICS_HEADER, io.diagnostics_rows(diag))
    ns = diag.n
    top = ns >= n_max // 2
    mod = diag.modulus[top]
    spread = float((mod.max() - mod.min()) / mod.mean())
    ctx.check("modulus_spread", spread <= p["spread_tol"], spread, p["spread_tol"])

    drift = float(diag.phase[-1] - diag.phase[0])
    model = spectral.phase_drift_model(3, n_max)
    rel = abs(drift - model) / model
    ctx.check("phase_drift_vs_model", rel <= p["drift_rel_tol"], rel, p["drift_rel_tol"],
              f"drift {drift:.6f}, model {model:.6f}")

    last = ns > n_max // 10
    ratio = float(np.max(np.abs(diag.p[last]) / diag.modulus[last]))
    ctx.check("p_over_p_star_last_decade", ratio <= p["ratio_tol"], ratio, p["ratio_tol"])

    pi2 = abs(run.final_state.true_p_star()) ** 2
    hardy = spectral.hardy_integral(run.profile(), run.lam0, run.final_state.r)
    energy = 2 * run.lam0.imag * hardy.value
    rel_h = abs(pi2 - energy) / energy
    ctx.check("pi_vs_hardy", rel_h <= p["hardy_rel_tol"], rel_h, p["hardy_rel_tol"],
              f"|Pi|^2 {pi2:.10g}, 2 Im lam0 hardy {energy:.10g}")

    lp = coeffs.lp_norm(run.profile(), p["lp_p"])
    closed = coeffs.thm62_lp_series(p["lp_p"], 3, n_max)
    rel_lp = abs(lp.value - closed) / closed
    ctx.check("lp_partial_sum", rel_lp <= p["lp_tol"], rel_lp, p["lp_tol"])

    if p["check_witness"]:
        wit = spectral.phase_witness(diag, p["witness_targets"])
        ctx.report["witness"] = {"distances": wit.distances, "predicted_drift": wit.predicted_drift,
                                 "required_n": wit.required_n}
        ok = wit.applicable and bool(np.all(wit.distances <= p["witness_tol"]))
        detail = "" if wit.applicable else (
            f"predicted drift {wit.predicted_drift:.4f} < 2 pi; reaching 2 pi needs n_max ~ "
            f"{wit.required_n:.3g}, beyond any run")
        ctx.check("phase_witness", ok, float(np.max(wit.distances)), p["witness_tol"], detail)
    ctx.report.update(classification=diag.classification, stats=diag.stats,
                      ratio_error_C=run.ratio_error_C, pi=run.final_state.true_p_star())


def smooth_demo_system() -> sk.SakhnovichSystem:
    """m = 2 smooth system on [0, 10] used for the log-norm bound."""
    def a1(r):
        return np.array([[1j * math.sin(r), 0.2 + 0.1j], [-0.2 + 0.1j, -0.5j]])

    def a2(r):
        return np.array([[math.cos(r), 0.5], [0.3 * math.sin(2 * r), 1.0 / (1.0 + r)]]) * 0.8
    return sk.SakhnovichSystem(np.array([1.0, 2.0]), (), a1, a2, (0.0, 10.0))


def _exp_sakhnovich(ctx: Context) -> None:
    p = ctx.p
    m = p["m"]
    rng = ctx.config.rng("sakhnovich")
    lam = p["lambda"]
    lam0 = p["lambda0"]

    d = rng.uniform(0.5, 2.0, m)
    free = sk.SakhnovichSystem(d)
    rs = np.linspace(0.5, 5.0, 10)
    tr = sk.propagate_matrix(free, lam, 5.0, checkpoints=rs)
    err = 0.0
    for s in tr.states[1:]:
        want1 = np.diag(np.exp(1j * lam * d * s.r))
        want_g = np.diag((1 - np.exp(-2 * lam.imag * d * s.r)) / (2 * lam.imag))
        err = max(err, sk.fro(s.true_P1() - want1), sk.fro(s.true_P2() - np.eye(m)),
                  sk.fro(s.true_gram() - want_g))
    ctx.check("free_closed_form", err <= p["closed_tol"], err, p["closed_tol"])

    herm, worst_eig, ident = 0.0, 0.0, 0.0
    rows = []
    for i in range(p["n_systems"]):
        system = sk.random_system(rng, m=m, n_segments=10)
        end = system.segments[-1].end + 0.5
        mlam = complex(rng.uniform(-2, 2), rng.uniform(0.1, 2.0))
        mt = sk.propagate_matrix(system, mlam, end, checkpoints=np.linspace(0, end, 11)[1:-1])
        rep = sk.hermitian_psd_check(mt)
        rows.append((i, mlam, rep.hermitian_defect, rep.min_eig_scaled, rep.identity_residual))
        herm = max(herm, rep.hermitian_defect, rep.identity_residual)
        worst_eig = min(worst_eig, rep.min_eig_scaled)
        if i == 0:
            ctx.csv("matrix_trajectory.csv", io.matrix_header(m), io.matrix_rows(mt))
    ctx.csv("psd_suite.csv", ["index", "lambda_re", "lambda_im", "hermitian_defect", "min_eig_scaled",
                              "identity_residual"], rows)
    ctx.check("hermitian_psd_residual", herm <= p["psd_tol"], herm, p["psd_tol"])
    ctx.check("psd_min_eigenvalue", worst_eig >= -p["eig_tol"], worst_eig, -p["eig_tol"])

    system = sk.random_system(ctx.config.rng("bilinear"), m=m, n_segments=10)
    end = system.segments[-1].end + 0.5
    pair = sk.propagate_pair(system, lam0, lam, end, checkpoints=np.linspace(0, end, 11)[1:-1])
    bil = sk.lagrange_bilinear(pair)
    ctx.check("bilinear_identity", bil <= p["bilinear_tol"], bil, p["bilinear_tol"])

    prof = coeffs.random_step_profile(ctx.config.rng("embedding"), 30)
    end = prof.support_end + 1.0
    cps = np.linspace(0, end, 9)[1:-1]
    kt = krein.propagate(prof, lam, end, checkpoints=cps)
    mt = sk.propagate_matrix(sk.SakhnovichSystem.from_krein(prof), lam, end, checkpoints=cps)
    emb = 0.0
    for a, b in zip(kt.states, mt.states):
        emb = max(emb, abs(a.true_p() - b.true_P1()[0, 0]), abs(a.true_p_star() - b.true_P2()[0, 0]))
    ctx.check("scalar_embedding", emb <= p["embed_tol"], emb, p["embed_tol"])

    smooth = smooth_demo_system()
    mt = sk.propagate_matrix(smooth, lam, 10.0, checkpoints=np.linspace(0, 10, 201)[1:-1])
    margin = sk.log_norm_bound_check(mt)
    ctx.check("log_norm_bound", margin >= -p["lognorm_tol"], margin, -p["lognorm_tol"])


def _exp_discrete(ctx: Context) -> None:
    p = ctx.p
    N = p["N"]
    z = 0.3 + 0.4j
    pairs = opuc.evaluate_polys(opuc.zero_seq(), z, 50)
    err = max(abs(q.true_phi() - z ** q.n) + abs(q.true_phi_star() - 1) for q in pairs)
    ctx.check("zero_sequence_exact", err <= 1e-14, err, 1e-14)

    rng = ctx.config.rng("discrete")
    mag = rng.uniform(0, p["max_abs"], N)
    seq = opuc.explicit_seq(mag * np.exp(1j * rng.uniform(-math.pi, math.pi, N)), "random")
    worst = 0.0
    zs = [p["z_max"], 1j * p["z_max"], -0.5 + 0.3j, 0.1]
    for zz in zs:
        pr = opuc.evaluate_polys(seq, zz, N)
        worst = max(worst, opuc.discrete_energy_check(pr))
        if zz == zs[0]:
            ctx.csv("discrete_random.csv", io.DISCRETE_HEADER, io.discrete_rows(pr))
    ctx.check("discrete_energy_identity", worst <= p["energy_tol"], worst, p["energy_tol"])
    bal = opuc.unit_circle_balance(opuc.evaluate_polys(seq, cmath.exp(0.7j), N))
    ctx.check("unit_circle_balance", bal <= p["energy_tol"], bal, p["energy_tol"])

    # square-summable family: phi* Cauchy at z = 0.5i
    pr = opuc.evaluate_polys(opuc.power_seq(2.0), 0.5j, 2 * N)
    ns = [N // 8, N // 4, N // 2, N]
    cauchy = [abs(pr[2 * k].true_phi_star() - pr[k].true_phi_star()) for k in ns]
    ctx.check("summable_cauchy", all(b < a for a, b in zip(cauchy, cauchy[1:])), cauchy)
    # non-summable family: running sum unbounded at z = 0.5
    pr = opuc.evaluate_polys(opuc.power_seq(0.5), 0.5, N)
    marks = [k for k in (10, 100, 1000) if k < N] + [N]
    sums = [pr[k].true_sum() for k in marks]
    grows = all(b > a * min(10.0, k1 / k0) for a, b, k0, k1 in zip(sums, sums[1:], marks, marks[1:]))
    ctx.check("divergent_sum_unbounded", grows, sums, "x10 per decade")

    table = opuc.analogy_table(coeffs.zero_profile(), opuc.zero_seq())
    ctx.report["analogy_zero"] = [(r.side, r.classification, r.limit) for r in table]
    run = spectral.thm62_build_and_run(p["thm62_n_max"], 1j, with_cesaro=False)
    disc = opuc.discrete_diagnostics(opuc.unit_phase_drift_seq(), 0.5j, p["thm62_n_max"])
    ctx.report["analogy_phase_drift"] = {
        "continuous": run.diagnostics.classification,
        "discrete": disc.classification,
        "discrete_class": opuc.unit_phase_drift_seq().l2_class,
    }


def _exp_isometry(ctx: Context) -> None:
    p = ctx.p
    window = (p["lambda_min"], p["lambda_max"])
    f = lambda r: np.where((r >= 0) & (r <= 1), 1.0, 0.0)
    res = spectral.verify_isometry(coeffs.zero_profile(), f, window, 1.0, n_lambda=p["n_lambda"])
    ctx.check("fourier_plancherel", res.defect <= p["tol"], res.defect, p["tol"],
              f"squared-norm defect {res.squared_defect:.4g}")
    prof = coeffs.random_step_profile(ctx.config.rng("isometry"), 10, max_abs=1.0, max_len=0.1)
    gen = spectral.verify_isometry(prof, f, window, 1.0, n_lambda=p["n_lambda"])
    ctx.report.update(fourier_defect=res.defect, general_defect=gen.defect,
                      general_squared_defect=gen.squared_defect)


def _exp_cesaro(ctx: Context) -> None:
    p = ctx.p
    lam = p["lambda"]
    rs = np.linspace(1.0, 100.0, 100)
    ces = spectral.cesaro_series(coeffs.zero_profile(), lam, rs)
    err = float(np.max(np.abs(ces - 1.0)))
    ctx.check("zero_profile_average", err <= p["tol"], err, p["tol"])
    run = spectral.thm62_build_and_run(p["n_max"], lam)
    diag = run.diagnostics
    ctx.csv("cesaro.csv", io.DIAGNOSTICS_HEADER, io.diagnostics_rows(diag))
    cauchy = spectral.cauchy_window(diag.cesaro, p["cauchy_rel_tol"])
    label = "cauchy" if cauchy else "oscillating"
    ctx.report.update(cesaro_classification=label, final_average=complex(diag.cesaro[-1]))
    ctx.check("classification_emitted", label in ("cauchy", "oscillating"), label)


EXPERIMENTS = {
    "fourier": (_exp_fourier, "a = 0 baseline, random-profile Lagrange identity, transfer vs RK4",
                dict(lambda_min=-10.0, lambda_max=10.0, lambda_step=0.05, r=10.0, tol=1e-12,
                     check_lagrange=True, n_random=200, max_segments=100, max_abs=2.0,
                     lagrange_tol=1e-8, check_oracle=True, grid_points=5, oracle_step=1e-5,
                     oracle_tol=1e-9)),
    "l2-decay": (_exp_l2_decay, "a = (1+r)^-s: decay of p and Cauchy behaviour of p*",
                 dict(s=0.75, lambda1=1j, lambda2=1 + 1j, r_max=200.0, p_final_tol=1e-3)),
    "thm61": (_exp_thm61, "bounded-mass pulse train: oscillating |p*|",
              dict(n_pulses=30, M=1.0, **{"lambda": 1j}, window=10, ratio_lo=1.40, ratio_hi=1.70)),
    "thm62": (_exp_thm62, "phase-drift pulse train: modulus converges, phase drifts",
              dict(n_max=100_000, lambda0=1j, spread_tol=0.01, drift_rel_tol=0.25, ratio_tol=1e-3,
                   hardy_rel_tol=0.02, lp_p=3.0, lp_tol=1e-10, check_pulse_algebra=True,
                   n_pulse_checks=20, pulse_tol=1e-12, check_witness=True, witness_targets=8,
                   witness_tol=0.05)),
    "sakhnovich-demo": (_exp_sakhnovich, "matrix system identities and the scalar embedding",
                        dict(m=2, n_systems=50, lambda0=1j, **{"lambda": 2j}, closed_tol=1e-12,
                             psd_tol=1e-7, eig_tol=1e-8, bilinear_tol=1e-7, embed_tol=1e-9,
                             lognorm_tol=1e-6)),
    "discrete": (_exp_discrete, "Szego recursion cross-checks",
                 dict(N=10_000, max_abs=0.6, z_max=0.9, energy_tol=1e-10, thm62_n_max=10_000)),
    "isometry": (_exp_isometry, "Plancherel defect of the generalized Fourier transform",
                 dict(lambda_min=-50.0, lambda_max=50.0, n_lambda=20001, tol=0.01)),
    "cesaro": (_exp_cesaro, "running averages of p*",
               dict(**{"lambda": 1j}, n_max=100_000, tol=1e-12, cauchy_rel_tol=0.01)),
}


def list_experiments() -> list:
    return [(k, v[1]) for k, v in EXPERIMENTS.items()]


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        raw[key] = value
    exp = raw.pop("experiment", None)
    if exp is None:
        raise ConfigError("missing experiment id")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}")
    seed = _coerce("seed", raw.pop("seed", str(DEFAULT_SEED)), 0)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    out = raw.pop("output_dir", "")
    defaults = EXPERIMENTS[exp][2]
    params = dict(defaults)
    for key, value in raw.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} for experiment {exp!r}")
        params[key] = _coerce(key, value, defaults[key])
    for key, v in params.items():
        if key.endswith("tol") and not v > 0:
            raise ConfigError(f"tolerance {key!r} must be > 0")
    return ExperimentConfig(exp, params, seed, out)


@dataclass
class RunResult:
    status: int
    run_dir: Optional[Path]
    checks: list
    report: dict
    error: str = ""


def _summary_text(cfg: ExperimentConfig, ctx: Context, elapsed: float, status: int) -> str:
    lines = [f"experiment {cfg.experiment}  seed {cfg.seed}  status {status}  ({elapsed:.2f} s)"]
    for c in ctx.checks:
        mark = "PASS" if c.passed else "FAIL"
        val = c.value if not isinstance(c.value, float) else f"{c.value:.6g}"
        tail = f"  [{c.detail}]" if c.detail else ""
        lines.append(f"  {mark}  {c.name}: {val} (tol {c.tolerance}){tail}")
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig) -> RunResult:
    run_dir = config.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.resolved").write_text(config.resolved_text())
    ctx = Context(config, run_dir)
    runner = EXPERIMENTS[config.experiment][0]
    t0 = time.perf_counter()
    error = ""
    try:
        with np.errstate(over="raise", invalid="raise"):
            runner(ctx)
        status = EXIT_OK if all(c.passed for c in ctx.checks) else EXIT_FAIL
    except (krein.PropagationError, FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        status = EXIT_NUMERIC
        error = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0
    summary = {
        "experiment": config.experiment, "seed": config.seed, "status": status, "error": error,
        "checks": [c.__dict__ for c in ctx.checks], "report": ctx.report, "artifacts": ctx.artifacts,
    }
    io.write_json(run_dir / "summary.json", summary)
    (run_dir / "summary.txt").write_text(_summary_text(config, ctx, elapsed, status)
                                         + (f"error: {error}\n" if error else ""))
    return RunResult(status, run_dir, ctx.checks, ctx.report, error)


# ---------------------------------------------------------------------------
# regression comparison
# ---------------------------------------------------------------------------

@dataclass
class FileDiff:
    name: str
    max_diff: dict                      # column -> max scaled difference
    failures: list                      # (column, row, run value, golden value)
    structural: str = ""

    @property
    def passed(self) -> bool:
        return not self.failures and not self.structural


@dataclass
class DiffReport:
    files: list

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.files)

    def lines(self) -> list:
        out = []
        for f in self.files:
            if f.structural:
                out.append(f"{f.name}: {f.structural}")
            for col, row, a, b in f.failures:
                out.append(f"{f.name}: column {col} row {row}: {a} vs {b}")
        return out


def regression_compare(run_dir, golden_dir, tolerances: Optional[dict] = None,
                       default_tol: float = 1e-9) -> DiffReport:
    """Compare every CSV in golden_dir with its namesake in run_dir.

    A cell passes when |run - golden| <= tol * max(1, |golden|); non-numeric
    cells must match exactly.
    """
    run_dir, golden_dir = Path(run_dir), Path(golden_dir)
    tolerances = tolerances or {}
    golden = sorted(golden_dir.glob("*.csv"))
    if not golden:
        raise FileNotFoundError(f"no CSV artifacts in {golden_dir}")
    missing = [g.name for g in golden if not (run_dir / g.name).exists()]
    if missing:
        raise FileNotFoundError(f"missing in {run_dir}: {', '.join(missing)}")
    files = []
    for g in golden:
        gh, grows = io.read_csv(g)
        rh, rrows = io.read_csv(run_dir / g.name)
        if gh != rh or len(grows) != len(rrows):
            files.append(FileDiff(g.name, {}, [], "header or row count differs"))
            continue
        maxd = {c: 0.0 for c in gh}
        fails = []
        for i, (a_row, b_row) in enumerate(zip(rrows, grows)):
            for col, a, b in zip(gh, a_row, b_row):
                try:
                    x, y = float(a), float(b)
                except ValueError:
                    if a != b:
                        fails.append((col, i, a, b))
                    continue
                if math.isnan(x) and math.isnan(y):
                    continue
                d = abs(x - y) / max(1.0, abs(y))
                maxd[col] = max(maxd[col], d)
                if not d <= tolerances.get(col, default_tol):
                    fails.append((col, i, a, b))
        files.append(FileDiff(g.name, maxd, fails))
    return DiffReport(files)
