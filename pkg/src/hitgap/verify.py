"""Executable checks of the hitting-time / spectral-gap relations.

Every check returns :class:`VerificationReport` records.  A record carries a
single decisive number, ``violation``, shaped so that small or negative is
good; ``passed`` is derived from ``violation`` and ``tolerance`` alone.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg

from . import corpus as corpus_mod
from .chain_model import (
    DiffusionSpec1D,
    FiniteChain,
    InvariantMeasure,
    TargetSet,
    discretize_diffusion_1d,
    double_well_spec,
    invariant_measure,
    ou_spec,
    require_valid,
)
from .dirichlet_spectral import dirichlet_eigenvalue, spectral_gap
from .errors import BlowupError, GeometryError, HitgapError
from .potentials import (
    blowup_threshold,
    exp_moment_potential,
    lyapunov_potential,
    moment_potentials,
    psi_potential_contour,
    psi_potential_direct,
    weak_residual,
    z_potential,
)
from .psi import PsiFunction, bump, check_derivative_mode, smoothstep

THEOREM_RTOL = 1e-8
IDENTITY_TOL = 1e-9
COROLLARY_TOL = 1e-8
DRIFT_TOL = 1e-10
INVERSION_TOL = 1e-6


@dataclass
class VerificationReport:
    check_id: str
    instance_id: str
    claimed: str
    measured: dict
    violation: float
    tolerance: float
    strict: bool = False
    status: str = "checked"
    detail: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        if self.status == "skipped":
            return True
        # -inf is infinite slack; nan and +inf are failures
        if self.status != "checked" or math.isnan(self.violation) or self.violation == math.inf:
            return False
        if self.strict:
            return self.violation < self.tolerance
        return self.violation <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "instance_id": self.instance_id,
            "claimed": self.claimed,
            "measured": self.measured,
            "violation": self.violation,
            "tolerance": self.tolerance,
            "strict": self.strict,
            "status": self.status,
            "detail": self.detail,
            "pass": self.passed,
        }


def _skip(check_id, instance_id, claimed, why) -> VerificationReport:
    return VerificationReport(check_id, instance_id, claimed, {}, 0.0, 0.0, status="skipped", detail=why)


def _error(check_id, instance_id, claimed, exc) -> VerificationReport:
    return VerificationReport(check_id, instance_id, claimed, {}, math.inf, 0.0, status="error",
                              detail=f"{type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# individual checks

CLAIM_THEOREM = "alpha_star(K) >= pi(K) * gap  (threshold at least pi(K)/c)"
CLAIM_POTENTIAL = "h_{-alpha} = 1 on K and E(h, u) = alpha (h, u)_pi for every u vanishing on K"
CLAIM_ZPOT = "E(h_z, u) = -z (h_z, u)_pi for every u vanishing on K"
CLAIM_MOMENT = "||h_z^m||_pi / m! <= (Re z)^-m"
CLAIM_COROLLARY = "E(h_psi, u) = (h_psi', u)_pi for every u vanishing on K"
CLAIM_INVERSION = "vertical-line inversion of z-potentials reproduces E_x psi(tau_K)"
CLAIM_DRIFT = "Q phi = -alpha_tilde phi off K; b = max_K (Q phi + alpha_tilde phi)"
CLAIM_CYCLE = "q < 1 and e^{a S}(1-q)^-1 sup_E phi dominates sup_K e^{tQ} phi on [0, S]"


def check_theorem_bound(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet,
                        instance_id: str = "", gap: Optional[float] = None) -> VerificationReport:
    cid = "theorem_bound"
    if gap is None:
        gap = spectral_gap(chain, measure).gap
    piK = measure.mass(K)
    rhs = piK * gap
    if K.is_full:
        measured = {"alpha_star": math.inf, "pi_K": piK, "gap": gap, "rhs": rhs, "slack": math.inf}
        return VerificationReport(cid, instance_id, CLAIM_THEOREM, measured, -math.inf, 0.0)
    lam = dirichlet_eigenvalue(chain, measure, K)
    slack = lam - rhs
    measured = {"alpha_star": lam, "pi_K": piK, "gap": gap, "rhs": rhs, "slack": slack}
    return VerificationReport(cid, instance_id, CLAIM_THEOREM, measured, -slack / max(1.0, lam), THEOREM_RTOL)


def check_potential_properties(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, alpha: float,
                               instance_id: str = "") -> VerificationReport:
    """Raises :class:`BlowupError` when ``alpha >= alpha_star``."""
    p = exp_moment_potential(chain, measure, K, alpha)
    on_K = float(np.max(np.abs(p.values[K.indices] - 1.0)))
    weak = p.extra.get("weak_residual", 0.0)
    measured = {"alpha": float(alpha), "alpha_star": p.extra["alpha_star"], "on_K_error": on_K,
                "weak_residual": weak, "min_h": float(np.min(p.values))}
    return VerificationReport("potential_properties", instance_id, CLAIM_POTENTIAL, measured,
                              max(on_K, weak), IDENTITY_TOL)


def check_z_identity(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, z,
                     instance_id: str = "") -> VerificationReport:
    p = z_potential(chain, measure, K, z)
    weak = p.extra.get("weak_residual", 0.0)
    measured = {"z_re": float(np.real(z)), "z_im": float(np.imag(z)), "weak_residual": weak}
    return VerificationReport("z_identity", instance_id, CLAIM_ZPOT, measured, weak, IDENTITY_TOL)


def check_moment_bound(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, z, m_max: int = 5,
                       instance_id: str = "") -> VerificationReport:
    zr = float(np.real(z))
    hs = moment_potentials(chain, K, z, m_max)
    ratios = []
    for m, h in enumerate(hs[1:], start=1):
        norm = math.sqrt(float(np.sum(measure.pi * np.abs(h) ** 2)))
        ratios.append(norm / math.factorial(m) * zr ** m)
    measured = {"z_re": zr, "z_im": float(np.imag(z)), "ratio_to_bound": ratios}
    return VerificationReport("moment_bound", instance_id, CLAIM_MOMENT, measured, max(ratios) - 1.0, 0.0)


def check_corollary_identity(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, psi: PsiFunction,
                             instance_id: str = "") -> VerificationReport:
    check_derivative_mode(psi)
    h = psi_potential_direct(chain, K, psi).values
    hp = psi_potential_direct(chain, K, psi.prime()).values
    res = weak_residual(chain, measure, K, h, 0.0, source=hp)
    measured = {"psi": psi.name, "weak_residual": res, "h_psi_max": float(np.max(np.abs(h)))}
    return VerificationReport("corollary_identity", instance_id, CLAIM_COROLLARY, measured, res, COROLLARY_TOL)


def check_contour_inversion(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, psi: PsiFunction,
                            sigmas=(0.5, 1.0, 2.0), instance_id: str = "") -> VerificationReport:
    direct = psi_potential_direct(chain, K, psi).values
    vals = [psi_potential_contour(chain, measure, K, psi, sigma=s).values for s in sigmas]
    vs_direct = max(float(np.max(np.abs(v - direct))) for v in vals)
    spread = max(float(np.max(np.abs(a - b))) for a in vals for b in vals)
    measured = {"sigmas": list(sigmas), "max_abs_vs_direct": vs_direct, "sigma_spread": spread}
    return VerificationReport("contour_inversion", instance_id, CLAIM_INVERSION, measured,
                              max(vs_direct, spread), INVERSION_TOL)


def check_lyapunov_drift(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, alpha_tilde: float,
                         instance_id: str = "", tolerance: float = DRIFT_TOL) -> VerificationReport:
    p = lyapunov_potential(chain, measure, K, alpha_tilde)
    measured = {"alpha_tilde": float(alpha_tilde), "drift_residual": p.extra["drift_residual"],
                "drift_constant": p.extra["drift_constant"], "phi_max": float(np.max(p.values))}
    return VerificationReport("lyapunov_drift", instance_id, CLAIM_DRIFT, measured,
                              p.extra["drift_residual"], tolerance)


@dataclass(frozen=True)
class CycleBoundSpec:
    K: TargetSet
    S: TargetSet
    a: float
    alpha_tilde: float
    S_horizon: float

    def __post_init__(self):
        if len(self.K) == 0 or len(self.S) == 0:
            raise GeometryError("K and S must both be nonempty")
        overlap = set(self.K.members) & set(self.S.members)
        if overlap:
            raise GeometryError(f"K and S must be disjoint, shared states {sorted(overlap)}")
        if not (self.a > 0 and self.S_horizon > 0):
            raise GeometryError("a and S_horizon must be positive")


def enclosed_region(chain: FiniteChain, K: TargetSet, S: TargetSet) -> np.ndarray:
    """States reachable from K without passing through S, together with S."""
    A = chain.offdiag() > 0
    inS = S.mask
    seen = K.mask.copy()
    frontier = list(K.indices)
    while frontier:
        i = frontier.pop()
        if inS[i]:
            continue
        for j in np.flatnonzero(A[i]):
            if not seen[j]:
                seen[j] = True
                frontier.append(j)
    return np.flatnonzero(seen | inS)


def cycle_bound(chain: FiniteChain, measure: InvariantMeasure, spec: CycleBoundSpec,
                instance_id: str = "", grid: int = 101) -> VerificationReport:
    K, S = spec.K, spec.S
    E = enclosed_region(chain, K, S)
    inner = np.setdiff1d(E, np.union1d(K.indices, S.indices))
    if inner.size == 0:
        raise GeometryError("no states strictly between K and S")
    q_KS = float(np.max(z_potential(chain, None, S, spec.a).values[K.indices]))
    q_SK = float(np.max(z_potential(chain, None, K, spec.a).values[S.indices]))
    q = max(q_KS, q_SK)
    phi = lyapunov_potential(chain, measure, K, spec.alpha_tilde).values
    bound = math.exp(spec.a * spec.S_horizon) / (1.0 - q) * float(np.max(phi[E])) if q < 1 else math.inf
    ts = np.linspace(0.0, spec.S_horizon, grid)
    paths = scipy.sparse.linalg.expm_multiply(chain.sparse().tocsc(), phi, start=0.0, stop=spec.S_horizon,
                                              num=grid, endpoint=True)
    direct = np.max(paths[:, K.indices], axis=1)
    violation = max(q - 1.0, float(np.max(direct - bound)))
    measured = {"q": q, "q_K_to_S": q_KS, "q_S_to_K": q_SK, "bound": bound,
                "direct_max": float(np.max(direct)), "grid_times": int(ts.size),
                "enclosed_size": int(E.size), "alpha_tilde": spec.alpha_tilde}
    return VerificationReport("cycle_bound", instance_id, CLAIM_CYCLE, measured, violation, 0.0, strict=True)


# ---------------------------------------------------------------------------
# equivalence suite


def _theorem_and_monotone(prefix, chain, measure, gap, targets):
    out = []
    lams = {}
    for name, K in targets:
        if K.is_full:
            out.append(_skip(f"{prefix}.theorem_bound", name, CLAIM_THEOREM, "K is the full state space"))
            continue
        r = check_theorem_bound(chain, measure, K, name, gap=gap)
        r.check_id = f"{prefix}.theorem_bound"
        lams[name] = (K, r.measured["alpha_star"])
        out.append(r)
    pos = all(lam > 0 for _, lam in lams.values())
    out.append(VerificationReport(f"{prefix}.positive_gap", "all-K",
                                  "all tested thresholds positive implies positive gap",
                                  {"gap": gap, "all_thresholds_positive": pos},
                                  0.0 if (gap > 0 or not pos) else 1.0, 0.0))
    names = sorted(lams)
    for a in names:
        for b in names:
            Ka, la = lams[a]
            Kb, lb = lams[b]
            if a != b and set(Ka.members) < set(Kb.members):
                out.append(VerificationReport(f"{prefix}.monotone", f"{a}<{b}",
                                              "enlarging K does not decrease alpha_star",
                                              {"alpha_small": la, "alpha_large": lb},
                                              (la - lb) / max(1.0, lb), THEOREM_RTOL))
    return out


def check_equivalence_suite(instance, config: Optional[dict] = None) -> list:
    """Gap/threshold consistency on a diffusion spec or a list of corpus instances.

    ``config`` keys (diffusion case): ``name``, ``grid_points``,
    ``coarse_points``, ``intervals``, ``reference_gap``, ``stability_interval``,
    ``compare_with`` (a ``(name, gap, {interval: alpha_star})`` tuple).
    """
    cfg = dict(config or {})
    if isinstance(instance, DiffusionSpec1D):
        return _diffusion_equivalence(instance, cfg)
    out = []
    for inst in instance:
        measure = invariant_measure(inst.chain)
        gap = spectral_gap(inst.chain, measure).gap
        targets = [(f"{inst.instance_id}/K{j}", K) for j, K in enumerate(inst.targets)]
        # nested pairs: each K together with its union with the next one
        for j in range(len(inst.targets) - 1):
            union = tuple(sorted(set(inst.targets[j].members) | set(inst.targets[j + 1].members)))
            targets.append((f"{inst.instance_id}/K{j}uK{j + 1}", TargetSet(union, inst.chain.n)))
        out.extend(_theorem_and_monotone("equivalence", inst.chain, measure, gap, targets))
    return out


def _diffusion_equivalence(spec: DiffusionSpec1D, cfg: dict) -> list:
    name = cfg.get("name", "diffusion")
    prefix = f"equivalence.{name}"
    fine = int(cfg.get("grid_points", spec.grid or 2000))
    chain = discretize_diffusion_1d(spec, fine)
    measure = invariant_measure(chain)
    gap = spectral_gap(chain, measure).gap
    intervals = [tuple(iv) for iv in cfg.get("intervals", [(-1.0, 1.0), (-0.5, 0.5), (-2.0, 2.0)])]
    targets = [(f"{name}/[{lo:g},{hi:g}]", TargetSet.from_interval(chain, lo, hi)) for lo, hi in intervals]
    if cfg.get("include_full", True):
        targets.append((f"{name}/full", TargetSet(tuple(range(chain.n)), chain.n)))
    out = _theorem_and_monotone(prefix, chain, measure, gap, targets)
    alphas = {iv: r.measured["alpha_star"] for iv, r in
              zip(intervals, [r for r in out if r.check_id.endswith("theorem_bound") and r.status == "checked"])}
    ref = cfg.get("reference_gap")
    if ref is not None:
        out.append(VerificationReport(f"{prefix}.gap_reference", name, f"gap within 1% of {ref}",
                                      {"gap": gap, "reference": ref, "grid_points": fine},
                                      abs(gap - ref) / ref, 0.01))
    stab = cfg.get("stability_interval")
    if stab is not None:
        coarse_n = int(cfg.get("coarse_points", fine // 2))
        coarse = discretize_diffusion_1d(spec, coarse_n)
        cm = invariant_measure(coarse)
        lo, hi = stab
        a_c = dirichlet_eigenvalue(coarse, cm, TargetSet.from_interval(coarse, lo, hi))
        a_f = dirichlet_eigenvalue(chain, measure, TargetSet.from_interval(chain, lo, hi))
        out.append(VerificationReport(f"{prefix}.threshold_stability", f"{name}/[{lo:g},{hi:g}]",
                                      f"threshold changes <= 2% from {coarse_n} to {fine} points",
                                      {"coarse": a_c, "fine": a_f, "coarse_points": coarse_n, "fine_points": fine},
                                      abs(a_f - a_c) / a_f, 0.02))
    cmp = cfg.get("compare_with")
    if cmp is not None:
        other, other_gap, other_alpha = cmp
        out.append(VerificationReport(f"{prefix}.smaller_gap", f"{name}<{other}",
                                      f"gap below that of {other}", {"gap": gap, "other_gap": other_gap},
                                      gap - other_gap, 0.0, strict=True))
        for iv, a_other in other_alpha.items():
            if iv in alphas:
                out.append(VerificationReport(f"{prefix}.smaller_threshold", f"{name}<{other}/[{iv[0]:g},{iv[1]:g}]",
                                              f"threshold below that of {other}",
                                              {"alpha_star": alphas[iv], "other_alpha_star": a_other},
                                              alphas[iv] - a_other, 0.0, strict=True))
    for r in out:
        r.measured.setdefault("gap", gap)
    return out


def diffusion_summary(spec: DiffusionSpec1D, grid_points: int, intervals) -> tuple:
    chain = discretize_diffusion_1d(spec, grid_points)
    m = invariant_measure(chain)
    gap = spectral_gap(chain, m).gap
    alphas = {tuple(iv): dirichlet_eigenvalue(chain, m, TargetSet.from_interval(chain, *iv)) for iv in intervals}
    return gap, alphas


# ---------------------------------------------------------------------------
# suite orchestration

DEFAULT_SUITE = {
    "corpus_seed": 0,
    "corpus_size": 200,
    "targets_per_chain": 5,
    "n_max": 50,
    "fractions": [0.25, 0.5, 0.9],
    "zs": [[1.0, 0.0], [2.0, 0.0], [1.0, 1.0]],
    "m_max": 5,
    "corollary_instances": 20,
    "ou_grid": 2000,
    "ou_coarse": 1000,
    "checks": [
        "theorem_bound",
        "potential_properties",
        "z_identity",
        "moment_bound",
        "corollary_identity",
        "contour_inversion",
        "lyapunov_drift",
        "cycle_bound",
        "equivalence",
    ],
    "mc_samples": 20000,
    "workers": 1,
}

SUITE_CHECKS = frozenset(DEFAULT_SUITE["checks"]) | {"montecarlo"}


@dataclass
class SuiteResult:
    records: list
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def summary(self) -> dict:
        by = {}
        for r in self.records:
            key = r.check_id.split(".")[0]
            s = by.setdefault(key, {"total": 0, "passed": 0, "failed": 0, "skipped": 0, "errors": 0})
            s["total"] += 1
            if r.status == "skipped":
                s["skipped"] += 1
            elif r.status == "error":
                s["errors"] += 1
            s["passed" if r.passed else "failed"] += 1
        total = sum(s["total"] for s in by.values())
        failed = sum(s["failed"] for s in by.values())
        return {"total": total, "passed": total - failed, "failed": failed, "by_check": dict(sorted(by.items()))}


def _guard(check_id, instance_id, claimed, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except HitgapError as exc:
        return _error(check_id, instance_id, claimed, exc)


def _corpus_block(inst, cfg, checks) -> list:
    chain = require_valid(inst.chain)
    measure = invariant_measure(chain)
    gap = spectral_gap(chain, measure).gap
    out = []
    zs = [complex(a, b) if b else a for a, b in cfg["zs"]]
    for j, K in enumerate(inst.targets):
        iid = f"{inst.instance_id}/K{j}"
        if "theorem_bound" in checks:
            out.append(check_theorem_bound(chain, measure, K, iid, gap=gap))
        lam = dirichlet_eigenvalue(chain, measure, K)
        if "potential_properties" in checks:
            for f in cfg["fractions"]:
                out.append(_guard("potential_properties", f"{iid}/a{f:g}", CLAIM_POTENTIAL,
                                  check_potential_properties, chain, measure, K, f * lam, f"{iid}/a{f:g}"))
        for z in zs:
            zid = f"{iid}/z{np.real(z):g}{np.imag(z):+g}i"
            if "z_identity" in checks:
                out.append(check_z_identity(chain, measure, K, z, zid))
            if "moment_bound" in checks:
                out.append(check_moment_bound(chain, measure, K, z, cfg["m_max"], zid))
        if "lyapunov_drift" in checks and j == 0:
            out.append(_guard("lyapunov_drift", iid, CLAIM_DRIFT,
                              check_lyapunov_drift, chain, measure, K, 0.5 * lam, iid))
    return out


def _fixed_instances(cfg, checks) -> list:
    out = []
    two = corpus_mod.two_state()
    m2 = invariant_measure(two)
    K0 = TargetSet((0,), 2)
    bd = corpus_mod.birth_death_20()
    mbd = invariant_measure(bd)
    Kbd = TargetSet((0,), 20)
    if "theorem_bound" in checks:
        out.append(check_theorem_bound(two, m2, K0, "two_state/K{0}"))
    if "potential_properties" in checks:
        out.append(check_potential_properties(two, m2, K0, 1.0, "two_state/K{0}/a1"))
    if "lyapunov_drift" in checks:
        out.append(check_lyapunov_drift(two, m2, K0, 1.0, "two_state/K{0}"))
    if "corollary_identity" in checks:
        ss = smoothstep()
        out.append(check_corollary_identity(two, m2, K0, ss, "two_state/K{0}/smoothstep"))
        out.append(check_corollary_identity(bd, mbd, Kbd, ss, "bd20/K{0}/smoothstep"))
        count = int(cfg["corollary_instances"])
        for inst in corpus_mod.random_corpus(count, 1, cfg["n_max"], cfg["corpus_seed"])[:count]:
            m = invariant_measure(inst.chain)
            out.append(check_corollary_identity(inst.chain, m, inst.targets[0], ss,
                                                f"{inst.instance_id}/K0/smoothstep"))
    if "contour_inversion" in checks:
        b = bump()
        out.append(check_contour_inversion(two, m2, K0, b, instance_id="two_state/K{0}/bump"))
        out.append(check_contour_inversion(bd, mbd, Kbd, b, instance_id="bd20/K{0}/bump"))
    if "cycle_bound" in checks:
        bd5 = corpus_mod.birth_death_uniform(5)
        m5 = invariant_measure(bd5)
        K5 = TargetSet((0,), 5)
        lam5 = dirichlet_eigenvalue(bd5, m5, K5)
        spec5 = CycleBoundSpec(K5, TargetSet((3,), 5), 1.0, 0.5 * lam5, 1.0)
        out.append(cycle_bound(bd5, m5, spec5, "bd5/K{0}/S{3}"))
    return out


def _ou_block(cfg, checks) -> list:
    out = []
    spec = ou_spec()
    chain = discretize_diffusion_1d(spec, cfg["ou_grid"])
    measure = invariant_measure(chain)
    K = TargetSet.from_interval(chain, -1.0, 1.0)
    gap = spectral_gap(chain, measure).gap
    alpha = 0.5 * measure.mass(K) * gap
    if "lyapunov_drift" in checks:
        out.append(check_lyapunov_drift(chain, measure, K, alpha, "ou/[-1,1]", tolerance=1e-9))
    if "cycle_bound" in checks:
        x = np.asarray(chain.labels, dtype=float)
        shell = (int(np.argmin(np.abs(x + 2.0))), int(np.argmin(np.abs(x - 2.0))))
        cspec = CycleBoundSpec(K, TargetSet(shell, chain.n), 1.0, alpha, 1.0)
        out.append(cycle_bound(chain, measure, cspec, "ou/[-1,1]/S|x|=2"))
    if "equivalence" in checks:
        dw = double_well_spec()
        intervals = [(-1.0, 1.0), (-0.5, 0.5), (-2.0, 2.0), (0.5, 1.5)]
        ou_gap, ou_alpha = gap, {iv: dirichlet_eigenvalue(chain, measure, TargetSet.from_interval(chain, *iv))
                                 for iv in intervals}
        out.extend(check_equivalence_suite(spec, {
            "name": "ou", "grid_points": cfg["ou_grid"], "coarse_points": cfg["ou_coarse"],
            "intervals": intervals, "reference_gap": 1.0, "stability_interval": (-1.0, 1.0)}))
        out.extend(check_equivalence_suite(dw, {
            "name": "double_well", "grid_points": 800, "intervals": intervals,
            "compare_with": ("ou", ou_gap, {(0.5, 1.5): ou_alpha[(0.5, 1.5)]})}))
    return out


def _montecarlo_block(cfg, seed) -> list:
    from .montecarlo import estimate_exp_moment, sample_hitting_time_ctmc

    two = corpus_mod.two_state()
    m2 = invariant_measure(two)
    K0 = TargetSet((0,), 2)
    exact = exp_moment_potential(two, m2, K0, 0.5).values[1]
    sample = sample_hitting_time_ctmc(two, 1, K0, int(cfg["mc_samples"]), seed)
    est = estimate_exp_moment(sample, 0.5, alpha_star=2.0)
    z = abs(est.mean - exact) / est.std_error
    return [VerificationReport("montecarlo", "two_state/x1/a0.5", "sample mean of e^{alpha tau} matches the chain solve",
                               {"estimate": est.mean, "oracle": float(exact), "std_error": est.std_error, "z": z},
                               z, 4.0)]


def run_suite(config: Optional[dict] = None, seed: int = 0) -> SuiteResult:
    cfg = dict(DEFAULT_SUITE)
    cfg.update(config or {})
    checks = set(cfg["checks"])
    unknown = checks - SUITE_CHECKS
    if unknown:
        from .errors import ConfigError
        raise ConfigError([f"unknown check name {c!r}" for c in sorted(unknown)])
    timings = {}
    records = []

    t0 = time.perf_counter()
    corpus = corpus_mod.random_corpus(cfg["corpus_size"], cfg["targets_per_chain"], cfg["n_max"], cfg["corpus_seed"])
    for inst in corpus:
        require_valid(inst.chain)
    workers = max(1, int(cfg.get("workers", 1)))
    with ThreadPoolExecutor(workers) as pool:
        for block in pool.map(lambda inst: _corpus_block(inst, cfg, checks), corpus):
            records.extend(block)
    if "equivalence" in checks:
        records.extend(check_equivalence_suite(corpus[: min(len(corpus), 50)]))
    timings["corpus"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    records.extend(_fixed_instances(cfg, checks))
    timings["fixed"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    records.extend(_ou_block(cfg, checks))
    timings["diffusions"] = time.perf_counter() - t0

    if "montecarlo" in checks:
        t0 = time.perf_counter()
        records.extend(_montecarlo_block(cfg, seed))
        timings["montecarlo"] = time.perf_counter() - t0

    records.sort(key=lambda r: (r.check_id, r.instance_id))
    return SuiteResult(records, timings)
