"""Hitting-time potentials of a finite chain.

Everything reduces to linear algebra on the sub-generator ``Q_cc`` of the
complement of ``K``.  Writing ``r = Q_cK 1`` for the rate into ``K``:

* z-potential ``h_z = E_x exp(-z tau)``:  ``(Q_cc - z) h = -r``, ``h = 1`` on K
* exponential moment ``E_x exp(alpha tau)``: the same with ``z = -alpha``,
  finite only for ``alpha`` below the principal eigenvalue of ``-Q_cc``
* moments ``h^m = d^m h_z / dz^m = (-1)^m E_x tau^m exp(-z tau)``:
  ``(Q_cc - z) h^m = m h^{m-1}``, ``h^m = 0`` on K
* ``h_psi = E_x psi(tau)``: either the phase-type integral
  ``psi(0) + int psi'(t) P_x(tau > t) dt`` or the vertical-line inversion
  ``(1/2 pi i) int Psi(z) h_z dz``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.integrate import quad_vec

from .chain_model import FiniteChain, InvariantMeasure, TargetSet
from .dirichlet_spectral import DENSE_MAX, dirichlet_eigenvalue
from .errors import BlowupError, DomainError, SolverError, TruncationError
from .psi import PsiFunction, check_inversion_mode

SURVIVAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Potential:
    values: np.ndarray
    kind: str
    param: dict
    K: TargetSet
    residual: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        v = np.asarray(self.values)
        return {
            "kind": self.kind,
            "K": list(self.K.members),
            "param": self.param,
            "values_re": np.real(v).tolist(),
            "values_im": np.imag(v).tolist(),
            "residual": self.residual,
        }


@dataclass(frozen=True)
class ThresholdReport:
    alpha_star: float
    method_eig: float
    method_bisect: float
    agreement: float

    def to_dict(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "method_eig": self.method_eig,
            "method_bisect": self.method_bisect,
            "agreement": self.agreement,
        }


# ---------------------------------------------------------------------------
# linear algebra on the complement of K


class _Blocks:
    def __init__(self, chain: FiniteChain, K: TargetSet):
        self.chain = chain
        self.K = K
        self.idx = K.complement
        self.Qcc = chain.Q[np.ix_(self.idx, self.idx)]
        self.rate_in = chain.Q[np.ix_(self.idx, K.indices)].sum(axis=1)
        self.m = self.idx.size

    def factor(self, shift):
        """Factorisation of ``Q_cc - shift I`` (complex when shift is complex)."""
        dtype = complex if np.iscomplexobj(shift) and complex(shift).imag != 0 else float
        shift = shift if dtype is complex else float(np.real(shift))
        if self.m <= DENSE_MAX:
            A = self.Qcc.astype(dtype) - shift * np.eye(self.m, dtype=dtype)
            lu = scipy.linalg.lu_factor(A, check_finite=False)
            if np.min(np.abs(np.diag(lu[0]))) == 0:
                raise SolverError(f"singular sub-generator at shift {shift}")
            return lambda b: scipy.linalg.lu_solve(lu, np.asarray(b, dtype=dtype), check_finite=False)
        A = scipy.sparse.csc_matrix(self.Qcc.astype(dtype)) - shift * scipy.sparse.identity(self.m, dtype=dtype, format="csc")
        try:
            lu = scipy.sparse.linalg.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"singular sub-generator at shift {shift}: {exc}") from None
        return lambda b: lu.solve(np.asarray(b, dtype=dtype))

    def embed(self, sub, on_K):
        out = np.full(self.chain.n, on_K, dtype=np.result_type(sub, type(on_K)))
        out[self.idx] = sub
        return out


def _is_complex(z) -> bool:
    return isinstance(z, complex) or (np.iscomplexobj(z) and complex(z).imag != 0)


def _hitting_residual(chain, K, h, z, rhs=None) -> float:
    r = chain.Q @ h - z * h
    if rhs is not None:
        r = r - rhs
    return float(np.max(np.abs(r[K.complement]))) if not K.is_full else 0.0


def weak_residual(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, h, lam, source=None) -> float:
    """Max over the basis ``u = e_j`` (j not in K) of ``|E(h,u) - lam (h,u) - (source,u)|``.

    The indicator basis spans every function vanishing on K, so a small value
    certifies the weak identity for all such u.
    """
    if K.is_full:
        return 0.0
    idx = K.complement
    pi = measure.pi[idx]
    energy = -pi * (chain.Q @ h)[idx]
    target = lam * pi * np.asarray(h)[idx]
    if source is not None:
        target = target + pi * np.asarray(source)[idx]
    return float(np.max(np.abs(energy - target)))


# ---------------------------------------------------------------------------
# z-potentials and moments


def z_potential(chain: FiniteChain, measure: Optional[InvariantMeasure], K: TargetSet, z) -> Potential:
    """``h_z(x) = E_x exp(-z tau_K)`` for ``Re z > 0``."""
    if not complex(z).real > 0:
        raise DomainError(f"z-potential needs Re z > 0, got z={z}")
    z = complex(z) if _is_complex(z) else float(np.real(z))
    param = {"z": [float(np.real(z)), float(np.imag(z))]}
    if K.is_full:
        return Potential(np.ones(chain.n, dtype=type(z)), "z_potential", param, K)
    blk = _Blocks(chain, K)
    h = blk.embed(blk.factor(z)(-blk.rate_in), 1.0)
    extra = {}
    if measure is not None:
        extra["weak_residual"] = weak_residual(chain, measure, K, h, -z)
    return Potential(h, "z_potential", param, K, _hitting_residual(chain, K, h, z), extra)


def z_potentials_batch(chain: FiniteChain, K: TargetSet, zs) -> np.ndarray:
    """Rows ``h_z`` for every z in ``zs`` (one factorisation per z)."""
    zs = np.asarray(zs, dtype=complex)
    out = np.ones((zs.size, chain.n), dtype=complex)
    if K.is_full:
        return out
    blk = _Blocks(chain, K)
    if blk.m <= 64:
        eye = np.eye(blk.m)
        for start in range(0, zs.size, 512):
            zc = zs[start : start + 512]
            A = blk.Qcc[None, :, :] - zc[:, None, None] * eye[None]
            b = np.broadcast_to(-blk.rate_in.astype(complex), (zc.size, blk.m))
            out[start : start + zc.size, blk.idx] = np.linalg.solve(A, b[..., None])[..., 0]
        return out
    for k, z in enumerate(zs):
        out[k, blk.idx] = blk.factor(z)(-blk.rate_in)
    return out


def moment_potentials(chain: FiniteChain, K: TargetSet, z, m_max: int) -> list:
    """``[h_z, h_z^1, ..., h_z^m_max]`` sharing one factorisation."""
    if not complex(z).real > 0:
        raise DomainError(f"moment potentials need Re z > 0, got z={z}")
    z = complex(z) if _is_complex(z) else float(np.real(z))
    if K.is_full:
        return [np.ones(chain.n)] + [np.zeros(chain.n) for _ in range(m_max)]
    blk = _Blocks(chain, K)
    solve = blk.factor(z)
    hs = [blk.embed(solve(-blk.rate_in), 1.0)]
    for m in range(1, m_max + 1):
        hs.append(blk.embed(solve(m * hs[-1][blk.idx]), 0.0))
    return hs


def moment_potential(chain: FiniteChain, measure: Optional[InvariantMeasure], K: TargetSet, alpha, m: int) -> Potential:
    """``h^m = (-1)^m E_x tau^m exp(-alpha tau)``, the m-th z-derivative of ``h_z``."""
    if m < 1:
        raise DomainError("moment order must be >= 1; use z_potential for m = 0")
    hs = moment_potentials(chain, K, alpha, m)
    z = complex(alpha) if _is_complex(alpha) else float(np.real(alpha))
    h = hs[m]
    residual = _hitting_residual(chain, K, h, z, m * hs[m - 1])
    extra = {}
    if measure is not None:
        extra["weak_residual"] = weak_residual(chain, measure, K, h, -z, -m * hs[m - 1])
        extra["l2_norm"] = float(np.sqrt(np.sum(measure.pi * np.abs(h) ** 2)))
    param = {"z": [float(np.real(z)), float(np.imag(z))], "m": int(m)}
    return Potential(h, "moment", param, K, residual, extra)


# ---------------------------------------------------------------------------
# exponential moments and the blow-up threshold


def _positive_solution(blk: _Blocks, alpha: float):
    try:
        h = blk.factor(-alpha)(-blk.rate_in)
    except SolverError:
        return None
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        return None
    return h


def exp_moment_potential(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, alpha: float,
                         kind: str = "exp_moment") -> Potential:
    """``E_x exp(alpha tau_K)`` for ``0 < alpha < alpha_star``.

    Admissibility is decided by the principal Dirichlet eigenvalue and
    confirmed by positivity of the solution; disagreement is an error.
    """
    alpha = float(alpha)
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    param = {"alpha": alpha}
    if K.is_full:
        return Potential(np.ones(chain.n), kind, param, K, 0.0, {"alpha_star": math.inf})
    lam = dirichlet_eigenvalue(chain, measure, K)
    if alpha >= lam:
        raise BlowupError(alpha, lam)
    blk = _Blocks(chain, K)
    sub = _positive_solution(blk, alpha)
    if sub is None:
        raise BlowupError(alpha, lam, "solution is not positive")
    h = blk.embed(sub, 1.0)
    extra = {
        "alpha_star": lam,
        "weak_residual": weak_residual(chain, measure, K, h, alpha),
    }
    return Potential(h, kind, param, K, _hitting_residual(chain, K, h, -alpha), extra)


def lyapunov_potential(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet, alpha_tilde: float) -> Potential:
    """``phi = E_x exp(alpha_tilde tau_K)`` with its drift certificate ``Q phi = -alpha_tilde phi`` off K."""
    p = exp_moment_potential(chain, measure, K, alpha_tilde, kind="lyapunov")
    drift = chain.Q @ p.values + alpha_tilde * p.values
    off = 0.0 if K.is_full else float(np.max(np.abs(drift[K.complement])))
    extra = dict(p.extra, drift_residual=off, drift_constant=float(np.max(drift[K.indices])))
    return Potential(p.values, "lyapunov", p.param, K, p.residual, extra)


def bisect_threshold(chain: FiniteChain, K: TargetSet, rtol: float = 1e-13) -> float:
    """Largest alpha with a strictly positive solution, by bisection.

    A positive solution of ``(Q_cc + alpha) h = -r`` exists exactly when alpha
    is below the principal eigenvalue of ``-Q_cc``, so the predicate is
    monotone.  The Rayleigh quotient at a unit vector gives the bracket
    ``alpha_star <= min_i (-Q_ii)``.
    """
    if K.is_full:
        return math.inf
    blk = _Blocks(chain, K)
    lo = 0.0
    hi = 1.01 * float(np.min(-np.diag(blk.Qcc))) + 1e-300
    while _positive_solution(blk, hi) is not None:
        lo, hi = hi, 2 * hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _positive_solution(blk, mid) is not None:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def blowup_threshold(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet) -> ThresholdReport:
    if K.is_full:
        return ThresholdReport(math.inf, math.inf, math.inf, 0.0)
    eig = dirichlet_eigenvalue(chain, measure, K)
    bis = bisect_threshold(chain, K)
    return ThresholdReport(eig, eig, bis, abs(eig - bis) / eig)


# ---------------------------------------------------------------------------
# psi-potentials


def survival(chain: FiniteChain, K: TargetSet, t: float) -> np.ndarray:
    """``P_x(tau_K > t)`` on the full state space (0 on K)."""
    blk = _Blocks(chain, K)
    if blk.m == 0:
        return np.zeros(chain.n)
    return blk.embed(_survival_sub(blk, t), 0.0)


def _survival_sub(blk: _Blocks, t: float) -> np.ndarray:
    ones = np.ones(blk.m)
    if blk.m <= DENSE_MAX:
        return scipy.linalg.expm(t * blk.Qcc) @ ones
    return scipy.sparse.linalg.expm_multiply(t * scipy.sparse.csr_matrix(blk.Qcc), ones)


def survival_horizon(chain: FiniteChain, K: TargetSet, tol: float = SURVIVAL_TOL) -> float:
    """A time T with ``max_x P_x(tau > T) <= tol``, seeded from the decay rate of ``Q_cc``."""
    blk = _Blocks(chain, K)
    if blk.m == 0:
        return 0.0
    if blk.m <= DENSE_MAX:
        rate = -float(np.max(np.linalg.eigvals(blk.Qcc).real))
    else:
        rate = float(scipy.sparse.linalg.eigs(-scipy.sparse.csc_matrix(blk.Qcc), k=1, sigma=0, which="LM")[0].real[0])
    T = math.log(1.0 / tol) / rate
    for _ in range(20):
        s = float(np.max(_survival_sub(blk, T)))
        if s <= tol:
            return T
        T += (math.log(s / tol) + 1.0) / rate
    raise SolverError("could not find a survival horizon")


def psi_potential_direct(chain: FiniteChain, K: TargetSet, psi: PsiFunction, horizon: Optional[float] = None,
                         epsabs: float = 1e-13, epsrel: float = 1e-12) -> Potential:
    """``h_psi(x) = psi(0) + int_0^inf psi'(t) P_x(tau > t) dt`` (phase-type oracle).

    Survival probabilities come from the matrix exponential of the
    sub-generator.  When psi' has unbounded support the integral is cut at a
    horizon where survival is below ``SURVIVAL_TOL``.
    """
    psi0 = float(psi(0.0))
    lo, hi = psi.dsupport
    param = {"psi": psi.name, **psi.params}
    if K.is_full or lo >= hi:
        return Potential(np.full(chain.n, psi0), "psi", param, K, 0.0, {"method": "direct"})
    blk = _Blocks(chain, K)
    lo = max(lo, 0.0)
    dpsi = psi.derivative(1)
    truncation = 0.0
    if not math.isfinite(hi):
        T = survival_horizon(chain, K) if horizon is None else float(horizon)
        tail = float(np.max(_survival_sub(blk, T)))
        if tail > SURVIVAL_TOL:
            raise TruncationError(
                f"survival at horizon {T:.6g} is {tail:.3g} > {SURVIVAL_TOL}", survival_horizon(chain, K)
            )
        grid = np.linspace(T, 2 * T, 64)
        truncation = float(np.max(np.abs(dpsi(grid)))) * tail * T
        hi = T
    points = [b for b in psi.breakpoints if lo < b < hi]
    integrand = lambda t: float(dpsi(np.array([t]))[0]) * _survival_sub(blk, t)  # noqa: E731
    sub, err = quad_vec(integrand, lo, hi, epsabs=epsabs, epsrel=epsrel, norm="max", points=points or None, limit=2000)
    h = blk.embed(psi0 + sub, psi0)
    extra = {"method": "direct", "quad_error": float(err), "truncation": truncation}
    return Potential(h, "psi", param, K, float(err) + truncation, extra)


_TRANSFORM_CACHE: dict = {}


def _transform_values(psi: PsiFunction, sigma: float, step: float, count: int) -> np.ndarray:
    key = (psi.key, float(sigma), float(step), int(count))
    vals = _TRANSFORM_CACHE.get(key)
    if vals is None:
        vals = psi.transform(sigma + 1j * step * np.arange(count))
        if len(_TRANSFORM_CACHE) > 64:
            _TRANSFORM_CACHE.clear()
        _TRANSFORM_CACHE[key] = vals
    return vals


def contour_parameters(psi: PsiFunction, sigma: float, tol: float, T_im=None, step=None) -> dict:
    """Trapezoid step and truncation for the inversion integral at accuracy ``tol``.

    Aliasing: the trapezoid rule with step d returns
    ``sum_k psi(tau + k P) exp(sigma k P)`` with ``P = 2 pi / d``; terms with
    k > 0 vanish once P exceeds the support, the rest are bounded by
    ``max|psi| e^{-sigma P} / (1 - e^{-sigma P})`` (kept below tol/4).
    Truncation: ``|Psi(z)| <= C_k |z|^{-k}`` for psi in C^{k-1}, and
    ``|h_z| <= 1``, so the discarded tail is at most
    ``C_k / (pi (k-1) (T - d)^{k-1})`` (kept below tol/2).
    """
    a, b = psi.support
    peak = psi.max_abs()
    eps = tol / 4 / max(peak, 1e-300)
    P_alias = math.log((1 + eps) / eps) / sigma
    if step is None:
        P = max(P_alias, 1.05 * b + 1e-9)
        step = 2 * math.pi / P
    P = 2 * math.pi / step
    if P <= b:
        raise TruncationError(f"step {step:.6g} aliases the support end {b}", 2 * math.pi / (1.05 * b))
    alias = peak * math.exp(-sigma * P) / (1 - math.exp(-sigma * P))
    k = psi.smoothness + 1
    Ck = psi.tail_constant(k, sigma)

    def tail_bound(T):
        return Ck / (math.pi * (k - 1) * max(T - step, 1e-300) ** (k - 1))

    T_needed = step + (Ck / (math.pi * (k - 1) * (tol / 2))) ** (1.0 / (k - 1))
    if T_im is None:
        T_im = T_needed
    elif tail_bound(T_im) > tol / 2:
        raise TruncationError(
            f"truncation bound {tail_bound(T_im):.3g} at T_im={T_im:.6g} exceeds {tol / 2:.3g}", T_needed
        )
    return {
        "sigma": float(sigma),
        "step": float(step),
        "T_im": float(T_im),
        "nodes": int(math.floor(T_im / step)) + 1,
        "alias_bound": float(alias),
        "truncation_bound": float(tail_bound(T_im)),
        "smoothness_order": int(k),
        "tail_constant": float(Ck),
    }


def psi_potential_contour(chain: FiniteChain, measure: Optional[InvariantMeasure], K: TargetSet, psi: PsiFunction,
                          sigma: float = 1.0, T_im=None, step=None, tol: float = 1e-6) -> Potential:
    """``h_psi = (1/2 pi i) int_{sigma - i inf}^{sigma + i inf} Psi(z) h_z dz`` by the trapezoid rule.

    Both half-lines are evaluated (``h`` at ``conj z`` is solved separately)
    so the imaginary part of the sum is a genuine accuracy diagnostic.
    """
    check_inversion_mode(psi)
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    param = {"psi": psi.name, **psi.params}
    if psi.max_abs() == 0:
        zero = {"method": "contour", "sigma": float(sigma), "nodes": 0, "alias_bound": 0.0,
                "truncation_bound": 0.0, "imag_residue": 0.0}
        return Potential(np.zeros(chain.n), "psi", param, K, 0.0, zero)
    prm = contour_parameters(psi, sigma, tol, T_im, step)
    d, J = prm["step"], prm["nodes"]
    Psi = _transform_values(psi, sigma, d, J)
    zs = sigma + 1j * d * np.arange(J)
    h_up = z_potentials_batch(chain, K, zs)
    h_dn = z_potentials_batch(chain, K, np.conj(zs[1:]))
    total = Psi[0] * h_up[0] + Psi[1:] @ h_up[1:] + np.conj(Psi[1:]) @ h_dn
    values = d / (2 * math.pi) * total
    imag = float(np.max(np.abs(values.imag)))
    prm["imag_residue"] = imag
    prm["method"] = "contour"
    return Potential(values.real, "psi", param, K, prm["alias_bound"] + prm["truncation_bound"], prm)
