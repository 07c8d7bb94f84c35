"""Dirichlet form, variance, spectral gap and killed (Dirichlet) eigenvalues.

For a reversible chain the generator is self-adjoint in ``L2(pi)``.  With
``D = diag(pi)`` the matrix ``D^{1/2} Q D^{-1/2}`` is symmetric, so every
eigenvalue computation here goes through a symmetric eigensolver: dense
``eigh`` up to ``DENSE_MAX`` states and shift-invert Lanczos beyond that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .chain_model import FiniteChain, InvariantMeasure, TargetSet, require_irreducible
from .errors import DomainError, NotReversibleError

DENSE_MAX = 512


def _as_vector(f, n, name="f"):
    f = np.asarray(f)
    if f.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got shape {f.shape}")
    return f


@dataclass(frozen=True, eq=False)
class DirichletForm:
    """The energy ``E(f, g) = -(Qf, g)_pi`` of a chain under its invariant law."""

    chain: FiniteChain
    measure: InvariantMeasure

    def __call__(self, f, g=None):
        return dirichlet_energy(self, f, f if g is None else g)

    def inner(self, f, g):
        """``(f, g)_pi`` without complex conjugation (bilinear)."""
        n = self.chain.n
        return np.sum(self.measure.pi * _as_vector(f, n) * _as_vector(g, n, "g"))

    def norm_e1(self, f) -> float:
        """``||f||_{E,1} = sqrt(||f||_2^2 + E(f, f))`` for real or complex f."""
        f = _as_vector(f, self.chain.n)
        energy = np.real(dirichlet_energy(self, f, np.conj(f)))
        return float(np.sqrt(np.sum(self.measure.pi * np.abs(f) ** 2) + energy))


def dirichlet_energy(form: DirichletForm, f, g):
    n = form.chain.n
    f = _as_vector(f, n)
    g = _as_vector(g, n, "g")
    val = -np.sum(form.measure.pi * (form.chain.Q @ f) * g)
    return val if np.iscomplexobj(val) else float(val)


def dirichlet_energy_edges(form: DirichletForm, f, g):
    """Edge-sum form ``1/2 sum_ij pi_i Q_ij (f_j - f_i)(g_j - g_i)``.

    Equal to :func:`dirichlet_energy` only when the chain is reversible.
    """
    n = form.chain.n
    f = _as_vector(f, n)
    g = _as_vector(g, n, "g")
    C = form.measure.pi[:, None] * form.chain.offdiag()
    df = f[None, :] - f[:, None]
    dg = g[None, :] - g[:, None]
    return 0.5 * np.sum(C * df * dg)


def variance(measure: InvariantMeasure, f) -> float:
    pi = measure.pi
    f = _as_vector(np.asarray(f, dtype=float), len(pi))
    mean = np.sum(pi * f)
    return float(np.sum(pi * (f - mean) ** 2))


@dataclass(frozen=True, eq=False)
class SpectralReport:
    gap: float
    poincare_c: float
    eigenvector: np.ndarray
    method: str
    residual: float

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "poincare_c": self.poincare_c,
            "eigenvector": self.eigenvector.tolist(),
            "method": self.method,
            "residual": self.residual,
        }


def _require_reversible(measure: InvariantMeasure) -> None:
    if not measure.reversible:
        raise NotReversibleError(
            f"chain is not reversible (detailed-balance residual {measure.balance_residual:.3g}); "
            "symmetrisation is undefined"
        )


def symmetrized(chain: FiniteChain, measure: InvariantMeasure, idx=None) -> np.ndarray:
    """``-D^{1/2} Q D^{-1/2}`` (optionally restricted to ``idx``), exactly symmetric."""
    Q = chain.Q if idx is None else chain.Q[np.ix_(idx, idx)]
    s = np.sqrt(measure.pi if idx is None else measure.pi[idx])
    M = -(s[:, None] * Q / s[None, :])
    return 0.5 * (M + M.T)


def _lowest_eigenpairs(M: np.ndarray, k: int, sigma: float):
    """Smallest ``k`` eigenpairs of a symmetric positive semidefinite matrix."""
    n = M.shape[0]
    if n <= DENSE_MAX:
        w, V = scipy.linalg.eigh(M, subset_by_index=[0, min(k, n) - 1])
        return w, V, "dense"
    A = scipy.sparse.csc_matrix(M)
    # fixed start vector: ARPACK otherwise draws a random one and results drift in the last bits
    v0 = np.random.default_rng(0).standard_normal(n)
    w, V = scipy.sparse.linalg.eigsh(A, k=k, sigma=sigma, which="LM", tol=0.0, v0=v0)
    order = np.argsort(w)
    return w[order], V[:, order], "iterative"


def spectral_gap(chain: FiniteChain, measure: InvariantMeasure) -> SpectralReport:
    """Smallest nonzero eigenvalue of ``-Q`` in ``L2(pi)``; ``poincare_c = 1/gap``.

    The returned eigenvector is scaled to unit ``L2(pi)`` norm and is
    pi-orthogonal to constants.
    """
    require_irreducible(chain)
    _require_reversible(measure)
    M = symmetrized(chain, measure)
    scale = max(1.0, float(np.max(np.abs(np.diag(M)))))
    w, V, method = _lowest_eigenpairs(M, 2, -1e-8 * scale)
    gap = float(w[1])
    u = V[:, 1]
    residual = float(np.linalg.norm(M @ u - gap * u))
    v = u / np.sqrt(measure.pi)
    v -= np.sum(measure.pi * v)
    v /= np.sqrt(np.sum(measure.pi * v * v))
    return SpectralReport(gap, 1.0 / gap, v, method, residual)


def dirichlet_eigenpair(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet):
    """Principal eigenvalue and nonnegative eigenfunction of ``-Q`` killed on ``K``.

    The eigenfunction is returned on the full state space (zero on ``K``).
    """
    if K.is_full:
        raise DomainError("K is the full state space; the killed generator is empty")
    _require_reversible(measure)
    idx = K.complement
    M = symmetrized(chain, measure, idx)
    w, V, _ = _lowest_eigenpairs(M, 1, 0.0)
    lam = float(w[0])
    u = V[:, 0] / np.sqrt(measure.pi[idx])
    if np.sum(u) < 0:
        u = -u
    phi = np.zeros(chain.n)
    phi[idx] = u / np.max(np.abs(u))
    return lam, phi


def dirichlet_eigenvalue(chain: FiniteChain, measure: InvariantMeasure, K: TargetSet) -> float:
    return dirichlet_eigenpair(chain, measure, K)[0]


def poincare_violation(form: DirichletForm, report: SpectralReport, fs) -> float:
    """Largest relative excess ``Var(f) / (c E(f,f)) - 1`` over the rows of ``fs``."""
    worst = -np.inf
    for f in np.atleast_2d(fs):
        var = variance(form.measure, f)
        energy = dirichlet_energy(form, f, f)
        worst = max(worst, var / (report.poincare_c * energy) - 1.0)
    return float(worst)


def random_test_functions(measure: InvariantMeasure, count: int, rng: np.random.Generator) -> np.ndarray:
    """Standard normal entries with the pi-mean removed, one function per row."""
    F = rng.standard_normal((count, len(measure.pi)))
    return F - (F @ measure.pi)[:, None]
