"""Finite-state continuous-time Markov chains and their invariant measures.

A :class:`FiniteChain` holds a dense generator matrix ``Q`` (off-diagonal
entries are jump rates, rows sum to zero).  Chains come from explicit
matrices, from :func:`build_birth_death`, or from
:func:`discretize_diffusion_1d`, which turns a one-dimensional elliptic
diffusion ``A = a d/dx + (1/2) b d^2/dx^2`` on a reflecting box into a
reversible nearest-neighbour chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    ChainValidationError,
    ConfigError,
    DomainError,
    EllipticityError,
    IrreducibilityError,
)
from .expr import Expression

ROW_SUM_TOL = 1e-12
BALANCE_TOL = 1e-10
STATIONARY_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Generator matrix of a continuous-time chain on ``{0, ..., n-1}``.

    Construction only checks the shape; use :func:`validate` for the full list
    of structural problems or :func:`require_valid` to raise on them.
    """

    Q: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = _frozen(self.Q)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ChainValidationError([f"Q must be square, got shape {Q.shape}"])
        object.__setattr__(self, "Q", Q)
        if self.labels is not None:
            labels = _frozen(self.labels)
            if labels.shape != (Q.shape[0],):
                raise ChainValidationError(
                    [f"labels must have length {Q.shape[0]}, got shape {labels.shape}"]
                )
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def offdiag(self) -> np.ndarray:
        R = self.Q.copy()
        np.fill_diagonal(R, 0.0)
        return R

    def sparse(self) -> csr_matrix:
        return csr_matrix(self.Q)

    def is_tridiagonal(self) -> bool:
        return not np.any(np.triu(self.Q, 2)) and not np.any(np.tril(self.Q, -2))

    def to_dict(self) -> dict:
        d = {"n": self.n, "Q": self.Q.tolist()}
        if self.labels is not None:
            d["labels"] = self.labels.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteChain":
        """Read the dense ``{"n", "Q"}`` or sparse ``{"n", "triplets"}`` form.

        In the sparse form the diagonal is filled in so that rows sum to zero.
        """
        unknown = set(d) - {"n", "Q", "triplets", "labels"}
        if unknown:
            raise ConfigError([f"unknown chain keys: {sorted(unknown)}"])
        if "n" not in d:
            raise ConfigError(["chain document needs 'n'"])
        n = int(d["n"])
        if ("Q" in d) == ("triplets" in d):
            raise ConfigError(["chain document needs exactly one of 'Q' or 'triplets'"])
        if "Q" in d:
            Q = np.array(d["Q"], dtype=float)
            if Q.shape != (n, n):
                raise ConfigError([f"Q has shape {Q.shape}, expected ({n}, {n})"])
        else:
            Q = np.zeros((n, n))
            for i, j, rate in d["triplets"]:
                i, j = int(i), int(j)
                if i == j:
                    raise ConfigError([f"triplet ({i},{j}) is on the diagonal"])
                Q[i, j] += float(rate)
            Q[np.diag_indices(n)] = -Q.sum(axis=1)
        return cls(Q, d.get("labels"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "FiniteChain":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class InvariantMeasure:
    pi: np.ndarray
    reversible: bool
    residual: float = 0.0
    balance_residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))

    def mass(self, target: "TargetSet") -> float:
        return float(self.pi[list(target.members)].sum())


@dataclass(frozen=True)
class TargetSet:
    """The hitting set ``K``, a nonempty subset of ``{0, ..., n-1}``."""

    members: tuple
    n: int

    def __post_init__(self):
        members = tuple(sorted({int(i) for i in self.members}))
        if not members:
            raise DomainError("target set must be nonempty")
        if members[0] < 0 or members[-1] >= self.n:
            raise DomainError(f"target states must lie in [0, {self.n - 1}]")
        object.__setattr__(self, "members", members)

    @property
    def is_full(self) -> bool:
        return len(self.members) == self.n

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[list(self.members)] = True
        return m

    @property
    def complement(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)

    @property
    def indices(self) -> np.ndarray:
        return np.array(self.members, dtype=int)

    def __len__(self):
        return len(self.members)

    def __contains__(self, i):
        return int(i) in self.members

    @classmethod
    def from_interval(cls, chain: FiniteChain, lo: float, hi: float) -> "TargetSet":
        """States whose coordinate label lies in ``[lo, hi]``."""
        if chain.labels is None:
            raise DomainError("coordinate targets require labels")
        idx = np.flatnonzero((chain.labels >= lo) & (chain.labels <= hi))
        if idx.size == 0:
            raise DomainError(f"no grid cell lies in [{lo}, {hi}]")
        return cls(tuple(idx), chain.n)

    def describe(self) -> str:
        m = self.members
        if len(m) > 6 and m[-1] - m[0] + 1 == len(m):
            return f"{{{m[0]}..{m[-1]}}}"
        return "{" + ",".join(map(str, m)) + "}"


def target(members, n: int) -> TargetSet:
    return TargetSet(tuple(members), n)


@dataclass(frozen=True, eq=False)
class DiffusionSpec1D:
    """One-dimensional diffusion with drift ``a`` and diffusion coefficient ``b``.

    Boundaries are reflecting.  ``drift_src``/``diffusion_src`` keep the
    expression strings when the spec was read from JSON.
    """

    drift: Callable
    diffusion: Callable
    domain: tuple
    grid: Optional[int] = None
    drift_src: Optional[str] = None
    diffusion_src: Optional[str] = None

    def __post_init__(self):
        L, R = (float(v) for v in self.domain)
        if not L < R:
            raise DomainError(f"domain must satisfy L < R, got {self.domain}")
        object.__setattr__(self, "domain", (L, R))

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSpec1D":
        errors = []
        unknown = set(d) - {"drift", "diffusion", "domain", "grid"}
        if unknown:
            errors.append(f"unknown diffusion keys: {sorted(unknown)}")
        for key in ("drift", "diffusion", "domain"):
            if key not in d:
                errors.append(f"diffusion spec needs {key!r}")
        if errors:
            raise ConfigError(errors)
        return cls(
            Expression(d["drift"]),
            Expression(d["diffusion"]),
            tuple(d["domain"]),
            d.get("grid"),
            drift_src=d["drift"],
            diffusion_src=d["diffusion"],
        )

    def to_dict(self) -> dict:
        if self.drift_src is None or self.diffusion_src is None:
            raise ValueError("only expression-backed specs can be serialized")
        d = {"drift": self.drift_src, "diffusion": self.diffusion_src, "domain": list(self.domain)}
        if self.grid is not None:
            d["grid"] = int(self.grid)
        return d


def ou_spec(box: float = 8.0) -> DiffusionSpec1D:
    """Ornstein-Uhlenbeck process dX = -X dt + sqrt(2) dW, spectral gap 1."""
    return DiffusionSpec1D.from_dict({"drift": "-x", "diffusion": "2", "domain": [-box, box]})


def double_well_spec(box: float = 3.0) -> DiffusionSpec1D:
    """Gradient diffusion in V(x) = (x^2 - 1)^2 at the OU temperature (b = 2)."""
    return DiffusionSpec1D.from_dict(
        {"drift": "-4*x^3 + 4*x", "diffusion": "2", "domain": [-box, box]}
    )


# ---------------------------------------------------------------------------
# validation


def validate(chain: FiniteChain) -> list:
    """Every violated structural invariant, as human-readable strings.

    An empty list means the chain is a well-formed irreducible generator.
    """
    Q = chain.Q
    n = chain.n
    problems = []
    if n < 2:
        problems.append(f"state count n={n} is below 2")
    if not np.all(np.isfinite(Q)):
        bad = np.argwhere(~np.isfinite(Q))
        problems.extend(f"non-finite entry Q[{i},{j}]" for i, j in bad)
        return problems
    off = ~np.eye(n, dtype=bool)
    for i, j in np.argwhere((Q < 0) & off):
        problems.append(f"negative off-diagonal rate Q[{i},{j}]={Q[i, j]:.6g}")
    sums = Q.sum(axis=1)
    scale = np.maximum(1.0, np.abs(np.diag(Q)))
    for i in np.flatnonzero(np.abs(sums) > ROW_SUM_TOL * scale):
        problems.append(f"row {i} sums to {sums[i]:.6g}, not 0")
    if n >= 2:
        blocks = communicating_classes(chain)
        if len(blocks) > 1:
            problems.append(f"chain is reducible; communicating classes: {blocks}")
    return problems


def require_valid(chain: FiniteChain) -> FiniteChain:
    problems = validate(chain)
    if problems:
        raise ChainValidationError(problems)
    return chain


def communicating_classes(chain: FiniteChain) -> list:
    graph = csr_matrix(chain.offdiag() > 0)
    k, labels = connected_components(graph, directed=True, connection="strong")
    return [np.flatnonzero(labels == c).tolist() for c in range(k)]


def require_irreducible(chain: FiniteChain) -> None:
    blocks = communicating_classes(chain)
    if len(blocks) > 1:
        raise IrreducibilityError(blocks)


# ---------------------------------------------------------------------------
# constructors


def build_birth_death(n: int, up_rates: Sequence[float], down_rates: Sequence[float]) -> FiniteChain:
    """Birth-death generator: ``up_rates[i]`` is i -> i+1, ``down_rates[i]`` is i+1 -> i."""
    if n < 2:
        raise DomainError(f"birth-death chain needs n >= 2, got {n}")
    up = np.asarray(up_rates, dtype=float)
    down = np.asarray(down_rates, dtype=float)
    problems = []
    for name, r in (("up_rates", up), ("down_rates", down)):
        if r.shape != (n - 1,):
            problems.append(f"{name} must have length {n - 1}, got {r.shape}")
            continue
        problems.extend(f"{name}[{i}]={r[i]:.6g} is not positive" for i in np.flatnonzero(~(r > 0)))
    if problems:
        raise ChainValidationError(problems)
    Q = np.diag(up, 1) + np.diag(down, -1)
    Q[np.diag_indices(n)] = -Q.sum(axis=1)
    return FiniteChain(Q)


def birth_death_weights(up_rates, down_rates) -> np.ndarray:
    """Stationary law of a birth-death chain by the product formula."""
    logw = np.concatenate([[0.0], np.cumsum(np.log(up_rates) - np.log(down_rates))])
    w = np.exp(logw - logw.max())
    return w / w.sum()


def chain_from_conductances(C: np.ndarray, weights: np.ndarray) -> FiniteChain:
    """Reversible chain with ``pi_i Q_ij = C_ij`` for a symmetric conductance matrix."""
    C = np.asarray(C, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    Q = C / w[:, None]
    np.fill_diagonal(Q, 0.0)
    Q[np.diag_indices(len(w))] = -Q.sum(axis=1)
    return FiniteChain(Q)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _cumulative_integral(f, x):
    """int_{x[0]}^{x[i]} f, piecewise Gauss-Legendre on the grid intervals."""
    a, b = x[:-1], x[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    pieces = half * (vals @ _GL_WEIGHTS)
    return np.concatenate([[0.0], np.cumsum(pieces)])


def discretize_diffusion_1d(spec: DiffusionSpec1D, grid_points: Optional[int] = None) -> FiniteChain:
    """Finite-volume chain for ``a d/dx + (1/2) b d^2/dx^2`` with reflecting ends.

    The generator is written in divergence form ``(1/2p) d/dx (w d/dx)`` with
    ``w = exp(int 2a/b)`` and density ``p = w / b``.  Cells are uniform with
    centres ``L + (i + 1/2) h``; edge conductances are harmonic means of ``w``
    at neighbouring centres, so ``p_i Q_{i,i+1} = p_{i+1} Q_{i+1,i}`` holds
    exactly and the chain is reversible at every resolution.
    """
    N = grid_points if grid_points is not None else spec.grid
    if N is None or N < 3:
        raise DomainError(f"grid_points must be >= 3, got {N}")
    L, R = spec.domain
    h = (R - L) / N
    x = L + (np.arange(N) + 0.5) * h
    b = np.asarray(spec.diffusion(x), dtype=float)
    if not np.all(b > 0):
        i = int(np.flatnonzero(~(b > 0))[0])
        raise EllipticityError(f"diffusion coefficient b({x[i]:.6g})={b[i]:.6g} is not positive")

    def ratio(s):
        return 2.0 * np.asarray(spec.drift(s), dtype=float) / np.asarray(spec.diffusion(s), dtype=float)

    logw = _cumulative_integral(ratio, x)
    logp = logw - np.log(b)
    # log of harmonic mean 2 w_i w_{i+1} / (w_i + w_{i+1})
    lo, hi = logw[:-1], logw[1:]
    log_edge = np.log(2.0) + lo + hi - np.logaddexp(lo, hi)
    up = np.exp(log_edge - logp[:-1]) / (2 * h * h)
    down = np.exp(log_edge - logp[1:]) / (2 * h * h)
    Q = np.diag(up, 1) + np.diag(down, -1)
    Q[np.diag_indices(N)] = -Q.sum(axis=1)
    return FiniteChain(Q, x)


def ellipticity_constant(spec: DiffusionSpec1D, grid_points: int) -> float:
    L, R = spec.domain
    h = (R - L) / grid_points
    x = L + (np.arange(grid_points) + 0.5) * h
    return float(np.min(spec.diffusion(x)))


# ---------------------------------------------------------------------------
# invariant measure


def detailed_balance_residual(chain: FiniteChain, pi: np.ndarray) -> float:
    flux = pi[:, None] * chain.Q
    return float(np.max(np.abs(flux - flux.T)))


def _tree_weights(chain: FiniteChain) -> Optional[np.ndarray]:
    # pi_j / pi_i = Q_ij / Q_ji along a BFS tree of two-way edges, in log space
    Q = chain.Q
    off = chain.offdiag()
    both = (off > 0) & (off.T > 0)
    order, pred = breadth_first_order(csr_matrix(both), 0, directed=False)
    if order.size != chain.n:
        return None
    logw = np.zeros(chain.n)
    for j in order[1:]:
        i = pred[j]
        logw[j] = logw[i] + np.log(Q[i, j]) - np.log(Q[j, i])
    w = np.exp(logw - logw.max())
    return w / w.sum()


def _pinned_solve(chain: FiniteChain) -> np.ndarray:
    n = chain.n
    A = chain.Q.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    lu = scipy.linalg.lu_factor(A)
    pi = scipy.linalg.lu_solve(lu, rhs)
    pi = pi + scipy.linalg.lu_solve(lu, rhs - A @ pi)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def invariant_measure(chain: FiniteChain) -> InvariantMeasure:
    """Solve ``pi Q = 0``, ``sum(pi) = 1`` for an irreducible chain.

    Candidate weights are first built from detailed balance along a spanning
    tree; if they balance every edge they are exact to relative precision,
    which keeps tiny tail weights accurate.  Otherwise the last balance
    equation is replaced by the normalisation and the system is solved by
    pivoted LU with one step of iterative refinement.
    """
    require_irreducible(chain)
    pi = _tree_weights(chain)
    if pi is None or detailed_balance_residual(chain, pi) > BALANCE_TOL:
        pi = _pinned_solve(chain)
    residual = float(np.max(np.abs(pi @ chain.Q)))
    balance = detailed_balance_residual(chain, pi)
    return InvariantMeasure(pi, balance <= BALANCE_TOL, residual, balance)
