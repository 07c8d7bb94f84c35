"""Monte Carlo hitting times: exact jump-chain simulation and Euler-Maruyama.

Random streams are Philox (counter-based) generators keyed by
``(seed, worker_id)``, so a run is reproducible bit-for-bit for a given seed
and worker count regardless of scheduling.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

from .chain_model import DiffusionSpec1D, FiniteChain, InvariantMeasure, TargetSet, discretize_diffusion_1d, invariant_measure
from .dirichlet_spectral import spectral_gap
from .errors import DomainError
from .potentials import lyapunov_potential

Z95 = 1.959963984540054
DEFAULT_CAP_FACTOR = 50.0


class CensoringWarning(UserWarning):
    """Some trajectories reached the time cap before hitting the target."""


def worker_rng(seed: int, worker_id: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(worker_id),))
    return np.random.Generator(np.random.Philox(ss))


def _split(n: int, workers: int) -> list:
    base, extra = divmod(n, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _run_workers(fn, n_samples: int, seed: int, workers: int) -> list:
    sizes = _split(n_samples, workers)
    jobs = [(size, worker_rng(seed, w)) for w, size in enumerate(sizes)]
    if workers == 1:
        return [fn(*jobs[0])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


@dataclass(frozen=True, eq=False)
class HittingSample:
    """Hitting times of the paths that reached K before ``time_cap``."""

    times: np.ndarray
    start: object
    K: str
    seed: int
    scheme: str
    dt: Optional[float] = None
    censored: int = 0
    time_cap: float = math.inf

    @property
    def n(self) -> int:
        return int(self.times.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# scheme={self.scheme} dt={self.dt} start={self.start} K={self.K} "
                f"seed={self.seed} censored={self.censored} time_cap={self.time_cap}\n"
            )
            w = csv.writer(fh)
            w.writerow(["tau"])
            for t in self.times:
                w.writerow([repr(float(t))])

    @classmethod
    def from_csv(cls, path) -> "HittingSample":
        lines = Path(path).read_text().splitlines()
        meta = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split(" "))
        times = np.array([float(v) for v in lines[2:]])
        dt = None if meta["dt"] == "None" else float(meta["dt"])
        return cls(times, meta["start"], meta["K"], int(meta["seed"]), meta["scheme"], dt,
                   int(meta["censored"]), float(meta["time_cap"]))


@dataclass(frozen=True)
class MomentEstimate:
    alpha: float
    mean: float
    ci_half_width: float
    n: int
    tail_flag: bool
    censored: int = 0
    lower_bound_with_censored: Optional[float] = None
    tail_rate: Optional[float] = None
    bootstrap_ci: Optional[tuple] = None

    @property
    def std_error(self) -> float:
        return self.ci_half_width / Z95

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "mean": self.mean,
            "ci_half_width": self.ci_half_width,
            "n": self.n,
            "tail_flag": self.tail_flag,
            "censored": self.censored,
            "lower_bound_with_censored": self.lower_bound_with_censored,
            "tail_rate": self.tail_rate,
            "bootstrap_ci": list(self.bootstrap_ci) if self.bootstrap_ci else None,
        }


# ---------------------------------------------------------------------------
# exact jump-chain simulation


def _jump_table(chain: FiniteChain):
    rates = -np.diag(chain.Q).copy()
    P = chain.offdiag() / np.where(rates > 0, rates, 1.0)[:, None]
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    return rates, cum


def _jump(cum, states, rng):
    u = rng.random(states.size)
    nxt = (u[:, None] >= cum[states]).sum(axis=1)
    return np.minimum(nxt, cum.shape[1] - 1)


def _hit_from(chain, starts, mask, rng, cap):
    rates, cum = _jump_table(chain)
    state = np.array(starts, dtype=int)
    t = np.zeros(state.size)
    active = ~mask[state]
    while np.any(active):
        idx = np.flatnonzero(active)
        s = state[idx]
        t[idx] += rng.standard_exponential(idx.size) / rates[s]
        state[idx] = _jump(cum, s, rng)
        over = t[idx] > cap
        t[idx[over]] = math.inf
        active[idx] = ~mask[state[idx]] & ~over
    return t


def _advance(chain, starts, horizon, rng):
    # state at time `horizon`; memorylessness makes the restart exact
    rates, cum = _jump_table(chain)
    state = np.array(starts, dtype=int)
    t = rng.standard_exponential(state.size) / rates[state]
    active = t < horizon
    while np.any(active):
        idx = np.flatnonzero(active)
        state[idx] = _jump(cum, state[idx], rng)
        t[idx] += rng.standard_exponential(idx.size) / rates[state[idx]]
        active[idx] = t[idx] < horizon
    return state


def _default_cap(chain: FiniteChain) -> float:
    try:
        gap = spectral_gap(chain, invariant_measure(chain)).gap
    except Exception:
        return math.inf
    return DEFAULT_CAP_FACTOR / gap


def _censor(times, what):
    hit = np.isfinite(times)
    censored = int(np.count_nonzero(~hit))
    if censored:
        warnings.warn(f"{censored} {what} trajectories censored at the time cap", CensoringWarning, stacklevel=3)
    return times[hit], censored


def sample_hitting_time_ctmc(chain: FiniteChain, x0: int, K: TargetSet, n_samples: int, seed: int,
                             time_cap: Optional[float] = None, workers: int = 1) -> HittingSample:
    """Exact i.i.d. samples of ``tau_K`` from state ``x0``.

    Exponential holding times with rate ``-Q_ii`` and jumps from the embedded
    chain.  Paths still outside K at ``time_cap`` (default 50 / gap) are
    censored and counted separately.
    """
    if not 0 <= x0 < chain.n:
        raise DomainError(f"start state {x0} outside [0, {chain.n - 1}]")
    cap = _default_cap(chain) if time_cap is None else float(time_cap)
    mask = K.mask

    def work(size, rng):
        return _hit_from(chain, np.full(size, x0), mask, rng, cap)

    times = np.concatenate(_run_workers(work, n_samples, seed, workers))
    times, censored = _censor(times, "jump-chain")
    return HittingSample(times, int(x0), K.describe(), int(seed), "exact_jump", None, censored, cap)


# ---------------------------------------------------------------------------
# Euler-Maruyama


def _diffusion_cap(spec: DiffusionSpec1D) -> float:
    chain = discretize_diffusion_1d(spec, 400)
    return DEFAULT_CAP_FACTOR / spectral_gap(chain, invariant_measure(chain)).gap


def _em_paths(spec, x0, lo, hi, dt, size, rng, cap, bridge):
    L, R = spec.domain
    x = np.full(size, float(x0))
    t = np.zeros(size)
    out = np.full(size, math.inf)
    alive = np.arange(size)
    sdt = math.sqrt(dt)
    while alive.size:
        a = spec.drift(x)
        b = spec.diffusion(x)
        xn = x + a * dt + np.sqrt(b) * sdt * rng.standard_normal(alive.size)
        xn = np.where(xn > R, 2 * R - xn, xn)
        xn = np.where(xn < L, 2 * L - xn, xn)
        tn = t + dt
        inside = (xn >= lo) & (xn <= hi)
        jumped = ((x > hi) & (xn < lo)) | ((x < lo) & (xn > hi))
        hit = inside | jumped
        # entry time by linear interpolation to the boundary that was crossed
        edge = np.where(x > hi, hi, lo)
        frac = np.clip((x - edge) / np.where(x != xn, x - xn, 1.0), 0.0, 1.0)
        when = t + frac * dt
        if bridge:
            side_hi = (x > hi) & (xn > hi)
            side_lo = (x < lo) & (xn < lo)
            c = np.where(side_hi, hi, lo)
            p = np.exp(-2.0 * (x - c) * (xn - c) / (b * dt))
            u = rng.random(alive.size)
            crossed = (side_hi | side_lo) & (u < p)
            when = np.where(crossed & ~hit, t + 0.5 * dt, when)
            hit |= crossed
        out[alive[hit]] = when[hit]
        keep = ~hit & (tn < cap)
        alive, x, t = alive[keep], xn[keep], tn[keep]
    return out


def sample_hitting_time_diffusion(spec: DiffusionSpec1D, x0: float, K: tuple, dt: float, n_samples: int,
                                  seed: int, time_cap: Optional[float] = None, bridge: bool = True,
                                  workers: int = 1) -> HittingSample:
    """Euler-Maruyama hitting times of the interval ``K = (lo, hi)`` from ``x0``.

    With ``bridge=True`` a step whose endpoints both lie on one side of K is
    still counted as a hit with the Brownian-bridge crossing probability
    ``exp(-2 d0 d1 / (b dt))`` (``d0, d1`` distances to the near boundary).
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    lo, hi = (float(v) for v in K)
    desc = f"[{lo:g},{hi:g}]"
    if lo <= x0 <= hi:
        return HittingSample(np.zeros(n_samples), float(x0), desc, int(seed), "euler_maruyama", dt)
    cap = _diffusion_cap(spec) if time_cap is None else float(time_cap)

    def work(size, rng):
        return _em_paths(spec, x0, lo, hi, dt, size, rng, cap, bridge)

    times = np.concatenate(_run_workers(work, n_samples, seed, workers))
    times, censored = _censor(times, "Euler-Maruyama")
    scheme = "euler_maruyama" if bridge else "euler_maruyama_naive"
    return HittingSample(times, float(x0), desc, int(seed), scheme, dt, censored, cap)


# ---------------------------------------------------------------------------
# estimators


def tail_rate(times: np.ndarray, quantile: float = 0.9) -> Optional[float]:
    """Exponential-tail rate from the excesses over an upper quantile (MLE)."""
    if times.size < 20:
        return None
    q = np.quantile(times, quantile)
    excess = times[times > q] - q
    if excess.size == 0 or excess.mean() <= 0:
        return None
    return float(1.0 / excess.mean())


def estimate_exp_moment(sample: HittingSample, alpha: float, alpha_star: Optional[float] = None,
                        bootstrap: bool = False, seed: int = 0) -> MomentEstimate:
    """Empirical ``E exp(alpha tau)`` with a normal-approximation 95% interval.

    ``tail_flag`` is raised when alpha is within 80% of the threshold (given,
    or estimated from the sample tail) or when the top 1% of the terms carry
    more than half of the sum.  With ``bootstrap=True`` and a raised flag, a
    1000-resample percentile interval is attached as well.
    """
    tau = np.asarray(sample.times, dtype=float)
    if tau.size == 0:
        raise DomainError("empty sample")
    alpha = float(alpha)
    rate = tail_rate(tau)
    threshold = alpha_star if alpha_star is not None else rate
    cap_term = None
    with np.errstate(over="ignore"):
        vals = np.exp(alpha * tau)
        if sample.censored:
            cap_term = math.exp(alpha * sample.time_cap) if alpha * sample.time_cap < 700 else math.inf
    n = tau.size
    if not np.all(np.isfinite(vals)):
        return MomentEstimate(alpha, math.inf, math.inf, n, True, sample.censored, math.inf, rate)
    mean = math.fsum(vals) / n
    half = Z95 * float(np.std(vals, ddof=1)) / math.sqrt(n) if n > 1 else math.inf
    if alpha == 0:
        half = 0.0
    flag = False
    if alpha > 0 and threshold is not None and alpha >= 0.8 * threshold:
        flag = True
    top = np.sort(vals)[-max(1, n // 100):]
    if alpha > 0 and math.fsum(top) > 0.5 * math.fsum(vals):
        flag = True
    lower = None
    if sample.censored:
        lower = (math.fsum(vals) + sample.censored * cap_term) / (n + sample.censored)
    boot = None
    if bootstrap and flag:
        rng = worker_rng(seed, 0)
        means = vals[rng.integers(0, n, size=(1000, n))].mean(axis=1)
        boot = (float(np.quantile(means, 0.025)), float(np.quantile(means, 0.975)))
    return MomentEstimate(alpha, mean, half, n, flag, sample.censored, lower, rate, boot)


def shifted_moment_oracle(chain: FiniteChain, measure: InvariantMeasure, x0: int, K: TargetSet, t: float,
                          alpha_tilde: float) -> float:
    """``E_x0 exp(alpha_tilde tau_K^t) = (e^{tQ} phi)(x0)`` with phi the Lyapunov potential."""
    phi = lyapunov_potential(chain, measure, K, alpha_tilde).values
    return float((scipy.linalg.expm(t * chain.Q) @ phi)[x0])


def estimate_shifted_moment(chain: FiniteChain, measure: InvariantMeasure, x0: int, K: TargetSet, t: float,
                            alpha_tilde: float, n_samples: int = 20000, seed: int = 0, workers: int = 1):
    """Monte Carlo ``E_x0 exp(alpha_tilde tau_K^t)``, ``tau_K^t = inf{s >= 0: X_{t+s} in K}``.

    Returns ``(estimate, oracle)``; the oracle is the matrix-exponential value.
    """
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    oracle = shifted_moment_oracle(chain, measure, x0, K, t, alpha_tilde)
    cap = _default_cap(chain)
    mask = K.mask

    def work(size, rng):
        starts = np.full(size, x0)
        if t > 0:
            starts = _advance(chain, starts, t, rng)
        return _hit_from(chain, starts, mask, rng, cap)

    times = np.concatenate(_run_workers(work, n_samples, seed, workers))
    times, censored = _censor(times, "jump-chain")
    sample = HittingSample(times, int(x0), K.describe(), int(seed), "exact_jump", None, censored, cap)
    return estimate_exp_moment(sample, alpha_tilde), oracle
