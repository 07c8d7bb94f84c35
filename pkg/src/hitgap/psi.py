"""Test functions psi of the hitting time, their derivatives and transforms.

``h_psi(x) = E_x psi(tau_K)`` is computed for the functions defined here.
Reference families are built from the polynomial smoothstep

    S_N(x) = x^{N+1} sum_{k=0}^{N} C(N+k, k) C(2N+1, N-k) (-x)^k,

which rises from 0 to 1 on [0, 1] with N vanishing derivatives at both ends,
so compositions of it are C^N with piecewise-polynomial derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, inf
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad, quad_vec

from .errors import ConfigError, PsiModeError
from .expr import Expression

TRANSFORM_RTOL = 1e-10


@lru_cache(maxsize=None)
def smoothstep_poly(order: int) -> Polynomial:
    c = np.zeros(2 * order + 2)
    for k in range(order + 1):
        c[order + 1 + k] = comb(order + k, k) * comb(2 * order + 1, order - k) * (-1) ** k
    return Polynomial(c)


@dataclass(frozen=True, eq=False)
class PsiFunction:
    """A function of time with known derivatives.

    ``derivs[j]`` evaluates the j-th derivative on arrays.  ``support`` is the
    closed support of psi (``None`` when it is not compact), ``dsupport`` that
    of psi' (upper end may be ``inf``), ``breakpoints`` the points where some
    derivative loses smoothness, and ``smoothness`` the largest k with psi in
    C^k.
    """

    name: str
    derivs: tuple
    dsupport: tuple
    breakpoints: tuple = ()
    support: Optional[tuple] = None
    smoothness: int = 0
    params: dict = field(default_factory=dict)

    def __call__(self, t):
        return self.derivs[0](np.asarray(t, dtype=float))

    def derivative(self, k: int = 1) -> Callable:
        if k >= len(self.derivs):
            raise PsiModeError(f"{self.name}: derivative of order {k} is not available")
        return self.derivs[k]

    @property
    def key(self):
        return (self.name, tuple(sorted((k, repr(v)) for k, v in self.params.items())))

    def prime(self) -> "PsiFunction":
        """psi' as a PsiFunction in its own right (used for h_{psi'})."""
        if len(self.derivs) < 2:
            raise PsiModeError(f"{self.name}: derivative not available")
        lo, hi = self.dsupport
        d2 = self.dsupport if len(self.derivs) > 2 else (0.0, 0.0)
        return PsiFunction(
            name=f"{self.name}'",
            derivs=self.derivs[1:],
            dsupport=d2,
            breakpoints=self.breakpoints,
            support=(lo, hi) if np.isfinite(hi) else None,
            smoothness=max(self.smoothness - 1, 0),
            params=dict(self.params, derivative=1),
        )

    def max_abs(self) -> float:
        lo, hi = self.support if self.support is not None else self.dsupport
        hi = hi if np.isfinite(hi) else lo + 50.0
        grid = np.linspace(lo, hi, 4001)
        return float(np.max(np.abs(self(grid))))

    def _pieces(self):
        lo, hi = self.support
        cuts = sorted({lo, hi, *(b for b in self.breakpoints if lo < b < hi)})
        return list(zip(cuts[:-1], cuts[1:]))

    def transform(self, zs):
        """``Psi(z) = int e^{zt} psi(t) dt`` for a scalar or array of z.

        Adaptive Gauss-Kronrod (``quad_vec``) on each smooth piece of the
        support, with every z integrated together as one vector-valued
        integrand.  Tolerance is relative to ``int e^{Re z t} |psi(t)| dt``,
        the bound on ``|Psi|`` along a vertical line.
        """
        if self.support is None:
            raise PsiModeError(f"{self.name}: transform needs compact support")
        zs = np.asarray(zs, dtype=complex)
        flat = zs.ravel()
        f = self.derivs[0]
        scale = max(self.tail_constant(0, float(np.max(flat.real))) if flat.size else 0.0, 1e-300)
        total = np.zeros(flat.size, dtype=complex)

        def integrand(t):
            e = np.exp(flat * t) * float(f(np.array([t]))[0])
            return np.concatenate([e.real, e.imag])

        for a, b in self._pieces():
            val, _ = quad_vec(integrand, a, b, epsabs=TRANSFORM_RTOL * scale, epsrel=TRANSFORM_RTOL,
                              norm="max", limit=10000)
            total += val[: flat.size] + 1j * val[flat.size :]
        return total.reshape(zs.shape) if zs.ndim else complex(total[0])

    @lru_cache(maxsize=64)
    def tail_constant(self, k: int, sigma: float) -> float:
        """``int e^{sigma t} |psi^{(k)}(t)| dt``; bounds ``|z^k Psi(z)|`` on Re z = sigma."""
        if self.support is None:
            raise PsiModeError(f"{self.name}: tail constant needs compact support")
        dk = self.derivative(k)
        total = 0.0
        for a, b in self._pieces():
            total += quad(lambda t: np.exp(sigma * t) * np.abs(dk(np.asarray(t))), a, b, limit=400, epsrel=1e-8)[0]
        return total


# ---------------------------------------------------------------------------
# mode checks


def second_difference_jump(psi: PsiFunction, step: float = 1e-3) -> float:
    """Largest jump between neighbouring second differences, relative to their size."""
    lo, hi = psi.support if psi.support is not None else (psi.dsupport[0], psi.dsupport[0] + 10.0)
    t = np.arange(lo - 0.25, hi + 0.25, step)
    v = psi(t)
    d2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / step**2
    return float(np.max(np.abs(np.diff(d2))) / (np.max(np.abs(d2)) + 1.0))


def check_inversion_mode(psi: PsiFunction) -> None:
    """Hypotheses for contour inversion: C^2, compact support inside [0, inf)."""
    if psi.support is None:
        raise PsiModeError(f"{psi.name}: contour inversion needs compact support")
    if psi.support[0] < 0:
        raise PsiModeError(f"{psi.name}: support {psi.support} is not inside [0, inf)")
    if psi.smoothness < 2:
        raise PsiModeError(f"{psi.name}: declared smoothness C^{psi.smoothness} is below C^2")
    jump = second_difference_jump(psi)
    if jump > 0.05:
        raise PsiModeError(f"{psi.name}: second differences jump by {jump:.3g} (not C^2)")


def check_derivative_mode(psi: PsiFunction) -> None:
    """supp psi' must lie in [0, inf) and psi'' must be available."""
    if psi.dsupport[0] < 0:
        raise PsiModeError(f"{psi.name}: supp psi' = {psi.dsupport} is not inside [0, inf)")
    if len(psi.derivs) < 3:
        raise PsiModeError(f"{psi.name}: psi'' is required")


# ---------------------------------------------------------------------------
# families


def _piecewise(t, pieces, outside=0.0):
    # pieces: list of (lo, hi, callable); first match wins
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, outside, dtype=float)
    done = np.zeros(t.shape, dtype=bool)
    for lo, hi, f in pieces:
        m = (t >= lo) & (t <= hi) & ~done
        if np.any(m):
            out[m] = f(t[m])
        done |= m
    return out


def bump(support=(1.0, 2.0), order: int = 5, height: float = 1.0) -> PsiFunction:
    """Symmetric C^order bump on ``[a, b]``: rises by S_N on the left half, falls on the right."""
    a, b = (float(v) for v in support)
    if not a < b:
        raise ConfigError([f"bump support must satisfy a < b, got {support}"])
    S = smoothstep_poly(order)
    w = b - a
    m = (a + b) / 2
    derivs = []
    for j in range(order + 3):
        Sj = S.deriv(j)
        left = lambda t, Sj=Sj, j=j: height * (2 / w) ** j * Sj(2 * (t - a) / w)  # noqa: E731
        right = lambda t, Sj=Sj, j=j: height * (-2 / w) ** j * Sj(2 * (b - t) / w)  # noqa: E731
        derivs.append(lambda t, left=left, right=right: _piecewise(t, [(a, m, left), (m, b, right)]))
    return PsiFunction(
        name="bump",
        derivs=tuple(derivs),
        dsupport=(a, b),
        breakpoints=(a, m, b),
        support=(a, b),
        smoothness=order,
        params={"support": [a, b], "order": order, "height": height},
    )


def smoothstep(rise=(1.0, 2.0), order: int = 3, height: float = 1.0) -> PsiFunction:
    """0 before ``a``, ``height`` after ``b``, S_N in between; supp psi' = [a, b]."""
    a, b = (float(v) for v in rise)
    if not a < b:
        raise ConfigError([f"smoothstep rise must satisfy a < b, got {rise}"])
    S = smoothstep_poly(order)
    w = b - a
    derivs = [lambda t: _piecewise(t, [(-inf, a, lambda s: 0 * s), (a, b, lambda s: height * S((s - a) / w))], height)]
    for j in range(1, order + 3):
        Sj = S.deriv(j)
        derivs.append(lambda t, Sj=Sj, j=j: _piecewise(t, [(a, b, lambda s: height * Sj((s - a) / w) / w**j)]))
    return PsiFunction(
        name="smoothstep",
        derivs=tuple(derivs),
        dsupport=(a, b),
        breakpoints=(a, b),
        support=None,
        smoothness=order,
        params={"rise": [a, b], "order": order, "height": height},
    )


def exponential(rate: float) -> PsiFunction:
    """``psi(t) = exp(-rate * max(t, 0))``, so ``h_psi`` is the z-potential at z = rate."""
    r = float(rate)
    derivs = [lambda t: np.exp(-r * np.maximum(np.asarray(t, dtype=float), 0.0))]
    for j in range(1, 4):
        derivs.append(
            lambda t, j=j: np.where(np.asarray(t) >= 0, (-r) ** j * np.exp(-r * np.maximum(np.asarray(t, dtype=float), 0.0)), 0.0)
        )
    return PsiFunction(
        name="exponential",
        derivs=tuple(derivs),
        dsupport=(0.0, inf),
        breakpoints=(0.0,),
        support=None,
        smoothness=0,
        params={"rate": r},
    )


def constant(value: float = 0.0) -> PsiFunction:
    c = float(value)
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    return PsiFunction(
        name="constant",
        derivs=(lambda t: np.full_like(np.asarray(t, dtype=float), c), zero, zero, zero, zero),
        dsupport=(0.0, 0.0),
        support=(0.0, 0.0) if c == 0 else None,
        smoothness=99,
        params={"value": c},
    )


def from_expressions(psi: str, dpsi: str, d2psi: str, dsupport, support=None, smoothness: int = 2) -> PsiFunction:
    """User psi from expression strings (variable ``x`` stands for time)."""
    fs = [Expression(psi), Expression(dpsi), Expression(d2psi)]
    lo, hi = (float(v) for v in dsupport)

    def restrict(f, j):
        if support is None:
            return f
        a, b = support
        return lambda t: _piecewise(t, [(a, b, f)])

    return PsiFunction(
        name="expression",
        derivs=tuple(restrict(f, j) for j, f in enumerate(fs)),
        dsupport=(lo, hi),
        breakpoints=tuple(support) if support else (),
        support=tuple(support) if support else None,
        smoothness=smoothness,
        params={"psi": psi, "dpsi": dpsi, "d2psi": d2psi},
    )


FAMILIES = {
    "bump": lambda p: bump(p.get("support", (1.0, 2.0)), p.get("order", 5), p.get("height", 1.0)),
    "smoothstep": lambda p: smoothstep(p.get("rise", (1.0, 2.0)), p.get("order", 3), p.get("height", 1.0)),
    "exponential": lambda p: exponential(p["rate"]),
    "constant": lambda p: constant(p.get("value", 0.0)),
    "expression": lambda p: from_expressions(
        p["psi"], p["dpsi"], p["d2psi"], p["dsupport"], p.get("support"), p.get("smoothness", 2)
    ),
}


def psi_from_config(d: dict) -> PsiFunction:
    """Build a psi from ``{"family": name, ...params}``."""
    d = dict(d)
    family = d.pop("family", None)
    if family not in FAMILIES:
        raise ConfigError([f"unknown psi family {family!r}; expected one of {sorted(FAMILIES)}"])
    try:
        return FAMILIES[family](d)
    except KeyError as exc:
        raise ConfigError([f"psi family {family!r} needs parameter {exc.args[0]!r}"]) from None
