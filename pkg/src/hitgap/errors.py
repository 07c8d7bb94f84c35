"""Exception hierarchy shared by all hitgap modules."""

from __future__ import annotations


class HitgapError(Exception):
    """Base class for every error raised by hitgap."""


class ChainValidationError(HitgapError, ValueError):
    """A generator matrix violates one or more structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid chain")


class IrreducibilityError(HitgapError, ValueError):
    """The positivity graph of the generator is not strongly connected."""

    def __init__(self, partition):
        self.partition = [sorted(int(i) for i in block) for block in partition]
        super().__init__(f"chain is reducible; communicating classes: {self.partition}")


class EllipticityError(HitgapError, ValueError):
    """Diffusion coefficient is not strictly positive on the grid."""


class DomainError(HitgapError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class NotReversibleError(HitgapError):
    """Operation requires detailed balance and the chain does not satisfy it."""


class BlowupError(HitgapError):
    """Requested exponential moment is infinite (alpha >= alpha_star)."""

    def __init__(self, alpha, alpha_star, detail=""):
        self.alpha = float(alpha)
        self.alpha_star = float(alpha_star)
        msg = f"alpha={self.alpha:.12g} is not below the blow-up threshold alpha_star={self.alpha_star:.12g}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class TruncationError(HitgapError):
    """A truncated integral cannot meet the requested tolerance."""

    def __init__(self, message, suggested):
        self.suggested = float(suggested)
        super().__init__(f"{message}; suggested value: {self.suggested:.6g}")


class PsiModeError(HitgapError, ValueError):
    """A psi function does not satisfy the hypotheses of the requested mode."""


class GeometryError(HitgapError, ValueError):
    """Target / separating sets do not have the required geometry."""


class SolverError(HitgapError):
    """Internal numerical failure (singular solve, non-convergence)."""


class ConfigError(HitgapError):
    """Configuration failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))
