"""Shared value types and scalar measures for the inexact-restoration solver.

Decision points are plain 1-D float64 numpy arrays throughout the package;
:func:`as_point` validates one at API boundaries.  Precision levels live in
the nonnegative quadrant: ``gf`` bounds the objective evaluation error scale
and ``gh`` the constraint one, and the scalar precision measure is their max.
"""

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class ConfigurationError(ValueError):
    """Invalid parameter or configuration input."""


class ContractError(ValueError):
    """A caller violated an operation precondition."""


class DomainError(ValueError):
    """A point lies outside the problem's box domain."""


class InvariantError(RuntimeError):
    """An internal guarantee failed; indicates a broken assumption."""


class AbnormalTermination(RuntimeError):
    """An algorithm phase hit a safety cap without reaching an exit test."""

    def __init__(self, message, summary=None):
        super().__init__(message)
        self.summary = summary or {}


class InsufficientDataError(ValueError):
    """Not enough data for the requested estimate."""


class SchemaError(ValueError):
    """A serialized trace or config does not match the expected schema."""


#: Acceptance targets for the subproblem-solver certificates.  The inner
#: solvers iterate well past these; the targets only gate the certificates.
DEFAULT_KAPPAS = {
    "kappa_R": 10.0,
    "kappa_T": 10.0,
    "kappa": 10.0,
    "kappa_phi": 10.0,
}


def as_point(x, dim=None):
    """Validate and return ``x`` as a finite 1-D float64 array.

    Parameters
    ----------
    x : array_like
        Candidate decision point.
    dim : int, optional
        Required length.

    Raises
    ------
    ContractError
        If ``x`` is not 1-D, not finite, or has the wrong length.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"decision point must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ContractError(f"decision point has length {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ContractError("decision point has non-finite coordinates")
    return arr


@dataclass(frozen=True)
class BoxPolytope:
    """Axis-aligned box ``{x : lower <= x <= upper}``, both bounds finite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or hi.shape != lo.shape:
            raise ConfigurationError("box bounds must be matching 1-D arrays")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigurationError("box bounds must be finite")
        if np.any(lo > hi):
            raise ConfigurationError("box has lower > upper in some coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def contains(self, x, tol=1e-8):
        """Membership test with tolerance scaled by ``1 + ||x||``."""
        x = np.asarray(x, dtype=float)
        slack = tol * (1.0 + float(np.linalg.norm(x)))
        return bool(
            np.all(x >= self.lower - slack) and np.all(x <= self.upper + slack)
        )

    def clip(self, z):
        return np.clip(np.asarray(z, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class PrecisionLevel:
    """Precision pair ``(gf, gh)``; both components nonnegative and finite."""

    gf: float
    gh: float

    def __post_init__(self):
        gf = float(self.gf)
        gh = float(self.gh)
        if not (math.isfinite(gf) and math.isfinite(gh)):
            raise ContractError("precision components must be finite")
        if gf < 0.0 or gh < 0.0:
            raise ContractError("precision components must be nonnegative")
        object.__setattr__(self, "gf", gf)
        object.__setattr__(self, "gh", gh)

    @property
    def g(self):
        return max(self.gf, self.gh)

    def as_tuple(self):
        return (self.gf, self.gh)


def precision_g(y: PrecisionLevel) -> float:
    """Scalar precision measure: max of the two components."""
    return y.g


def merit_phi(f_val, h_norm, g_val, theta):
    """Penalty merit value ``theta*f + (1-theta)*(||h|| + g)``.

    ``theta`` must lie in [0, 1]; ``h_norm`` and ``g_val`` must be
    nonnegative.
    """
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise ContractError(f"theta must lie in [0, 1], got {theta}")
    if h_norm < 0.0 or g_val < 0.0:
        raise ContractError("h_norm and g_val must be nonnegative")
    return theta * float(f_val) + (1.0 - theta) * (float(h_norm) + float(g_val))


def constraint_ssq(h_vec):
    """Half squared norm of the constraint residual vector."""
    h = np.asarray(h_vec, dtype=float)
    return 0.5 * float(np.dot(h, h))


def infeasibility(h_norm, g_val):
    """Combined infeasibility-plus-imprecision measure ``||h|| + g``."""
    if h_norm < 0.0 or g_val < 0.0:
        raise ContractError("h_norm and g_val must be nonnegative")
    return float(h_norm) + float(g_val)


_PARAM_POSITIVE = (
    "alpha_R",
    "alpha",
    "sigma_min",
    "mu_min",
    "beta_c",
    "beta_PDP",
)


@dataclass(frozen=True)
class AlgorithmParams:
    """Solver parameters; validated once at construction.

    The attribute names double as the flat keys of the CLI config format.
    """

    r: float = 0.5
    r_feas: float = 0.05
    alpha: float = 0.1
    alpha_R: float = 0.5
    M: float = 1.0
    sigma_min: float = 4.0
    sigma_max: float = 40.0
    mu_min: float = 1e-3
    mu_max: float = 1e3
    mu_init: float = 1.0
    beta_c: float = 1.0
    beta_PDP: float = 1.0
    theta_0: float = 0.5
    eps_prec_bar: float = 0.0
    N_prec: int = 2
    N_acce: int = 0

    def __post_init__(self):
        for name in _PARAM_POSITIVE:
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"parameter {name} must be positive")
        if not 0.0 < self.r < 1.0:
            raise ConfigurationError("r must lie in (0, 1)")
        if not 0.0 < self.r_feas < self.r:
            raise ConfigurationError("r_feas must lie in (0, r)")
        if self.M < 1.0:
            raise ConfigurationError("M must be >= 1")
        if self.sigma_max < self.sigma_min:
            raise ConfigurationError("sigma_max must be >= sigma_min")
        if self.mu_max < self.mu_min:
            raise ConfigurationError("mu_max must be >= mu_min")
        if not self.mu_min <= self.mu_init <= self.mu_max:
            raise ConfigurationError("mu_init must lie in [mu_min, mu_max]")
        if not 0.0 < self.theta_0 < 1.0:
            raise ConfigurationError("theta_0 must lie in (0, 1)")
        if self.eps_prec_bar < 0.0:
            raise ConfigurationError("eps_prec_bar must be nonnegative")
        if not (isinstance(self.N_prec, int) and self.N_prec >= 0):
            raise ConfigurationError("N_prec must be a nonnegative integer")
        if not (isinstance(self.N_acce, int) and self.N_acce >= 0):
            raise ConfigurationError("N_acce must be a nonnegative integer")
        for name in ("r", "r_feas", "alpha", "alpha_R", "M", "sigma_min",
                     "sigma_max", "mu_min", "mu_max", "mu_init", "beta_c",
                     "beta_PDP", "theta_0", "eps_prec_bar"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ConfigurationError(f"parameter {name} must be finite")
            object.__setattr__(self, name, val)

    @classmethod
    def defaults(cls):
        return cls()

    def to_dict(self):
        return {
            "r": self.r, "r_feas": self.r_feas, "alpha": self.alpha,
            "alpha_R": self.alpha_R, "M": self.M,
            "sigma_min": self.sigma_min, "sigma_max": self.sigma_max,
            "mu_min": self.mu_min, "mu_max": self.mu_max,
            "mu_init": self.mu_init, "beta_c": self.beta_c,
            "beta_PDP": self.beta_PDP, "theta_0": self.theta_0,
            "eps_prec_bar": self.eps_prec_bar, "N_prec": self.N_prec,
            "N_acce": self.N_acce,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


_CONSTANT_FIELDS = ("L_f", "L_h", "L_c", "C_f", "C_h", "C_g")


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness and boundedness constants of a problem.

    ``provenance`` records, per field, whether the value is analytic or a
    sampled estimate; a plain string applies to every field.
    """

    L_f: float
    L_h: float
    L_c: float
    C_f: float
    C_h: float
    C_g: float
    provenance: Mapping[str, str] | str = "analytic"

    def __post_init__(self):
        for name in _CONSTANT_FIELDS:
            val = float(getattr(self, name))
            if not (math.isfinite(val) and val >= 0.0):
                raise ConfigurationError(f"constant {name} must be finite and >= 0")
            object.__setattr__(self, name, val)
        if self.C_g < 1.0:
            raise ConfigurationError("C_g must be >= 1")
        prov = self.provenance
        if isinstance(prov, str):
            prov = {name: prov for name in _CONSTANT_FIELDS}
        else:
            prov = dict(prov)
        for name, kind in prov.items():
            if name not in _CONSTANT_FIELDS:
                raise ConfigurationError(f"unknown constant field {name!r}")
            if kind not in ("analytic", "estimated"):
                raise ConfigurationError(f"bad provenance {kind!r} for {name}")
        missing = set(_CONSTANT_FIELDS) - set(prov)
        if missing:
            raise ConfigurationError(f"provenance missing for {sorted(missing)}")
        object.__setattr__(self, "provenance", prov)

    @property
    def analytic(self):
        return all(v == "analytic" for v in self.provenance.values())

    def to_dict(self):
        d = {name: getattr(self, name) for name in _CONSTANT_FIELDS}
        d["provenance"] = dict(self.provenance)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class PenaltyState:
    """Penalty weight with its history; pushes must be nonincreasing."""

    def __init__(self, theta_0):
        theta_0 = float(theta_0)
        if not 0.0 < theta_0 < 1.0:
            raise ConfigurationError("theta_0 must lie in (0, 1)")
        self._history = [theta_0]

    @property
    def theta(self):
        return self._history[-1]

    @property
    def history(self):
        return list(self._history)

    def push(self, theta_new):
        theta_new = float(theta_new)
        if not 0.0 < theta_new <= self.theta:
            raise InvariantError(
                f"penalty update must stay in (0, {self.theta}], got {theta_new}"
            )
        self._history.append(theta_new)
        return theta_new
