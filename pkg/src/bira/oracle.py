"""Inexact evaluation oracles and the benchmark problem family.

A problem exposes its objective and constraints only through evaluations
at a requested precision pair ``y = (gf, gh)``: the returned values may be
off by an error whose scale is proportional to the corresponding
component.  Every evaluation is charged to a ledger so complexity audits
can count work after the fact.  Refinement (tightening ``y``) is free;
evaluating at the tighter level is what costs.

The synthetic problems used in tests and benchmarks add a smooth
deterministic perturbation (a product of two sines of linear forms) whose
magnitude and derivatives have closed-form bounds, so every smoothness
constant reported by :meth:`SyntheticProblem.constants` is analytic, and
the perturbation scale itself is calibrated against the error budget the
convergence theory allows.
"""

import math
from abc import ABC, abstractmethod

import numpy as np

from .core import (
    AlgorithmParams,
    BoxPolytope,
    ContractError,
    DomainError,
    PrecisionLevel,
    ProblemConstants,
    as_point,
)
from .diagnostics import constants as derived_constants


class EvaluationLedger:
    """Counts of oracle evaluations by kind."""

    FIELDS = ("f_evals", "gradf_evals", "h_evals", "gradh_evals")

    def __init__(self):
        self.f_evals = 0
        self.gradf_evals = 0
        self.h_evals = 0
        self.gradh_evals = 0

    def snapshot(self):
        return {name: getattr(self, name) for name in self.FIELDS}

    def delta(self, since):
        return {name: getattr(self, name) - since[name] for name in self.FIELDS}

    @property
    def total(self):
        return sum(getattr(self, name) for name in self.FIELDS)

    def reset(self):
        for name in self.FIELDS:
            setattr(self, name, 0)


class InexactProblem(ABC):
    """Base class for problems evaluated through a precision-controlled oracle.

    Subclasses implement the underscore hooks; the public ``eval_*``
    wrappers validate the point, charge the ledger, and dispatch.  The
    wrappers are the only sanctioned way to evaluate: everything that goes
    through them is counted.
    """

    def __init__(self, name, box: BoxPolytope, m):
        self.name = name
        self.box = box
        self.m = int(m)
        self.ledger = EvaluationLedger()

    @property
    def dim(self):
        return self.box.dim

    def _check(self, x):
        x = as_point(x, self.dim)
        if not self.box.contains(x):
            raise DomainError(f"point outside the box domain of {self.name}")
        return x

    def eval_f(self, x, y: PrecisionLevel):
        x = self._check(x)
        self.ledger.f_evals += 1
        return float(self._f(x, y))

    def eval_grad_f(self, x, y: PrecisionLevel):
        x = self._check(x)
        self.ledger.gradf_evals += 1
        return np.asarray(self._grad_f(x, y), dtype=float)

    def eval_h(self, x, y: PrecisionLevel):
        x = self._check(x)
        self.ledger.h_evals += 1
        out = np.asarray(self._h(x, y), dtype=float)
        if out.shape != (self.m,):
            raise ContractError(f"constraint oracle returned shape {out.shape}")
        return out

    def eval_grad_h(self, x, y: PrecisionLevel):
        x = self._check(x)
        self.ledger.gradh_evals += 1
        out = np.atleast_2d(np.asarray(self._grad_h(x, y), dtype=float))
        if out.shape != (self.m, self.dim):
            raise ContractError(f"constraint jacobian has shape {out.shape}")
        return out

    def refine(self, y: PrecisionLevel, gf_target, gh_target):
        """Return a precision level meeting both targets.

        Targets must not exceed the current components; precision never
        degrades over a run.
        """
        if gf_target > y.gf or gh_target > y.gh:
            raise ContractError("refinement target exceeds current precision")
        out = self._refine(y, float(gf_target), float(gh_target))
        if out.gf > gf_target or out.gh > gh_target:
            raise ContractError("oracle refinement missed its target")
        return out

    @abstractmethod
    def _f(self, x, y):
        ...

    @abstractmethod
    def _grad_f(self, x, y):
        ...

    @abstractmethod
    def _h(self, x, y):
        ...

    @abstractmethod
    def _grad_h(self, x, y):
        ...

    @abstractmethod
    def _refine(self, y, gf_target, gh_target):
        ...

    @abstractmethod
    def constants(self) -> ProblemConstants:
        ...

    def pdp(self, x, y: PrecisionLevel):
        """Optional cheap feasibility shortcut: ``(point, precision)`` or None."""
        return None

    def exact_f(self, x):
        return None

    def exact_h(self, x):
        return None

    @property
    def has_exact(self):
        return self.exact_f(self.box.lower) is not None

    def extras(self):
        """Constants-chain extras for this problem (see diagnostics)."""
        return {}


class _SineNoise:
    """Product of two sines of linear forms: bounded, smooth, deterministic.

    ``value`` lies in [-1/div, 1/div]; the gradient norm is at most
    ``(w1 + w2)/div`` and the Hessian norm at most ``(w1 + w2)**2/div``.
    """

    def __init__(self, n, rng, w1, w2, div=1.0):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        self.u = u / np.linalg.norm(u)
        self.v = v / np.linalg.norm(v)
        self.w1 = float(w1)
        self.w2 = float(w2)
        self.p1 = float(rng.uniform(0.0, 2.0 * np.pi))
        self.p2 = float(rng.uniform(0.0, 2.0 * np.pi))
        self.div = float(div)

    def value(self, x):
        s1 = math.sin(self.w1 * float(self.u @ x) + self.p1)
        s2 = math.sin(self.w2 * float(self.v @ x) + self.p2)
        return s1 * s2 / self.div

    def grad(self, x):
        a1 = self.w1 * float(self.u @ x) + self.p1
        a2 = self.w2 * float(self.v @ x) + self.p2
        return (
            self.w1 * math.cos(a1) * math.sin(a2) * self.u
            + self.w2 * math.sin(a1) * math.cos(a2) * self.v
        ) / self.div

    @property
    def grad_bound(self):
        return (self.w1 + self.w2) / self.div

    @property
    def hess_bound(self):
        return (self.w1 + self.w2) ** 2 / self.div


class SyntheticProblem(InexactProblem):
    """Closed-form problem with a calibrated sine perturbation.

    The perturbation enters multiplied by the matching precision
    component, so evaluations at a zero component are exact; refinement
    hits requested targets exactly.
    """

    def __init__(self, name, box, objective, objective_grad, constraint,
                 constraint_jac, m, x0, y0, problem_constants, *,
                 noise_scale_f=0.0, noise_scale_h=0.0, noise_seed=0,
                 known_solution=None, infeasible=False, pdp_map=None,
                 extra_overrides=None):
        super().__init__(name, box, m)
        self._objective = objective
        self._objective_grad = objective_grad
        self._constraint = constraint
        self._constraint_jac = constraint_jac
        self.x0 = as_point(x0, self.dim)
        self.y0 = y0
        self._pc = problem_constants
        self.noise_scale_f = float(noise_scale_f)
        self.noise_scale_h = float(noise_scale_h)
        self.known_solution = (
            None if known_solution is None else as_point(known_solution, self.dim)
        )
        self.infeasible = bool(infeasible)
        self._pdp_map = pdp_map
        self._extra_overrides = dict(extra_overrides or {})
        rng = np.random.default_rng(noise_seed)
        self._nf = _SineNoise(self.dim, rng, NOISE_FREQ_F[0], NOISE_FREQ_F[1])
        self._nh = [
            _SineNoise(self.dim, rng, NOISE_FREQ_H[0], NOISE_FREQ_H[1],
                       div=math.sqrt(m))
            for _ in range(m)
        ]

    def _f(self, x, y):
        val = self._objective(x)
        if self.noise_scale_f and y.gf:
            val += self.noise_scale_f * y.gf * self._nf.value(x)
        return val

    def _grad_f(self, x, y):
        g = np.asarray(self._objective_grad(x), dtype=float)
        if self.noise_scale_f and y.gf:
            g = g + self.noise_scale_f * y.gf * self._nf.grad(x)
        return g

    def _h(self, x, y):
        h = np.atleast_1d(np.asarray(self._constraint(x), dtype=float))
        if self.noise_scale_h and y.gh:
            h = h + self.noise_scale_h * y.gh * np.array(
                [nz.value(x) for nz in self._nh]
            )
        return h

    def _grad_h(self, x, y):
        J = np.atleast_2d(np.asarray(self._constraint_jac(x), dtype=float))
        if self.noise_scale_h and y.gh:
            J = J + self.noise_scale_h * y.gh * np.array(
                [nz.grad(x) for nz in self._nh]
            )
        return J

    def _refine(self, y, gf_target, gh_target):
        return PrecisionLevel(gf_target, gh_target)

    def constants(self):
        return self._pc

    def pdp(self, x, y):
        if self._pdp_map is None:
            return None
        return self._pdp_map(x, y)

    def exact_f(self, x):
        return float(self._objective(as_point(x, self.dim)))

    def exact_h(self, x):
        x = as_point(x, self.dim)
        return np.atleast_1d(np.asarray(self._constraint(x), dtype=float))

    @property
    def has_exact(self):
        return True

    def extras(self):
        out = {
            "beta": max(2.0 * max(self.noise_scale_f, self.noise_scale_h),
                        1e-12),
            "gamma": 0.5,
            "k_R": 0.0,
            "n_pdp": 2,
            "noise_scale_f": self.noise_scale_f,
            "noise_scale_h": self.noise_scale_h,
        }
        out.update(self._extra_overrides)
        return out


NOISE_FREQ_F = (3.0, 5.0)
NOISE_FREQ_H = (2.0, 7.0)


def _calibrate_noise(pc_for, params, base_extras):
    """Fixed point of: scale -> half the error budget the chain allows.

    The budget depends on the smoothness constants, which themselves grow
    with the scale, so iterate; the map is decreasing and the effect of
    the scale on the constants is tiny, giving fast convergence.
    """
    ns = 0.0
    for _ in range(60):
        ext = dict(base_extras)
        ext["beta"] = max(2.0 * ns, 1e-12)
        tc = derived_constants(pc_for(ns), params, extras=ext)
        ns_new = tc.beta_bar / 2.0
        if ns > 0.0 and abs(ns_new - ns) <= 1e-12 * ns:
            return ns_new
        ns = ns_new
    return ns


def _p1_family(name, feasibility_offset, start_mode, y0, *, pdp=False,
               params=None):
    """Quadratic objective, one scaled linear constraint, dimension 5."""
    params = params or AlgorithmParams.defaults()
    n = 5
    box = BoxPolytope(-10.0 * np.ones(n), 10.0 * np.ones(n))
    x_f = np.array([1.0, 2.0, -1.0, 0.5, -2.0])
    a = np.ones(n) / math.sqrt(n)
    scale = 0.25

    if feasibility_offset is None:
        # right-hand side chosen so the start point sits on the constraint
        x_sol = x_f + 2.0 * a
        b = float(a @ x_sol)
    else:
        b = float(a @ x_f) + feasibility_offset
        x_sol = x_f + feasibility_offset * a

    def objective(x):
        d = x - x_f
        return float(d @ d) / 20.0

    def objective_grad(x):
        return (x - x_f) / 10.0

    def constraint(x):
        return np.array([scale * (float(a @ x) - b)])

    def constraint_jac(x):
        return (scale * a)[None, :]

    g0 = y0.g
    coord_span = np.maximum(10.0 - x_f, x_f + 10.0)
    sup_dist = float(np.linalg.norm(coord_span))
    sup_lin = 10.0 * math.sqrt(n) + abs(b)

    def pc_for(ns):
        f_noise_bound = max(sum(NOISE_FREQ_F), sum(NOISE_FREQ_F) ** 2)
        gh_noise_grad = sum(NOISE_FREQ_H)
        gh_noise_hess = sum(NOISE_FREQ_H) ** 2
        C_f = sup_dist**2 / 20.0 + ns * g0
        L_f = max(sup_dist / 10.0, 0.1) + ns * g0 * f_noise_bound
        C_h = scale * sup_lin + ns * g0
        G_h = scale + ns * g0 * gh_noise_grad
        LJ = ns * g0 * gh_noise_hess
        L_h = max(G_h, LJ)
        L_c = G_h**2 + C_h * LJ
        return ProblemConstants(
            L_f=L_f, L_h=L_h, L_c=L_c, C_f=C_f, C_h=C_h,
            C_g=max(1.0, g0), provenance="analytic",
        )

    extras_base = {"gamma": 0.5, "k_R": 4.0 if pdp else 0.0, "n_pdp": 2}
    ns = _calibrate_noise(pc_for, params, extras_base)

    if start_mode == "offset":
        tang = np.array([1.0, -1.0, 0.0, 0.0, 0.0]) / math.sqrt(2.0)
        x0 = x_f + 10.0 * a + 3.0 * tang
    else:
        x0 = x_sol.copy()

    pdp_map = None
    if pdp:

        def pdp_map(x, y):
            z = x - (float(a @ x) - b) * a
            return z, PrecisionLevel(0.5 * y.gf, 0.5 * y.gh)

    return SyntheticProblem(
        name, box, objective, objective_grad, constraint, constraint_jac,
        1, x0, y0, pc_for(ns),
        noise_scale_f=ns, noise_scale_h=ns, noise_seed=11,
        known_solution=x_sol, infeasible=False, pdp_map=pdp_map,
        extra_overrides=extras_base,
    )


def make_p1(params=None):
    """Feasible start two units off the constraint, quadratic objective."""
    return _p1_family("p1", 2.0, "offset", PrecisionLevel(0.5, 0.5),
                      params=params)


def make_p1_pdp(params=None):
    """Same geometry as p1 but with a closed-form feasibility shortcut."""
    return _p1_family("p1_pdp", 2.0, "offset", PrecisionLevel(0.5, 0.5),
                      pdp=True, params=params)


def make_p4(params=None):
    """Starts exactly at the solution with exact precision: converges at once."""
    return _p1_family("p4", None, "solution", PrecisionLevel(0.0, 0.0),
                      params=params)


def make_p2(params=None):
    """Scaled valley objective on the quarter-scaled unit circle."""
    params = params or AlgorithmParams.defaults()
    box = BoxPolytope(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    y0 = PrecisionLevel(0.5, 0.5)
    g0 = y0.g

    def objective(x):
        return (100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2) / 1000.0

    def objective_grad(x):
        d = x[1] - x[0] ** 2
        return np.array([
            (-400.0 * x[0] * d - 2.0 * (1.0 - x[0])) / 1000.0,
            200.0 * d / 1000.0,
        ])

    def constraint(x):
        return np.array([(x[0] ** 2 + x[1] ** 2 - 1.0) / 4.0])

    def constraint_jac(x):
        return np.array([[x[0] / 2.0, x[1] / 2.0]])

    def pc_for(ns):
        noise_f_bound = max(sum(NOISE_FREQ_F), sum(NOISE_FREQ_F) ** 2)
        noise_h_grad = sum(NOISE_FREQ_H)
        noise_h_hess = sum(NOISE_FREQ_H) ** 2
        C_f = 3.609 + ns * g0
        L_f = 5.75 + ns * g0 * noise_f_bound
        C_h = 1.75 + ns * g0
        G_h = math.sqrt(2.0) + ns * g0 * noise_h_grad
        LJ = 0.5 + ns * g0 * noise_h_hess
        L_h = max(G_h, LJ)
        L_c = G_h**2 + C_h * LJ
        return ProblemConstants(
            L_f=L_f, L_h=L_h, L_c=L_c, C_f=C_f, C_h=C_h, C_g=1.0,
            provenance="analytic",
        )

    extras_base = {"gamma": 0.5, "k_R": 0.0, "n_pdp": 2}
    ns = _calibrate_noise(pc_for, params, extras_base)
    return SyntheticProblem(
        "p2", box, objective, objective_grad, constraint, constraint_jac,
        1, np.array([-1.8, 1.2]), y0, pc_for(ns),
        noise_scale_f=ns, noise_scale_h=ns, noise_seed=23,
        known_solution=None, infeasible=False,
        extra_overrides=extras_base,
    )


def make_p3(params=None):
    """Linear objective subject to an unsatisfiable constraint: the
    restoration phase must detect and report the infeasibility."""
    box = BoxPolytope(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))

    def objective(x):
        return (x[0] + 2.0 * x[1]) / 10.0

    def objective_grad(x):
        return np.array([0.1, 0.2])

    def constraint(x):
        return np.array([x[0] ** 2 + 1.0])

    def constraint_jac(x):
        return np.array([[2.0 * x[0], 0.0]])

    pc = ProblemConstants(
        L_f=math.sqrt(0.05), L_h=2.0, L_c=8.0, C_f=0.3, C_h=2.0, C_g=1.0,
        provenance="analytic",
    )
    return SyntheticProblem(
        "p3", box, objective, objective_grad, constraint, constraint_jac,
        1, np.array([0.8, 0.3]), PrecisionLevel(0.0, 0.0), pc,
        noise_scale_f=0.0, noise_scale_h=0.0, noise_seed=31,
        known_solution=None, infeasible=True,
    )


_REGISTRY = {
    "p1": make_p1,
    "p2": make_p2,
    "p3": make_p3,
    "p4": make_p4,
    "p1_pdp": make_p1_pdp,
}


def problem_by_name(name, params=None):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ContractError(
            f"unknown problem {name!r}; choose from {sorted(_REGISTRY)}"
        ) from None
    return factory(params=params)


def make_suite(params=None):
    """The four standard benchmark problems, in run order."""
    return [make_p1(params), make_p2(params), make_p3(params), make_p4(params)]
