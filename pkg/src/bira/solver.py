"""Outer loop: restore, update the penalty weight, take a tangent step.

Each iteration runs the restoration phase, applies the two restoration
failure tests, rebalances the penalty weight so the merit function is
guaranteed to decrease by a fixed fraction of the restoration gain, and
then searches over the regularization weight for a tangent step passing
both acceptance tests.  Everything measurable about the iteration is
written into an :class:`IterationRecord`; a finished run returns a
:class:`RunReport` that serializes losslessly, so audits can replay it
without touching the problem again.

Evaluations are cached aggressively across phase boundaries: the value
and violation measured for the accepted point of one iteration are the
current-point measurements of the next, and the gradient used by the
tangent model is the one the stopping test projects.  The per-iteration
ledger deltas in the records are the proof.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_KAPPAS,
    AlgorithmParams,
    InvariantError,
    PenaltyState,
    PrecisionLevel,
    merit_phi,
)
from .diagnostics import constants as derived_constants
from .diagnostics import restoration_inner_cap
from .geometry import TangentSet, project_tangent
from .qp import build_H, solve_tangent_qp
from .restoration import RestorationOutcome, resta

TRACE_VERSION = 1


def restoration_failure(h_xk_yR, h_xR_yR, g_yk, g_yR, r):
    """The two declare-failure tests applied to a restoration outcome.

    Returns ``(failed, kind)``.  The first test rejects insufficient
    contraction of the violation; the second rejects a precision gain
    that outpaces the feasibility gain by more than the fixed ratio.
    """
    if h_xR_yR > r * h_xk_yR:
        return True, "insufficient_contraction"
    if (h_xk_yR - h_xR_yR) < ((1.0 - r) / (2.0 * r)) * (g_yk - g_yR):
        return True, "precision_outpaced_feasibility"
    return False, None


def update_penalty(theta_k, f_xR_yR, f_xk_yR, h_xk_yR, h_xR_yR, g_yk, g_yR, r):
    """Largest penalty weight (capped by the current one) for which the
    restored point improves the merit by the guaranteed fraction.

    Raises :class:`InvariantError` if no weight in ``(0, theta_k]`` works;
    the restoration failure tests make that impossible for outcomes they
    let through.
    """
    dh = h_xR_yR - h_xk_yR
    dg = g_yR - g_yk
    df = f_xR_yR - f_xk_yR
    allowance = 0.5 * (1.0 - r) * (dh + dg)

    def holds(th):
        lhs = merit_phi(f_xR_yR, h_xR_yR, g_yR, th)
        rhs = merit_phi(f_xk_yR, h_xk_yR, g_yR, th) + allowance
        return lhs <= rhs

    if holds(theta_k):
        return theta_k
    denom = df - dh
    if denom <= 0.0:
        raise InvariantError(
            "penalty update has nonpositive curvature; restoration tests"
            " should have rejected this outcome"
        )
    theta_new = (allowance - dh) / denom
    theta_new = min(theta_new, theta_k)
    if not theta_new > 0.0:
        raise InvariantError("penalty update left no positive weight")
    # float rounding can leave the equality solution a hair over the line
    for _ in range(8):
        if holds(theta_new):
            return theta_new
        theta_new = float(np.nextafter(theta_new, 0.0))
    raise InvariantError("penalty update failed to verify after nudging")


@dataclass(frozen=True)
class IterationRecord:
    """Everything one outer iteration measured, decided, and spent."""

    k: int
    x_k: np.ndarray
    x_R: np.ndarray
    x_next: np.ndarray
    y_k: tuple
    y_R: tuple
    y_next: tuple
    theta_before: float
    theta_after: float
    mu_k: float
    ell_count: int
    h_xk_yk: float
    h_xk_yR: float
    h_xR_yR: float
    h_xk_ynext: float
    h_xnext_ynext: float
    g_yk: float
    g_yR: float
    g_ynext: float
    f_xk_yk: float
    f_xk_yR: float
    f_xR_yR: float
    f_xk_ynext: float
    f_xnext_ynext: float
    step_norm: float
    stationarity_residual: float
    resta: RestorationOutcome
    tangent_cert: dict
    oracle_f_error: float | None
    oracle_h_error: float | None
    ledger_delta: dict
    ledger_after: dict

    def to_dict(self):
        d = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if isinstance(val, np.ndarray):
                val = val.tolist()
            elif isinstance(val, RestorationOutcome):
                val = val.to_dict()
            elif isinstance(val, tuple):
                val = list(val)
            elif isinstance(val, dict):
                val = dict(val)
            d[name] = val
        return d

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        for name in ("x_k", "x_R", "x_next"):
            kw[name] = np.asarray(kw[name], dtype=float)
        for name in ("y_k", "y_R", "y_next"):
            kw[name] = tuple(kw[name])
        kw["resta"] = RestorationOutcome.from_dict(kw["resta"])
        return cls(**kw)


@dataclass
class RunReport:
    """Complete, replayable account of one solver run."""

    status: str
    problem_name: str
    records: list
    failure_info: dict | None
    final_x: np.ndarray
    final_y: tuple
    params: AlgorithmParams
    tolerances: dict
    constants_basis: dict
    ledger_totals: dict
    budget: int
    curvature_mode: str = "zero"
    trace_version: int = TRACE_VERSION

    @property
    def iterations(self):
        return len(self.records)

    def to_dict(self):
        return {
            "status": self.status,
            "problem_name": self.problem_name,
            "records": [rec.to_dict() for rec in self.records],
            "failure_info": self.failure_info,
            "final_x": np.asarray(self.final_x).tolist(),
            "final_y": list(self.final_y),
            "params": self.params.to_dict(),
            "tolerances": dict(self.tolerances),
            "constants_basis": self.constants_basis,
            "ledger_totals": dict(self.ledger_totals),
            "budget": self.budget,
            "curvature_mode": self.curvature_mode,
            "trace_version": self.trace_version,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("trace_version") != TRACE_VERSION:
            from .core import SchemaError

            raise SchemaError(
                f"trace version {d.get('trace_version')!r} not supported"
            )
        return cls(
            status=d["status"],
            problem_name=d["problem_name"],
            records=[IterationRecord.from_dict(r) for r in d["records"]],
            failure_info=d["failure_info"],
            final_x=np.asarray(d["final_x"], dtype=float),
            final_y=tuple(d["final_y"]),
            params=AlgorithmParams.from_dict(d["params"]),
            tolerances=dict(d["tolerances"]),
            constants_basis=d["constants_basis"],
            ledger_totals=dict(d["ledger_totals"]),
            budget=d["budget"],
            curvature_mode=d.get("curvature_mode", "zero"),
            trace_version=d["trace_version"],
        )


def _oracle_errors(problem, x, y, f_meas, h_vec_meas):
    if not getattr(problem, "has_exact", False):
        return None, None
    f_exact = problem.exact_f(x)
    h_exact = problem.exact_h(x)
    if f_exact is None or h_exact is None:
        return None, None
    return (
        abs(f_meas - f_exact),
        float(np.linalg.norm(h_vec_meas - h_exact)),
    )


def bira_run(problem, params=None, *, eps_feas=1e-6, eps_prec=1e-6,
             eps_opt=1e-4, budget=500, kappas=None, use_pdp=True,
             curvature_mode="zero"):
    """Solve ``problem`` to the given tolerances.

    Stops with status ``Converged`` when, at an accepted iteration, the
    restored violation, the restored and carried precision measures, and
    the projected-gradient residual on the tangent region are all within
    tolerance.  ``RestorationFailure`` reports likely local
    infeasibility (or a restoration outcome failing its contraction
    tests); ``BudgetExceeded`` reports running out of iterations.
    """
    params = params or AlgorithmParams.defaults()
    kappas = {**DEFAULT_KAPPAS, **(kappas or {})}
    for name, val in (("eps_feas", eps_feas), ("eps_prec", eps_prec),
                      ("eps_opt", eps_opt)):
        if not val > 0.0:
            raise InvariantError(f"{name} must be positive")

    pc = problem.constants()
    extras = dict(getattr(problem, "extras", dict)() or {})
    tc = derived_constants(pc, params, kappas=kappas, extras=extras)
    inner_cap = restoration_inner_cap(tc)
    basis = {
        "problem_constants": pc.to_dict(),
        "kappas": dict(kappas),
        "extras": tc.extras,
    }
    tolerances = {"eps_feas": eps_feas, "eps_prec": eps_prec,
                  "eps_opt": eps_opt}

    def finish(status, final_x, final_y, failure=None):
        return RunReport(
            status=status,
            problem_name=getattr(problem, "name", "unnamed"),
            records=records,
            failure_info=failure,
            final_x=np.asarray(final_x, dtype=float),
            final_y=final_y.as_tuple(),
            params=params,
            tolerances=tolerances,
            constants_basis=basis,
            ledger_totals=problem.ledger.snapshot(),
            budget=budget,
            curvature_mode=curvature_mode,
        )

    records = []
    theta = PenaltyState(params.theta_0)
    x = np.asarray(problem.x0, dtype=float).copy()
    y = problem.y0
    mu_start = params.mu_init
    attempt_cap = max(200, tc.tangent_attempt_cap + 5)

    led_iter = problem.ledger.snapshot()
    h_vec = problem.eval_h(x, y)
    f_val = problem.eval_f(x, y)
    h_norm = float(np.linalg.norm(h_vec))

    for k in range(budget):
        if k > 0:
            led_iter = problem.ledger.snapshot()

        out = resta(
            problem, x, y, params,
            h_xk_yk_norm=h_norm, use_pdp=use_pdp, inner_cap=inner_cap,
            kappas=kappas,
        )
        if out.status == "possible_infeasibility":
            return finish(
                "RestorationFailure", out.x_R, out.y_R,
                failure={
                    "kind": "possible_infeasibility",
                    "iteration": k,
                    "resta": out.to_dict(),
                },
            )

        y_R = out.y_R
        g_k, g_R = y.g, y_R.g
        failed, kind = restoration_failure(
            out.h_xk_yR, out.h_xR_yR, g_k, g_R, params.r
        )
        if failed:
            return finish(
                "RestorationFailure", x, y,
                failure={"kind": kind, "iteration": k, "resta": out.to_dict()},
            )

        x_R = out.x_R
        same_point = bool(np.array_equal(x_R, x))
        same_prec = y_R == y
        if same_prec:
            f_xk_yR = f_val
        else:
            f_xk_yR = problem.eval_f(x, y_R)
        if same_point:
            f_xR_yR = f_xk_yR
        else:
            f_xR_yR = problem.eval_f(x_R, y_R)

        theta_next = update_penalty(
            theta.theta, f_xR_yR, f_xk_yR, out.h_xk_yR, out.h_xR_yR,
            g_k, g_R, params.r,
        )

        allowance = 0.5 * (1.0 - params.r) * (
            out.h_xR_yR - out.h_xk_yR + g_R - g_k
        )

        mu = mu_start
        grad_f_cache = {}
        region_cache = {}
        accepted = None
        attempts = 0
        while accepted is None:
            attempts += 1
            if attempts > attempt_cap:
                raise InvariantError(
                    f"tangent phase exhausted {attempt_cap} attempts at"
                    f" iteration {k}"
                )
            y_next = y if (attempts - 1) < params.N_acce else y_R
            key = y_next.as_tuple()
            if key not in grad_f_cache:
                grad_f_cache[key] = problem.eval_grad_f(x_R, y_next)
                J_next = problem.eval_grad_h(x_R, y_next)
                region_cache[key] = TangentSet(problem.box, J_next, x_R)
            grad_f = grad_f_cache[key]
            region = region_cache[key]
            Hmodel = build_H(problem, x_R, y_next, params.M,
                             ledger=problem.ledger, mode=curvature_mode)
            x_trial, cert = solve_tangent_qp(
                grad_f, Hmodel.matrix, mu, x_R, region, kappas
            )
            s_norm = cert.step_norm

            if s_norm == 0.0 and y_next == y_R:
                f_trial = f_xR_yR
            else:
                f_trial = problem.eval_f(x_trial, y_next)
            h_trial_vec = problem.eval_h(x_trial, y_next)
            h_trial = float(np.linalg.norm(h_trial_vec))

            desc_ok = f_trial <= f_xR_yR - params.alpha * s_norm**2
            if y_next == y_R:
                f_ref, h_ref = f_xk_yR, out.h_xk_yR
            else:
                f_ref, h_ref = f_val, h_norm
            merit_ok = (
                merit_phi(f_trial, h_trial, y_next.g, theta_next)
                <= merit_phi(f_ref, h_ref, y_next.g, theta_next) + allowance
            )
            if desc_ok and merit_ok:
                accepted = (x_trial, y_next, f_trial, h_trial_vec, h_trial,
                            cert, grad_f, region, f_ref, h_ref)
            else:
                mu *= 2.0
                if mu > 1e2 * max(tc.mu_cap, params.mu_max):
                    raise InvariantError(
                        f"regularization runaway at iteration {k}"
                    )

        (x_next, y_next, f_next, h_next_vec, h_next, cert, grad_f, region,
         f_ref, h_ref) = accepted

        proj, _ = project_tangent(x_R - grad_f, region)
        residual = float(np.linalg.norm(proj - x_R))

        oracle_f_err, oracle_h_err = _oracle_errors(problem, x, y, f_val, h_vec)

        ledger_after = problem.ledger.snapshot()
        records.append(IterationRecord(
            k=k,
            x_k=x.copy(),
            x_R=np.asarray(x_R, dtype=float).copy(),
            x_next=np.asarray(x_next, dtype=float).copy(),
            y_k=y.as_tuple(),
            y_R=y_R.as_tuple(),
            y_next=y_next.as_tuple(),
            theta_before=theta.theta,
            theta_after=theta_next,
            mu_k=mu,
            ell_count=attempts,
            h_xk_yk=h_norm,
            h_xk_yR=out.h_xk_yR,
            h_xR_yR=out.h_xR_yR,
            h_xk_ynext=h_ref,
            h_xnext_ynext=h_next,
            g_yk=g_k,
            g_yR=g_R,
            g_ynext=y_next.g,
            f_xk_yk=f_val,
            f_xk_yR=f_xk_yR,
            f_xR_yR=f_xR_yR,
            f_xk_ynext=f_ref,
            f_xnext_ynext=f_next,
            step_norm=cert.step_norm,
            stationarity_residual=residual,
            resta=out,
            tangent_cert=cert.to_dict(),
            oracle_f_error=oracle_f_err,
            oracle_h_error=oracle_h_err,
            ledger_delta=problem.ledger.delta(led_iter),
            ledger_after=ledger_after,
        ))
        theta.push(theta_next)

        if (out.h_xR_yR <= eps_feas and g_R <= eps_prec
                and y_next.g <= eps_prec and residual <= eps_opt):
            return finish("Converged", x_R, y_next)

        x = np.asarray(x_next, dtype=float)
        y = y_next
        f_val = f_next
        h_vec = h_next_vec
        h_norm = h_next
        mu_start = min(max(mu / 2.0, params.mu_min), params.mu_max)

    return finish("BudgetExceeded", x, y)
