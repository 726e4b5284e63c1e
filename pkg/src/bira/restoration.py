"""Restoration: drive constraint violation and imprecision down together.

Given the current point and precision, this phase returns a point whose
measured violation has contracted by the ratio ``r`` and a precision level
refined by at least the same ratio, or else declares that the problem
looks locally infeasible: the projected gradient of the violation measure
is small relative to the violation itself even at the tightest precision
the schedule allows.

The inner loop is a regularized Gauss-Newton descent on half the squared
violation norm, restarted from the outer point at each precision level.
Two comparisons are deliberately shared with the outer algorithm's
failure test: the success test here compares violation norms with the
same float expression the outer test uses, so success here can never be
contradicted there by rounding.
"""

from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_KAPPAS,
    AbnormalTermination,
    PrecisionLevel,
    constraint_ssq,
    infeasibility,
)
from .diagnostics import FALLBACK_INNER_CAP
from .geometry import project_box
from .qp import build_B, solve_restoration_qp

_SIGMA_RUNAWAY = 1e9


@dataclass(frozen=True)
class RestorationOutcome:
    """What one restoration call did and produced.

    ``status`` is one of ``trivial`` (nothing to do), ``restored``,
    ``pdp`` (the problem's shortcut projection was accepted), or
    ``possible_infeasibility``.  ``h_xk_yR`` is the violation at the
    outer point re-measured at the returned precision; the outer failure
    tests consume it directly instead of re-evaluating.
    """

    x_R: np.ndarray
    y_R: PrecisionLevel
    status: str
    h_xR_yR: float
    h_xk_yR: float
    refinements: int
    z_steps: int
    inner_desc_tests: int
    sigma_history: tuple
    certificates: tuple
    max_step_over_h: float | None
    ledger_delta: dict

    def to_dict(self):
        return {
            "x_R": np.asarray(self.x_R).tolist(),
            "y_R": list(self.y_R.as_tuple()),
            "status": self.status,
            "h_xR_yR": self.h_xR_yR,
            "h_xk_yR": self.h_xk_yR,
            "refinements": self.refinements,
            "z_steps": self.z_steps,
            "inner_desc_tests": self.inner_desc_tests,
            "sigma_history": list(self.sigma_history),
            "certificates": [dict(c) for c in self.certificates],
            "max_step_over_h": self.max_step_over_h,
            "ledger_delta": dict(self.ledger_delta),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            x_R=np.asarray(d["x_R"], dtype=float),
            y_R=PrecisionLevel(*d["y_R"]),
            status=d["status"],
            h_xR_yR=d["h_xR_yR"],
            h_xk_yR=d["h_xk_yR"],
            refinements=d["refinements"],
            z_steps=d["z_steps"],
            inner_desc_tests=d["inner_desc_tests"],
            sigma_history=tuple(d["sigma_history"]),
            certificates=tuple(d["certificates"]),
            max_step_over_h=d["max_step_over_h"],
            ledger_delta=dict(d["ledger_delta"]),
        )


def _step_ratio(step, denom):
    if denom > 0.0:
        return step / denom
    return 0.0 if step <= 1e-15 else float("inf")


def resta(problem, x_k, y_k: PrecisionLevel, params, *, h_xk_yk_norm=None,
          use_pdp=True, inner_cap=None, kappas=None):
    """Run the restoration phase from ``(x_k, y_k)``.

    ``h_xk_yk_norm`` is the already-measured violation at the outer point
    (evaluated here, and charged, when missing).  ``inner_cap`` bounds the
    number of descent tests across all precision levels; exceeding it, or
    the refinement cap, raises :class:`AbnormalTermination`.

    The phase never evaluates the objective or its gradient.
    """
    kappas = {**DEFAULT_KAPPAS, **(kappas or {})}
    cap = FALLBACK_INNER_CAP if inner_cap is None else int(inner_cap)
    refine_cap = 10 * (params.N_prec + 2) + 100
    box = problem.box
    x_k = np.asarray(x_k, dtype=float)
    led0 = problem.ledger.snapshot()

    if h_xk_yk_norm is None:
        h_xk_yk_norm = float(np.linalg.norm(problem.eval_h(x_k, y_k)))

    sigma_hist = []
    certs = []
    desc_tests = 0
    z_steps = 0
    refinements = 0
    max_ratio = None

    def finish(status, x_R, y_R, h_xR, h_xk_ref):
        return RestorationOutcome(
            x_R=np.asarray(x_R, dtype=float),
            y_R=y_R,
            status=status,
            h_xR_yR=float(h_xR),
            h_xk_yR=float(h_xk_ref),
            refinements=refinements,
            z_steps=z_steps,
            inner_desc_tests=desc_tests,
            sigma_history=tuple(sigma_hist),
            certificates=tuple(certs),
            max_step_over_h=max_ratio,
            ledger_delta=problem.ledger.delta(led0),
        )

    if infeasibility(h_xk_yk_norm, y_k.g) == 0.0:
        return finish("trivial", x_k, y_k, h_xk_yk_norm, h_xk_yk_norm)

    if use_pdp:
        hit = problem.pdp(x_k, y_k)
        if hit is not None:
            z_P, w_P = hit
            # the shortcut must refine at least as hard as the schedule would
            if w_P.gf <= params.r * y_k.gf and w_P.gh <= params.r * y_k.gh:
                h_zP = float(np.linalg.norm(problem.eval_h(z_P, w_P)))
                h_xk_wP = float(np.linalg.norm(problem.eval_h(x_k, w_P)))
                step = float(np.linalg.norm(np.asarray(z_P, float) - x_k))
                close_enough = step <= params.beta_PDP * infeasibility(
                    h_xk_yk_norm, y_k.g
                )
                if h_zP <= params.r * h_xk_wP and close_enough:
                    max_ratio = _step_ratio(step, h_xk_wP)
                    return finish("pdp", z_P, w_P, h_zP, h_xk_wP)

    w = y_k
    while True:
        refinements += 1
        if refinements > refine_cap:
            raise AbnormalTermination(
                "restoration refinement cap exceeded",
                {"refinements": refinements, "desc_tests": desc_tests},
            )
        gf_t = params.r * y_k.gf
        if refinements <= params.N_prec:
            gh_t = params.r * w.gh
        else:
            gh_t = min(params.eps_prec_bar, params.r * w.gh)
        w = problem.refine(w, gf_t, gh_t)

        h_ref_vec = problem.eval_h(x_k, w)
        h_ref = float(np.linalg.norm(h_ref_vec))
        z = x_k.copy()
        h_z_vec = h_ref_vec
        h_z = h_ref

        while True:
            if h_z <= params.r * h_ref:
                return finish("restored", z, w, h_z, h_ref)
            J = problem.eval_grad_h(z, w)
            grad_c = J.T @ h_z_vec
            pg_resid = float(
                np.linalg.norm(project_box(z - grad_c, box) - z)
            )
            if pg_resid <= params.r_feas * h_ref:
                if w.gh <= params.eps_prec_bar:
                    return finish("possible_infeasibility", z, w, h_z, h_ref)
                break  # refine precision and restart from the outer point

            B = build_B(J, params.M, params.sigma_min)
            sigma = params.sigma_min
            c_z = constraint_ssq(h_z_vec)
            while True:
                if desc_tests >= cap:
                    raise AbnormalTermination(
                        "restoration descent-test cap exceeded",
                        {"refinements": refinements, "desc_tests": desc_tests},
                    )
                sigma_hist.append(sigma)
                z_trial, cert = solve_restoration_qp(
                    grad_c, B, sigma, z, box, kappas
                )
                certs.append(cert.to_dict())
                h_trial_vec = problem.eval_h(z_trial, w)
                c_trial = constraint_ssq(h_trial_vec)
                desc_tests += 1
                step = float(np.linalg.norm(z_trial - z))
                if c_trial <= c_z - params.alpha_R * step**2:
                    break
                sigma *= 2.0
                if sigma > _SIGMA_RUNAWAY:
                    raise AbnormalTermination(
                        "restoration regularization runaway",
                        {"sigma": sigma, "desc_tests": desc_tests},
                    )
            z_steps += 1
            ratio = _step_ratio(step, h_ref)
            max_ratio = ratio if max_ratio is None else max(max_ratio, ratio)
            z = z_trial
            h_z_vec = h_trial_vec
            h_z = float(np.linalg.norm(h_z_vec))
