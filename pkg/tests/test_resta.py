import numpy as np
import pytest

from bira.core import (
    AbnormalTermination,
    AlgorithmParams,
    BoxPolytope,
    PrecisionLevel,
)
from bira.oracle import (
    SyntheticProblem,
    make_p1,
    make_p1_pdp,
    make_p3,
    make_suite,
)
from bira.restoration import RestorationOutcome, resta
from bira.solver import restoration_failure


def test_trivial_when_already_feasible_and_exact():
    p = make_p1()
    x = p.known_solution
    y = PrecisionLevel(0.0, 0.0)
    h0 = float(np.linalg.norm(p.eval_h(x, y)))
    assert h0 == 0.0
    before = p.ledger.snapshot()
    out = resta(p, x, y, AlgorithmParams.defaults(), h_xk_yk_norm=h0)
    assert out.status == "trivial"
    np.testing.assert_array_equal(out.x_R, x)
    assert out.y_R == y
    assert out.h_xR_yR == 0.0
    assert p.ledger.snapshot() == before
    assert all(v == 0 for v in out.ledger_delta.values())


def test_p1_z_steps_follow_the_closed_form_contraction():
    p = make_p1()
    params = AlgorithmParams.defaults()
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    out = resta(p, p.x0, p.y0, params, h_xk_yk_norm=h0)
    assert out.status == "restored"
    assert out.refinements == 1
    assert out.y_R == PrecisionLevel(0.25, 0.25)

    # one gradient step per z-step at the floor regularization weight:
    # measured violation contracts by 2*sigma/(2*sigma + |J|^2) each step
    norm_J_sq = 0.0625
    factor = (2 * params.sigma_min) / (2 * params.sigma_min + norm_J_sq)
    expected_steps = int(np.ceil(np.log(params.r) / np.log(factor)))
    assert expected_steps == 90
    assert out.z_steps == expected_steps
    assert out.inner_desc_tests == expected_steps
    assert all(s == params.sigma_min for s in out.sigma_history)

    steps = [c["step_norm"] for c in out.certificates]
    ratios = np.array(steps[1:]) / np.array(steps[:-1])
    np.testing.assert_allclose(ratios, factor, atol=1e-6)

    assert out.h_xR_yR <= params.r * out.h_xk_yR
    failed, kind = restoration_failure(
        out.h_xk_yR, out.h_xR_yR, p.y0.g, out.y_R.g, params.r
    )
    assert not failed and kind is None


def test_restoration_never_touches_the_objective():
    params = AlgorithmParams.defaults()
    for p in make_suite():
        h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
        try:
            out = resta(p, p.x0, p.y0, params, h_xk_yk_norm=h0)
        except AbnormalTermination:
            continue
        assert out.ledger_delta["f_evals"] == 0
        assert out.ledger_delta["gradf_evals"] == 0


def test_p3_detects_likely_infeasibility():
    p = make_p3()
    params = AlgorithmParams.defaults()
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    out = resta(p, p.x0, p.y0, params, h_xk_yk_norm=h0)
    assert out.status == "possible_infeasibility"
    assert out.refinements == 1
    # descent drove the first coordinate toward the infeasible stall
    assert abs(out.x_R[0]) < 0.1
    assert out.x_R[1] == p.x0[1]
    assert out.h_xR_yR > 0.9


def _p3_like_with_coarse_start():
    box = BoxPolytope(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    return SyntheticProblem(
        "p3_coarse", box,
        objective=lambda x: (x[0] + 2.0 * x[1]) / 10.0,
        objective_grad=lambda x: np.array([0.1, 0.2]),
        constraint=lambda x: np.array([x[0] ** 2 + 1.0]),
        constraint_jac=lambda x: np.array([[2.0 * x[0], 0.0]]),
        m=1, x0=np.array([0.8, 0.3]), y0=PrecisionLevel(0.3, 0.3),
        problem_constants=make_p3().constants(),
        infeasible=True,
    )


def test_refinement_cascade_honors_the_level_schedule():
    p = _p3_like_with_coarse_start()
    params = AlgorithmParams.from_dict({
        **AlgorithmParams.defaults().to_dict(),
        "eps_prec_bar": 0.05, "N_prec": 2,
    })
    targets = []
    inner_refine = p.refine

    def spying_refine(y, gf_target, gh_target):
        targets.append((gf_target, gh_target))
        return inner_refine(y, gf_target, gh_target)

    p.refine = spying_refine
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    out = resta(p, p.x0, p.y0, params, h_xk_yk_norm=h0)
    assert out.status == "possible_infeasibility"
    assert out.refinements == 3
    # objective-precision target stays anchored at the outer level while
    # constraint precision halves, then clamps into the certified band
    assert targets == [(0.15, 0.15), (0.15, 0.075), (0.15, 0.0375)]
    assert out.y_R == PrecisionLevel(0.15, 0.0375)


def test_pdp_shortcut_accepted_when_its_radius_allows():
    params = AlgorithmParams.from_dict({
        **AlgorithmParams.defaults().to_dict(), "beta_PDP": 8.0,
    })
    p = make_p1_pdp(params)
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    out = resta(p, p.x0, p.y0, params, h_xk_yk_norm=h0)
    assert out.status == "pdp"
    assert out.y_R == PrecisionLevel(0.25, 0.25)
    assert out.z_steps == 0
    assert out.ledger_delta["h_evals"] == 2
    assert out.ledger_delta["gradh_evals"] == 0
    assert out.h_xR_yR <= params.r * out.h_xk_yR
    assert out.max_step_over_h is not None


def test_pdp_shortcut_rejected_at_default_radius():
    params = AlgorithmParams.defaults()
    p = make_p1_pdp(params)
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    out = resta(p, p.x0, p.y0, params, h_xk_yk_norm=h0)
    assert out.status == "restored"
    # the probe pair was still measured and charged
    assert out.ledger_delta["h_evals"] > 2


def test_use_pdp_false_skips_the_shortcut_entirely():
    params = AlgorithmParams.from_dict({
        **AlgorithmParams.defaults().to_dict(), "beta_PDP": 8.0,
    })
    p = make_p1_pdp(params)
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    out = resta(p, p.x0, p.y0, params, h_xk_yk_norm=h0, use_pdp=False)
    assert out.status == "restored"


def test_tiny_inner_cap_terminates_abnormally():
    p = make_p1()
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    with pytest.raises(AbnormalTermination) as err:
        resta(p, p.x0, p.y0, AlgorithmParams.defaults(),
              h_xk_yk_norm=h0, inner_cap=3)
    assert err.value.summary["desc_tests"] == 3


def test_outcome_round_trip():
    p = make_p1()
    h0 = float(np.linalg.norm(p.eval_h(p.x0, p.y0)))
    out = resta(p, p.x0, p.y0, AlgorithmParams.defaults(), h_xk_yk_norm=h0)
    back = RestorationOutcome.from_dict(out.to_dict())
    np.testing.assert_array_equal(back.x_R, out.x_R)
    assert back.y_R == out.y_R
    assert back.status == out.status
    assert back.sigma_history == out.sigma_history
    assert back.certificates == out.certificates
    assert back.ledger_delta == out.ledger_delta
