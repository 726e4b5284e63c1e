import numpy as np
import pytest

from bira.core import BoxPolytope, ConfigurationError, DEFAULT_KAPPAS
from bira.geometry import TangentSet, project_box
from bira.qp import (
    SolveCertificate,
    build_B,
    build_H,
    solve_restoration_qp,
    solve_tangent_qp,
)


def test_build_B_scales_to_norm_cap():
    J = np.array([[2.0, 0.0]])
    B = build_B(J, 1.0, 4.0)
    assert np.linalg.norm(B, 2) == pytest.approx(1.0)
    np.testing.assert_allclose(B, [[1.0, 0.0], [0.0, 0.0]])
    # already under the cap: left alone
    J2 = np.array([[0.5, 0.0]])
    np.testing.assert_allclose(build_B(J2, 1.0, 4.0), J2.T @ J2)


def test_build_B_rejects_uncovered_regularization():
    with pytest.raises(ConfigurationError):
        build_B(np.array([[1.0, 0.0]]), 2.0, 0.25)


def test_restoration_qp_closed_form_1d():
    box = BoxPolytope(np.array([-10.0]), np.array([10.0]))
    z, cert = solve_restoration_qp(
        np.array([1.0]), np.array([[0.0]]), 0.5, np.array([0.0]), box,
        DEFAULT_KAPPAS,
    )
    # min of s + 0.5*(2*sigma)*s^2 is at s = -1/(2*sigma)
    np.testing.assert_allclose(z, [-1.0], atol=1e-9)
    assert cert.model_decrease == pytest.approx(-0.5, abs=1e-9)
    assert not cert.flagged


def test_restoration_qp_respects_box():
    box = BoxPolytope(np.array([-0.3]), np.array([10.0]))
    z, cert = solve_restoration_qp(
        np.array([1.0]), np.array([[0.0]]), 0.5, np.array([0.0]), box,
        DEFAULT_KAPPAS,
    )
    np.testing.assert_allclose(z, [-0.3], atol=1e-12)
    assert cert.model_decrease == pytest.approx(-0.3 + 0.5 * 0.09, abs=1e-12)
    # at the bound the projected step stalls, so the residual is zero
    assert cert.stationarity_residual <= 1e-9


def test_tangent_qp_closed_form_on_a_line():
    box = BoxPolytope(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    center = np.array([0.5, -0.5])
    region = TangentSet(box, np.array([[1.0, 1.0]]), center)
    x, cert = solve_tangent_qp(
        np.array([1.0, 0.0]), np.zeros((2, 2)), 0.5, center, region,
        DEFAULT_KAPPAS,
    )
    np.testing.assert_allclose(x, [0.0, 0.0], atol=1e-8)
    assert cert.step_norm == pytest.approx(np.sqrt(0.5), abs=1e-8)
    assert cert.model_decrease == pytest.approx(-0.25, abs=1e-8)
    assert cert.tangent_violation <= 1e-9
    assert not cert.flagged


def test_tangent_qp_snaps_tiny_steps_to_center():
    box = BoxPolytope(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    center = np.array([0.1, -0.1])
    region = TangentSet(box, np.array([[1.0, 1.0]]), center)
    x, cert = solve_tangent_qp(
        np.zeros(2), np.zeros((2, 2)), 1.0, center, region, DEFAULT_KAPPAS,
    )
    np.testing.assert_array_equal(x, center)
    assert cert.step_norm == 0.0
    assert cert.model_decrease == 0.0
    assert cert.kappa_ratio == 0.0
    assert not cert.flagged


def test_tiny_kappas_raise_the_flag():
    kappas = dict(DEFAULT_KAPPAS)
    kappas["kappa_phi"] = 1e-9
    box = BoxPolytope(np.array([-1.0]), np.array([1.0]))
    z, cert = solve_restoration_qp(
        np.array([1.0]), np.array([[0.0]]), 0.5, np.array([0.0]), box,
        kappas,
    )
    assert cert.flagged


def test_certificate_round_trip():
    cert = SolveCertificate(-1.0, 1e-11, 0.5, 0.0, 2e-11, 1.0, False, 1e-12)
    back = SolveCertificate.from_dict(cert.to_dict())
    assert back == cert


def test_restoration_certificates_recompute_exactly_seeded():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(1, 5))
        lo = -1.0 - rng.random(n)
        hi = 1.0 + rng.random(n)
        box = BoxPolytope(lo, hi)
        g = rng.standard_normal(n)
        R = rng.standard_normal((n, n))
        B = R @ R.T / n
        sigma = float(rng.uniform(0.2, 4.0))
        center = box.clip(rng.uniform(lo, hi))
        z, cert = solve_restoration_qp(g, B, sigma, center, box,
                                       DEFAULT_KAPPAS)
        s = z - center
        Q = B + 2.0 * sigma * np.eye(n)
        md = float(g @ s + 0.5 * s @ Q @ s)
        assert abs(md - cert.model_decrease) <= 1e-12
        assert abs(float(np.linalg.norm(s)) - cert.step_norm) <= 1e-12
        gz = g + Q @ s
        resid = float(np.linalg.norm(project_box(z - gz, box) - z))
        assert abs(resid - cert.stationarity_residual) <= 1e-12
        assert md <= 0.0
        if cert.step_norm > 1e-9:
            assert abs(cert.kappa_ratio
                       - cert.stationarity_residual / cert.step_norm) <= 1e-9
        # Cauchy-point comparison, recomputed from scratch
        d = project_box(center - g, box) - center
        dQd = float(d @ Q @ d)
        gd = float(g @ d)
        if dQd > 1e-10 and abs(md) > 1e-10:
            t = min(max(-gd / dQd, 0.0), 1.0)
            cauchy = t * gd + 0.5 * t * t * dQd
            assert abs(cert.kappa_phi_ratio - cauchy / md) <= 1e-9


def test_tangent_certificates_recompute_exactly_seeded():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(25):
        n = int(rng.integers(2, 5))
        lo = -2.0 * np.ones(n)
        hi = 2.0 * np.ones(n)
        box = BoxPolytope(lo, hi)
        A = rng.standard_normal((1, n))
        center = box.clip(rng.uniform(-1.0, 1.0, n))
        region = TangentSet(box, A, center)
        g = rng.standard_normal(n)
        mu = float(rng.uniform(0.2, 2.0))
        x, cert = solve_tangent_qp(g, np.zeros((n, n)), mu, center, region,
                                   DEFAULT_KAPPAS)
        if cert.step_norm == 0.0:
            np.testing.assert_array_equal(x, center)
            continue
        checked += 1
        s = x - center
        md = float(g @ s + mu * s @ s)
        assert abs(md - cert.model_decrease) <= 1e-12
        assert md <= 0.0
        assert abs(float(np.linalg.norm(s)) - cert.step_norm) <= 1e-12
        assert (float(np.linalg.norm(A @ s))
                == pytest.approx(cert.tangent_violation, abs=1e-12))
        assert abs(cert.kappa_ratio
                   - cert.stationarity_residual / cert.step_norm**2) <= 1e-9
    assert checked >= 15


def test_build_H_zero_mode_is_free():
    from bira import make_p1

    p = make_p1()
    before = p.ledger.snapshot()
    model = build_H(p, p.x0, p.y0, 1.0, ledger=p.ledger, mode="zero")
    assert p.ledger.snapshot() == before
    np.testing.assert_array_equal(model.matrix, np.zeros((p.dim, p.dim)))
    assert model.norm_bound_ok


def test_build_H_fd_mode_charges_the_ledger():
    from bira import make_p1

    p = make_p1()
    before = p.ledger.snapshot()
    model = build_H(p, p.x0, p.y0, 1.0, ledger=p.ledger, mode="fd")
    after = p.ledger.snapshot()
    assert after["gradf_evals"] > before["gradf_evals"]
    # curvature of ||x - x_f||^2 / 20 is I/10, inside the norm cap
    np.testing.assert_allclose(model.matrix, np.eye(p.dim) / 10.0,
                               atol=1e-6)
    assert model.norm_bound_ok
