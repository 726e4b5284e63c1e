import numpy as np
import pytest

from bira.core import BoxPolytope, ContractError
from bira.geometry import (
    TangentSet,
    project_affine,
    project_box,
    project_tangent,
    stationarity_residual,
)


def test_project_box_componentwise():
    box = BoxPolytope(np.array([0.0, -1.0]), np.array([1.0, 1.0]))
    np.testing.assert_array_equal(
        project_box(np.array([2.0, -3.0]), box), [1.0, -1.0]
    )
    np.testing.assert_array_equal(
        project_box(np.array([0.5, 0.0]), box), [0.5, 0.0]
    )


def test_project_affine_hand_case():
    A = np.array([[1.0, 1.0]])
    x = project_affine(np.array([1.0, 1.0]), A, np.array([0.0]))
    np.testing.assert_allclose(x, [0.0, 0.0], atol=1e-12)
    # two independent rows in R^3 pin a line
    A2 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    x2 = project_affine(np.array([3.0, 4.0, 5.0]), A2, np.array([1.0, 2.0]))
    np.testing.assert_allclose(x2, [1.0, 2.0, 5.0], atol=1e-12)


def test_project_tangent_interior_matches_affine():
    box = BoxPolytope(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    region = TangentSet(box, np.array([[1.0, 1.0]]), np.array([0.5, 0.5]))
    x, resid = project_tangent(np.array([2.0, 2.0]), region)
    np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-9)
    assert resid <= 1e-9


def test_project_tangent_corner_case():
    # segment from (0,1) to (1,0); nearest point to (2,-1) is the endpoint
    box = BoxPolytope(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    region = TangentSet(box, np.array([[1.0, 1.0]]), np.array([0.5, 0.5]))
    x, _ = project_tangent(np.array([2.0, -1.0]), region)
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-8)
    assert region.contains(x)


def test_tangent_membership():
    box = BoxPolytope(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    region = TangentSet(box, np.array([[1.0, -1.0]]), np.array([0.2, 0.2]))
    assert region.contains(np.array([0.2, 0.2]))
    assert region.contains(np.array([0.5, 0.5]))
    assert not region.contains(np.array([0.5, 0.0]))
    assert not region.contains(np.array([2.0, 2.0]))


def test_stationarity_residual_box_hand_case():
    box = BoxPolytope(np.array([0.0]), np.array([1.0]))
    # interior point, small gradient: residual equals |grad|
    r = stationarity_residual(np.array([0.5]), np.array([0.2]), box)
    assert r == pytest.approx(0.2)
    # gradient pushing against an active bound projects to zero movement
    r2 = stationarity_residual(np.array([0.0]), np.array([3.0]), box)
    assert r2 == pytest.approx(0.0)
    with pytest.raises(ContractError):
        stationarity_residual(np.array([5.0]), np.array([0.0]), box)


def _random_instance(rng, n):
    lower = -1.0 - rng.random(n)
    upper = 1.0 + rng.random(n)
    box = BoxPolytope(lower, upper)
    m = rng.integers(1, n)
    A = rng.standard_normal((m, n))
    center = box.clip(rng.uniform(lower, upper))
    return box, A, TangentSet(box, A, center)


def test_project_tangent_properties_seeded():
    rng = np.random.default_rng(42)
    converged = 0
    for _ in range(40):
        n = int(rng.integers(2, 6))
        box, A, region = _random_instance(rng, n)
        z = rng.standard_normal(n) * 3.0
        x, resid = project_tangent(z, region)
        # the box is satisfied exactly and the residual reports the
        # affine violation honestly, converged or not
        assert np.all(x >= box.lower)
        assert np.all(x <= box.upper)
        assert resid == np.linalg.norm(A @ x - region.rhs)
        if resid > 1e-8 * (1.0 + np.linalg.norm(region.rhs)):
            continue  # sweep cap hit on a badly angled instance
        converged += 1
        # idempotence
        x2, _ = project_tangent(x, region)
        assert np.linalg.norm(x2 - x) <= 1e-7
        # no feasible candidate beats the projection
        null = np.linalg.svd(A)[2][A.shape[0]:].T
        d_best = np.linalg.norm(z - x)
        for _ in range(20):
            w = region.center + null @ rng.standard_normal(null.shape[1])
            if not region.contains(w, tol=1e-10):
                continue
            assert d_best <= np.linalg.norm(z - w) + 1e-7
    assert converged >= 30


def test_project_tangent_nonexpansive_seeded():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        box, A, region = _random_instance(rng, n)
        z1 = rng.standard_normal(n) * 2.0
        z2 = rng.standard_normal(n) * 2.0
        x1, _ = project_tangent(z1, region)
        x2, _ = project_tangent(z2, region)
        assert (np.linalg.norm(x1 - x2)
                <= np.linalg.norm(z1 - z2) + 1e-7)
