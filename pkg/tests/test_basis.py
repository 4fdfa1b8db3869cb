import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uapbev.basis import TrajectoryCoeffs, build_basis, eval_batch, eval_trajectory


def horner(c, tau):
    out = np.zeros_like(tau)
    for coef in c[::-1]:
        out = out * tau + coef
    return out


def continuous_coeffs(basis, rng):
    """Random coefficients in the null space of the continuity rows."""
    _, sv, vt = np.linalg.svd(basis.C)
    null = vt[np.sum(sv > 1e-10) :]
    return null.T @ rng.normal(size=null.shape[0])


def test_constant_trajectory():
    b = build_basis(1, 10, 0.1)
    c = np.array([5.0, 0, 0, 0])
    np.testing.assert_allclose(b.W @ c, 5.0)
    np.testing.assert_allclose(b.W1 @ c, 0.0)
    np.testing.assert_allclose(b.W2 @ c, 0.0)


def test_unit_velocity_line():
    b = build_basis(1, 10, 0.1)
    c = np.array([0.0, 1, 0, 0])
    np.testing.assert_allclose(b.W @ c, np.arange(10) * 0.1, atol=1e-15)
    np.testing.assert_allclose(b.W1 @ c, 1.0)


def test_rows_are_analytic_derivatives():
    b = build_basis(3, 4, 0.25)
    for k in range(b.n):
        j = k // b.steps_per_segment
        tau = (k - j * b.steps_per_segment) * b.dt
        cols = slice(4 * j, 4 * j + 4)
        np.testing.assert_allclose(b.W[k, cols], [1, tau, tau**2, tau**3])
        np.testing.assert_allclose(b.W1[k, cols], [0, 1, 2 * tau, 3 * tau**2])
        np.testing.assert_allclose(b.W2[k, cols], [0, 0, 2, 6 * tau])
        others = np.ones(b.nvar, bool)
        others[cols] = False
        assert not b.W[k, others].any()


def test_finite_difference_matches_velocity(rng):
    b = build_basis(2, 10, 0.1)
    for _ in range(20):
        c = continuous_coeffs(b, rng)
        np.testing.assert_allclose(b.C @ c, 0.0, atol=1e-12)
        x, v = b.W @ c, b.W1 @ c
        fd = (x[2:] - x[:-2]) / (2 * b.dt)
        assert np.max(np.abs(fd - v[1:-1])) <= 5 * b.dt**2 * np.max(np.abs(c))


def test_finite_difference_error_is_second_order(rng):
    errs = []
    for dt in (0.1, 0.05):
        b = build_basis(1, int(round(1.0 / dt)), dt)
        c = np.array([0.3, -1.0, 0.7, 0.4])
        a, v = b.W2 @ c, b.W1 @ c
        errs.append(np.max(np.abs((v[2:] - v[:-2]) / (2 * dt) - a[1:-1])))
    # central differences of a cubic's derivative are exact for the quadratic velocity
    assert errs[0] < 1e-12 and errs[1] < 1e-12


def test_continuity_rows_vanish_on_smooth_polynomial():
    b = build_basis(3, 5, 0.1)
    T = b.segment_duration
    # x(t) = 1 + 2t - t^2 + 0.5 t^3 re-expanded around each segment start
    coeffs = []
    for j in range(3):
        t0 = j * T
        coeffs += [
            1 + 2 * t0 - t0**2 + 0.5 * t0**3,
            2 - 2 * t0 + 1.5 * t0**2,
            -1 + 1.5 * t0,
            0.5,
        ]
    np.testing.assert_allclose(b.C @ np.array(coeffs), 0.0, atol=1e-12)


def test_eval_trajectory_quadratic_has_constant_acceleration():
    b = build_basis(1, 10, 0.1)
    st_ = eval_trajectory(b, TrajectoryCoeffs(np.array([0, 0, 1.0, 0]), np.zeros(4)))
    np.testing.assert_allclose(st_.ax, 2.0)
    np.testing.assert_allclose(st_.ay, 0.0)


def test_eval_trajectory_matches_horner(rng):
    b = build_basis(4, 6, 0.05)
    cx, cy = rng.normal(size=b.nvar), rng.normal(size=b.nvar)
    st_ = eval_trajectory(b, TrajectoryCoeffs(cx, cy))
    for k in range(b.n):
        j = k // b.steps_per_segment
        tau = np.array((k - j * b.steps_per_segment) * b.dt)
        seg = slice(4 * j, 4 * j + 4)
        assert st_.x[k] == pytest.approx(horner(cx[seg], tau), abs=1e-12)
        assert st_.y[k] == pytest.approx(horner(cy[seg], tau), abs=1e-12)
        dcx = cx[seg][1:] * np.array([1, 2, 3])
        assert st_.vx[k] == pytest.approx(horner(dcx, tau), abs=1e-12)


def test_eval_batch_matches_single(basis, rng):
    xi = rng.normal(size=(5, 2 * basis.nvar))
    batch = eval_batch(basis, xi)
    for i in range(5):
        single = eval_trajectory(basis, TrajectoryCoeffs.from_xi(xi[i]))
        for got, want in zip(batch, (single.x, single.y, single.vx, single.vy, single.ax, single.ay)):
            np.testing.assert_allclose(got[i], want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("args", [(0, 5, 0.1), (2, 0, 0.1), (2, 5, 0.0), (2, 5, -1.0), (1.5, 5, 0.1)])
def test_invalid_arguments(args):
    with pytest.raises(ValueError):
        build_basis(*args)


def test_coefficient_length_mismatch(basis):
    with pytest.raises(ValueError):
        eval_trajectory(basis, TrajectoryCoeffs(np.zeros(4), np.zeros(4)))
    with pytest.raises(ValueError):
        TrajectoryCoeffs(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        TrajectoryCoeffs.from_xi(np.zeros(5))


@given(
    segs=st.integers(1, 4),
    steps=st.integers(3, 12),
    dt=st.floats(0.02, 0.2),
    seed=st.integers(0, 2**32 - 1),
)
def test_derivative_consistency_property(segs, steps, dt, seed):
    b = build_basis(segs, steps, dt)
    c = continuous_coeffs(b, np.random.default_rng(seed)) if segs > 1 else np.random.default_rng(seed).normal(size=4)
    x, v, a = b.W @ c, b.W1 @ c, b.W2 @ c
    scale = max(np.max(np.abs(c)), 1.0)
    # stencils that straddle a join see the jerk jump, so only use interior ones
    k = np.arange(1, b.n - 1)
    k = k[(k - 1) // steps == (k + 1) // steps]
    if k.size == 0:
        return
    assert np.max(np.abs((x[k + 1] - x[k - 1]) / (2 * dt) - v[k])) <= 5 * dt**2 * scale
    assert np.max(np.abs((v[k + 1] - v[k - 1]) / (2 * dt) - a[k])) <= 5 * dt**2 * scale
