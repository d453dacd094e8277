import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adptrack.actor import LinearPolicy, actor_update, apply_policy, policy_from_kernel
from adptrack.critic import QuadraticKernel, evaluate_value
from adptrack.errors import ContractError, SingularKernelError

from .oracles import random_spd, scalar_argmin

REFERENCE_STA1_GAIN = [57.5021, -1.1475, -26.1183]


def _kernel(huu, hux):
    hux = np.atleast_2d(hux)
    n = hux.shape[1]
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = np.eye(n) * 10
    H[n, :n] = hux
    H[:n, n] = hux
    H[n, n] = huu
    return QuadraticKernel(H, n)


def test_policy_from_kernel_examples():
    np.testing.assert_allclose(policy_from_kernel(_kernel(1.0, [1, 0, 0]), ridge=0).gain,
                               [[-1, 0, 0]])
    np.testing.assert_allclose(policy_from_kernel(_kernel(2.0, [4, 0]), ridge=0).gain, [[-2, 0]])


def test_policy_default_ridge_is_tiny():
    g = policy_from_kernel(_kernel(1.0, [1, 0, 0])).gain
    np.testing.assert_allclose(g, [[-1, 0, 0]], rtol=1e-8)


def test_singular_kernel_raises_without_ridge():
    with pytest.raises(SingularKernelError):
        policy_from_kernel(_kernel(0.0, [1, 0]), ridge=0)
    # with the ridge it survives
    assert np.all(np.isfinite(policy_from_kernel(_kernel(0.0, [1, 0])).gain))


def test_policy_matches_grid_argmin():
    rng = np.random.default_rng(0)
    H = QuadraticKernel(random_spd(rng, 4, floor=0.5), 3)
    K = policy_from_kernel(H).gain
    for _ in range(100):
        x = rng.normal(size=3)
        u_star = float((K @ x)[0])
        lo, hi = u_star - 5.0, u_star + 5.0
        u_grid, step = scalar_argmin(lambda u: evaluate_value(H, np.r_[x, u]), lo, hi)
        assert abs(u_grid - u_star) <= step


def test_multi_input_policy():
    rng = np.random.default_rng(1)
    H = QuadraticKernel(random_spd(rng, 5), 3)
    K = policy_from_kernel(H, ridge=0).gain
    assert K.shape == (2, 3)
    x = rng.normal(size=3)
    # first-order optimality: gradient w.r.t. u vanishes
    grad_u = H.ux @ x + H.uu @ (K @ x)
    np.testing.assert_allclose(grad_u, 0, atol=1e-12)


@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_policy_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    H = random_spd(rng, 4)
    a = policy_from_kernel(QuadraticKernel(H, 3), ridge=0).gain
    b = policy_from_kernel(QuadraticKernel(c * H, 3), ridge=0).gain
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_apply_policy_examples():
    assert apply_policy(LinearPolicy([1.0, 2.0, 3.0]), np.zeros(3)) == 0.0
    assert apply_policy(LinearPolicy([1.0, 2.0, 3.0]), [1, 1, 1]) == 6.0
    sta1 = LinearPolicy(REFERENCE_STA1_GAIN, role="tracker")
    assert apply_policy(sta1, [1, 0, 0])[0] == pytest.approx(57.5021)


def test_apply_policy_dimension_mismatch():
    with pytest.raises(ContractError):
        apply_policy(LinearPolicy([1.0, 2.0]), [1.0, 2.0, 3.0])


def test_policy_validation():
    with pytest.raises(ContractError):
        LinearPolicy([np.nan, 1.0])
    with pytest.raises(ContractError):
        LinearPolicy([1.0], role="critic")


def test_actor_update_examples():
    p = LinearPolicy([0.3, -0.2])
    assert actor_update(p, [1.0, 5.0], p, 0.5) == p
    target = LinearPolicy([1.0, 1.0])
    assert actor_update(p, [0.0, 0.0], target, 0.5) == p
    out = actor_update(LinearPolicy([0.0]), [2.0], LinearPolicy([1.0]), 0.1)
    assert out.gain[0, 0] == pytest.approx(0.4, abs=1e-15)


def test_actor_update_is_gradient_of_half_squared_error():
    rng = np.random.default_rng(2)
    g, gt, v = rng.normal(size=5), rng.normal(size=5), rng.normal(size=5)
    rate = 1e-3
    step = actor_update(LinearPolicy(g), v, LinearPolicy(gt), rate).gain[0] - g
    loss = lambda w: 0.5 * ((w - gt) @ v) ** 2
    h = 1e-6
    grad = np.array([(loss(g + h * e) - loss(g - h * e)) / (2 * h) for e in np.eye(5)])
    np.testing.assert_allclose(step, -rate * grad, rtol=1e-6)


def test_actor_converges_to_target():
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = LinearPolicy(rng.normal(size=5))
        target = LinearPolicy(rng.normal(size=5))
        for _ in range(10_000):
            v = rng.normal(size=5)
            p = actor_update(p, v, target, 0.05)
        assert np.linalg.norm(p.gain - target.gain) < 1e-3


def test_actor_rate_range():
    with pytest.raises(ContractError):
        actor_update(LinearPolicy([0.0]), [1.0], LinearPolicy([1.0]), 1.0)
