import numpy as np
import pytest

from coopmanip import spatial as sp


def random_quat(rng):
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def test_skew_zero_and_cross_identity():
    assert np.array_equal(sp.skew([0, 0, 0]), np.zeros((3, 3)))
    assert np.allclose(sp.skew([1, 0, 0]) @ [0, 1, 0], [0, 0, 1])


def test_skew_matches_cross_product():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.standard_normal(3)
        b = rng.standard_normal(3)
        S = sp.skew(a)
        assert np.abs(S @ b - np.cross(a, b)).max() < 1e-14
        assert np.abs(S + S.T).max() == 0.0


def test_quat_product_identity_and_inverse():
    rng = np.random.default_rng(1)
    qi = np.array([1.0, 0, 0, 0])
    q = random_quat(rng)
    assert np.allclose(sp.quat_product(qi, q), q)
    assert np.allclose(sp.quat_product(q, sp.quat_conjugate(q)), qi, atol=1e-14)


def test_quat_product_rotation_homomorphism():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        q1, q2 = random_quat(rng), random_quat(rng)
        lhs = sp.quat_to_rotation(sp.quat_product(q1, q2))
        rhs = sp.quat_to_rotation(q1) @ sp.quat_to_rotation(q2)
        worst = max(worst, np.abs(lhs - rhs).max())
        assert abs(np.linalg.norm(sp.quat_product(q1, q2)) - 1.0) < 1e-12
    assert worst < 1e-10


def test_quat_conjugate():
    rng = np.random.default_rng(3)
    assert np.allclose(sp.quat_conjugate([1, 0, 0, 0]), [1, 0, 0, 0])
    assert np.allclose(sp.quat_conjugate([0, 1, 0, 0]), [0, -1, 0, 0])
    for _ in range(50):
        q = random_quat(rng)
        R = sp.quat_to_rotation(q)
        Rc = sp.quat_to_rotation(sp.quat_conjugate(q))
        assert np.abs(Rc @ R - np.eye(3)).max() < 1e-10
        assert np.abs(Rc - R.T).max() < 1e-14


def test_e_matrix_identity_quaternion():
    E = sp.e_matrix([1, 0, 0, 0])
    assert np.allclose(E[0], 0.0)
    assert np.allclose(E[1:], np.eye(3))


def test_e_matrix_orthonormal_columns():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        q = random_quat(rng)
        E = sp.e_matrix(q)
        assert np.abs(E.T @ E - np.eye(3)).max() < 1e-12


def test_e_matrix_round_trip_omega():
    rng = np.random.default_rng(5)
    for _ in range(100):
        q = random_quat(rng)
        w = rng.standard_normal(3)
        qdot = 0.5 * sp.e_matrix(q) @ w
        assert np.abs(2.0 * sp.e_matrix(q).T @ qdot - w).max() < 1e-13


def test_quat_rate_zero_and_direct():
    q = np.array([1.0, 0, 0, 0])
    assert np.array_equal(sp.quat_rate(q, [0, 0, 0]), np.zeros(4))
    w = 0.7
    assert np.allclose(sp.quat_rate(q, [0, 0, w]), [0, 0, 0, w / 2])


def test_quat_rate_finite_difference():
    rng = np.random.default_rng(6)
    h = 1e-6
    for _ in range(20):
        q = random_quat(rng)
        w = rng.standard_normal(3)
        fd = (sp.integrate_quat(q, w, h) - sp.integrate_quat(q, w, 0.0)) / h
        assert np.abs(fd - sp.quat_rate(q, w)).max() < 1e-5


def test_quat_rate_orthogonal_to_q():
    rng = np.random.default_rng(7)
    for _ in range(100):
        q = random_quat(rng)
        w = rng.standard_normal(3)
        assert abs(q @ sp.quat_rate(q, w)) < 1e-15


def test_omega_from_quat_rate_round_trip():
    rng = np.random.default_rng(8)
    for _ in range(100):
        q = random_quat(rng)
        w = rng.standard_normal(3)
        assert np.abs(sp.omega_from_quat_rate(q, sp.quat_rate(q, w)) - w).max() < 1e-12
    assert np.array_equal(sp.omega_from_quat_rate(q, np.zeros(4)), np.zeros(3))
    w = 1.3
    assert np.allclose(
        sp.omega_from_quat_rate([1, 0, 0, 0], [0, 0, 0, w / 2]), [0, 0, w])


def test_quat_rotation_round_trips():
    rng = np.random.default_rng(9)
    qi = sp.rotation_to_quat(np.eye(3))
    assert np.allclose(qi, [1, 0, 0, 0])
    # 90 degrees about z maps x to y
    q = np.array([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)])
    assert np.allclose(sp.quat_to_rotation(q) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    for _ in range(1000):
        q = random_quat(rng)
        R = sp.quat_to_rotation(q)
        q2 = sp.rotation_to_quat(R)
        assert min(np.abs(q2 - q).max(), np.abs(q2 + q).max()) < 1e-10
        assert q2[0] >= 0.0


def test_rotation_to_quat_rejects_non_orthonormal():
    R = np.eye(3)
    R[0, 1] = 1e-3
    with pytest.raises(ValueError):
        sp.rotation_to_quat(R)
    with pytest.raises(ValueError):
        sp.rotation_to_quat(-np.eye(3))


def test_double_cover_exact():
    rng = np.random.default_rng(10)
    for _ in range(100):
        q = random_quat(rng)
        assert np.array_equal(sp.quat_to_rotation(q), sp.quat_to_rotation(-q))


def test_euler_zyx_convention():
    yaw, pitch, roll = 0.4, -0.3, 0.9
    Rz = sp.quat_to_rotation(sp.quat_from_axis_angle([0, 0, 1], yaw))
    Ry = sp.quat_to_rotation(sp.quat_from_axis_angle([0, 1, 0], pitch))
    Rx = sp.quat_to_rotation(sp.quat_from_axis_angle([1, 0, 0], roll))
    q = sp.euler_to_quat([yaw, pitch, roll])
    assert np.abs(sp.quat_to_rotation(q) - Rz @ Ry @ Rx).max() < 1e-14
    assert np.abs(sp.quat_to_euler(q) - [yaw, pitch, roll]).max() < 1e-12


def test_euler_round_trip_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        e = rng.uniform([-np.pi, -np.pi / 2 + 0.05, -np.pi], [np.pi, np.pi / 2 - 0.05, np.pi])
        assert np.abs(sp.quat_to_euler(sp.euler_to_quat(e)) - e).max() < 1e-10


def test_integrate_quat_zero_omega():
    rng = np.random.default_rng(12)
    q = random_quat(rng)
    assert np.allclose(sp.integrate_quat(q, [0, 0, 0], 0.1), q, atol=1e-15)


def test_integrate_quat_half_turn():
    q = sp.integrate_quat([1, 0, 0, 0], [0, 0, np.pi], 1.0)
    assert np.allclose(q, [0, 0, 0, 1], atol=1e-12)


def test_integrate_quat_norm_preservation():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        q = random_quat(rng)
        w = rng.standard_normal(3) * 5
        dt = rng.uniform(0, 0.5)
        assert abs(np.linalg.norm(sp.integrate_quat(q, w, dt)) - 1.0) < 1e-12


def test_integrate_quat_exact_for_constant_omega():
    rng = np.random.default_rng(14)
    q = random_quat(rng)
    w = rng.standard_normal(3)
    one = sp.integrate_quat(q, w, 0.3)
    many = q
    for _ in range(10):
        many = sp.integrate_quat(many, w, 0.03)
    assert np.abs(one - many).max() < 1e-12


def test_integrate_quat_small_dt_matches_euler_at_second_order():
    # Richardson: the gap to an explicit Euler step shrinks ~4x per halving
    rng = np.random.default_rng(15)
    q = random_quat(rng)
    w = rng.standard_normal(3)

    def gap(dt):
        euler = q + dt * sp.quat_rate(q, w)
        return np.linalg.norm(sp.integrate_quat(q, w, dt) - euler)

    g1, g2 = gap(1e-3), gap(5e-4)
    assert 3.5 < g1 / g2 < 4.5


def test_sign_continue():
    q = np.array([0.1, 0, 0, 0.99498743710662])
    q = q / np.linalg.norm(q)
    assert np.array_equal(sp.quat_sign_continue(q, q), q)
    assert np.array_equal(sp.quat_sign_continue(-q, q), q)


def test_unit_quaternion_type():
    u = sp.UnitQuaternion.identity()
    assert u.eta == 1.0
    with pytest.raises(ValueError):
        sp.UnitQuaternion(1.0, [1.0, 0, 0])
    v = sp.UnitQuaternion.normalized([2.0, 0, 0, 0])
    assert v.eta == 1.0
    assert np.allclose((-v).as_array(), [-1, 0, 0, 0])


def test_twist_wrench_validation():
    t = sp.Twist.from_array([1, 2, 3, 4, 5, 6])
    assert np.allclose(t.linear, [1, 2, 3])
    with pytest.raises(ValueError):
        sp.Twist([np.inf, 0, 0], [0, 0, 0])
    w = sp.Wrench.zero()
    assert np.array_equal(w.as_array(), np.zeros(6))
