"""Tests for splatlab.losses against brute-force all-pairs oracles."""

import math

import numpy as np
import pytest

from splatlab.errors import InvalidInputError
from splatlab.geometry import PointCloud
from splatlab.losses import arc_cd, chamfer, chamfer_l1, fidelity, fscore, mmd, total_loss


def brute_chamfer(x, y):
    d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    return d2.min(axis=1).mean() + d2.min(axis=0).mean()


def brute_chamfer_l1(x, y):
    d = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2))
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())


def _clouds(seed, n=64, m=64):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 3)), rng.normal(size=(m, 3))


def test_chamfer_identity():
    x, _ = _clouds(0)
    res = chamfer(PointCloud(x), PointCloud(x.copy()), with_grad=True)
    assert res.value == 0.0
    assert not res.d_X.any()


def test_chamfer_single_pair_value_and_grad():
    """Both one-sided terms equal 1, so the value is 2; the x derivative
    picks up 2(x-y) from each direction, giving (-4, 0, 0)."""
    x = np.array([[0.0, 0.0, 0.0]])
    y = np.array([[1.0, 0.0, 0.0]])
    res = chamfer(PointCloud(x), PointCloud(y), with_grad=True)
    assert res.value == 2.0
    np.testing.assert_allclose(res.d_X, [[-4.0, 0.0, 0.0]], rtol=0, atol=1e-15)

    # cross-check against central differences right here
    fd = np.zeros(3)
    for a in range(3):
        for sign in (1.0, -1.0):
            xp = x.copy()
            xp[0, a] += sign * 1e-6
            fd[a] += sign * chamfer(PointCloud(xp), PointCloud(y)).value / 2e-6
    np.testing.assert_allclose(res.d_X[0], fd, rtol=1e-8, atol=1e-8)


def test_chamfer_matches_bruteforce():
    for seed in range(5):
        x, y = _clouds(seed, m=48)
        got = chamfer(PointCloud(x), PointCloud(y)).value
        assert abs(got - brute_chamfer(x, y)) < 1e-12


def test_chamfer_symmetry():
    x, y = _clouds(11)
    assert chamfer(PointCloud(x), PointCloud(y)).value == chamfer(PointCloud(y), PointCloud(x)).value


def test_chamfer_gradient_fd_random():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(10, 3))
    y = rng.normal(size=(9, 3)) + 0.5
    res = chamfer(PointCloud(x), PointCloud(y), with_grad=True)
    h = 1e-6
    for i in (0, 3, 7):
        for a in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i, a] += h
            xm[i, a] -= h
            fd = (chamfer(PointCloud(xp), PointCloud(y)).value
                  - chamfer(PointCloud(xm), PointCloud(y)).value) / (2 * h)
            assert abs(res.d_X[i, a] - fd) < 1e-6 * max(1.0, abs(fd))


def test_chamfer_l1_single_pair():
    x = np.array([[0.0, 0.0, 0.0]])
    y = np.array([[1.0, 0.0, 0.0]])
    assert chamfer_l1(PointCloud(x), PointCloud(y)).value == 1.0


def test_chamfer_l1_identity_and_bruteforce():
    x, y = _clouds(3)
    assert chamfer_l1(PointCloud(x), PointCloud(x.copy())).value == 0.0
    got = chamfer_l1(PointCloud(x), PointCloud(y)).value
    assert abs(got - brute_chamfer_l1(x, y)) < 1e-12


def test_arc_cd_identity():
    x, _ = _clouds(1)
    for lam in (0.5, 1.0, 3.0):
        assert arc_cd(PointCloud(x), PointCloud(x.copy()), lam).value == 0.0


def test_arc_cd_unit_value():
    """Chamfer equal to cosh(1)-1 maps to exactly lambda."""
    # two single points at distance sinh(0.5): chamfer = 2 sinh^2(0.5) = cosh(1)-1
    x = np.array([[0.0, 0.0, 0.0]])
    y = np.array([[math.sinh(0.5), 0.0, 0.0]])
    res = arc_cd(PointCloud(x), PointCloud(y), 1.0)
    assert abs(res.value - 1.0) < 1e-9
    res2 = arc_cd(PointCloud(x), PointCloud(y), 2.5)
    assert abs(res2.value - 2.5) < 1e-9


def test_arc_cd_scale_linearity():
    x, y = _clouds(9, n=20, m=20)
    base = arc_cd(PointCloud(x), PointCloud(y), 1.0).value
    assert arc_cd(PointCloud(x), PointCloud(y), 3.5).value == 3.5 * base


def test_arc_cd_compresses_outliers():
    # arccosh(1+c) grows like log(2c), so it falls below c once c exceeds
    # the fixed point of cosh(c) = 1 + c (about 1.62) and the gap widens
    for c in (2.0, 10.0, 1e4):
        assert math.acosh(1.0 + c) < c
    assert math.acosh(1.0 + 1e6) / 1e6 < 1e-4


def test_arc_cd_monotone_in_chamfer():
    """Interpolating X away from Y never decreases the loss."""
    rng = np.random.default_rng(15)
    y = rng.normal(size=(12, 3))
    direction = rng.normal(size=(12, 3))
    values = []
    for t in np.linspace(0.0, 2.0, 20):
        x = y + t * direction
        values.append(arc_cd(PointCloud(x), PointCloud(y), 1.0).value)
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_arc_cd_gradient_chain():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(8, 3))
    y = rng.normal(size=(8, 3)) + 2.0
    res = arc_cd(PointCloud(x), PointCloud(y), 1.7, with_grad=True)
    assert not res.grad_clamped
    base = chamfer(PointCloud(x), PointCloud(y), with_grad=True)
    c = base.value
    np.testing.assert_allclose(res.d_X, 1.7 / math.sqrt(c * c + 2 * c) * base.d_X,
                               rtol=1e-14, atol=0)


def test_arc_cd_clamps_at_zero_chamfer():
    x = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    res = arc_cd(PointCloud(x), PointCloud(x.copy()), 1.0, with_grad=True)
    assert res.value == 0.0
    assert res.grad_clamped
    assert np.isfinite(res.d_X).all()


def test_total_loss_all_stages_equal_gt():
    x, _ = _clouds(2, n=16)
    gt = PointCloud(x)
    res = total_loss([PointCloud(x.copy())] * 3, gt, [1.0, 1.0, 1.0])
    assert res.value == 0.0


def test_total_loss_single_stage_is_arc():
    x, y = _clouds(5, n=16, m=16)
    lone = total_loss([PointCloud(x)], PointCloud(y), [1.0])
    assert lone.value == arc_cd(PointCloud(x), PointCloud(y), 1.0).value


def test_total_loss_sums_stages():
    rng = np.random.default_rng(8)
    gt = PointCloud(rng.normal(size=(20, 3)))
    stages = [PointCloud(rng.normal(size=(12, 3))) for _ in range(3)]
    res = total_loss(stages, gt, [1.0, 1.0, 1.0], with_grad=True)
    parts = [arc_cd(s, gt, 1.0).value for s in stages]
    assert abs(res.value - sum(parts)) < 1e-12
    assert len(res.d_stages) == 3
    assert res.d_stages[0].shape == (12, 3)


def test_total_loss_length_mismatch():
    x, y = _clouds(0, n=4, m=4)
    with pytest.raises(InvalidInputError):
        total_loss([PointCloud(x)], PointCloud(y), [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        total_loss([], PointCloud(y), [])


def test_fscore_identity_and_separated():
    x, _ = _clouds(7, n=32)
    assert fscore(PointCloud(x), PointCloud(x.copy()), 0.01) == 1.0
    far = x + np.array([100.0, 0.0, 0.0])
    assert fscore(PointCloud(x), PointCloud(far), 0.01) == 0.0


def test_fscore_matches_bruteforce():
    x, y = _clouds(13, n=40, m=36)
    tau = 1.2
    d = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2))
    precision = (d.min(axis=1) <= tau).mean()
    recall = (d.min(axis=0) <= tau).mean()
    expected = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    assert abs(fscore(PointCloud(x), PointCloud(y), tau) - expected) < 1e-12


def test_fscore_symmetric():
    x, y = _clouds(19, n=30, m=25)
    assert fscore(PointCloud(x), PointCloud(y), 0.8) == fscore(PointCloud(y), PointCloud(x), 0.8)


def test_fscore_requires_positive_tau():
    x, y = _clouds(0, n=4, m=4)
    with pytest.raises(InvalidInputError):
        fscore(PointCloud(x), PointCloud(y), 0.0)


def test_fidelity_subset_is_zero():
    rng = np.random.default_rng(3)
    out = rng.normal(size=(30, 3))
    partial = out[::3].copy()
    assert fidelity(PointCloud(partial), PointCloud(out)) == 0.0


def test_fidelity_single_pair():
    a = PointCloud(np.array([[0.0, 0.0, 0.0]]))
    b = PointCloud(np.array([[1.0, 0.0, 0.0]]))
    assert fidelity(a, b) == 1.0


def test_fidelity_one_sided():
    x, y = _clouds(23, n=20, m=30)
    d = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2))
    assert abs(fidelity(PointCloud(x), PointCloud(y)) - d.min(axis=1).mean()) < 1e-12


def test_mmd_member_of_refs():
    x, y = _clouds(2, n=16, m=16)
    value, idx = mmd(PointCloud(x), [PointCloud(y), PointCloud(x.copy())])
    assert value == 0.0
    assert idx == 1


def test_mmd_single_ref_is_chamfer():
    x, y = _clouds(4, n=16, m=16)
    value, idx = mmd(PointCloud(x), [PointCloud(y)])
    assert idx == 0
    assert value == chamfer(PointCloud(x), PointCloud(y)).value


def test_mmd_exhaustive_scan():
    rng = np.random.default_rng(10)
    out = PointCloud(rng.normal(size=(18, 3)))
    refs = [PointCloud(rng.normal(size=(15, 3))) for _ in range(10)]
    value, idx = mmd(out, refs)
    scan = [chamfer(out, r).value for r in refs]
    assert value == min(scan)
    assert idx == int(np.argmin(scan))


def test_mmd_rejects_empty_refs():
    x, _ = _clouds(0, n=4)
    with pytest.raises(InvalidInputError):
        mmd(PointCloud(x), [])


def test_losses_accept_raw_arrays():
    x, y = _clouds(1, n=8, m=8)
    assert chamfer(x, y).value == chamfer(PointCloud(x), PointCloud(y)).value
