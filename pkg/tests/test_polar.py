import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import specprox as sp
from specprox.polar import SHIPPED_SCHEDULES
from oracles import random_orthogonal

NS = sp.PolySchedule(name="ns1", iterations=((1.5, -0.5, 0.0),))


def test_empty_schedule_is_identity():
    empty = sp.PolySchedule(name="id", iterations=())
    assert sp.apply_poly_scalar(empty, 0.37) == 0.37


def test_cubic_fixed_point_at_one():
    assert sp.apply_poly_scalar(NS, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_zero_maps_to_zero():
    sched = sp.load_schedule("newton-schulz")
    assert sp.apply_poly_scalar(sched, 0.0) == 0.0


@given(st.floats(0.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_oddness_exact(t):
    sched = sp.load_schedule("muon-quintic")
    assert sp.apply_poly_scalar(sched, -t) == -sp.apply_poly_scalar(sched, t)


def test_apply_matrix_zero():
    sched = sp.load_schedule("newton-schulz")
    out = sp.apply_poly_matrix(sched, np.zeros((3, 2)), eps_hat=0.1)
    np.testing.assert_allclose(out, 0.0)


def test_apply_matrix_equal_singular_values_stay_equal(rng):
    sched = sp.load_schedule("newton-schulz")
    q1 = random_orthogonal(3, rng)
    q2 = random_orthogonal(3, rng)
    M = q1 @ np.diag([0.7, 0.7, 0.2]) @ q2
    out = sp.apply_poly_matrix(sched, M, eps_hat=0.05)
    s = np.linalg.svd(out, compute_uv=False)
    assert s[0] == pytest.approx(s[1], rel=1e-11)


def test_apply_matrix_acts_on_singular_values(rng):
    # singular vectors preserved; values transformed by the scalar composition
    sched = sp.load_schedule("muon-quintic")
    M = rng.standard_normal((4, 4))
    eps_hat = 0.2
    out = sp.apply_poly_matrix(sched, M, eps_hat)
    res_in = sp.full_svd(M / (np.linalg.norm(M) + eps_hat))
    expected_sigma = np.abs(sp.apply_poly_scalar(sched, res_in.sigma))
    got_sigma = np.linalg.svd(out, compute_uv=False)
    np.testing.assert_allclose(np.sort(got_sigma), np.sort(expected_sigma), atol=1e-9)


def test_apply_matrix_orthogonal_equivariance(rng):
    sched = sp.load_schedule("varying-quintic")
    M = rng.standard_normal((4, 4))
    q1 = random_orthogonal(4, rng)
    q2 = random_orthogonal(4, rng)
    lhs = sp.apply_poly_matrix(sched, q1 @ M @ q2, eps_hat=0.1)
    rhs = q1 @ sp.apply_poly_matrix(sched, M, eps_hat=0.1) @ q2
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_schedule_parsing_and_errors(tmp_path):
    p = tmp_path / "sched.txt"
    p.write_text("# comment\n1.0 -0.5 0.25\n\n2.0 0.0 0.0  # inline\n")
    sched = sp.load_schedule(str(p))
    assert sched.iterations == ((1.0, -0.5, 0.25), (2.0, 0.0, 0.0))
    p.write_text("1.0 2.0\n")
    with pytest.raises(sp.InvalidConfigError):
        sp.load_schedule(str(p))
    p.write_text("a b c\n")
    with pytest.raises(sp.InvalidConfigError):
        sp.load_schedule(str(p))
    with pytest.raises(sp.InvalidConfigError):
        sp.load_schedule("no-such-schedule-or-file")


def test_shipped_schedules_load():
    for name in SHIPPED_SCHEDULES:
        sched = sp.load_schedule(name)
        assert len(sched.iterations) >= 1


def test_fit_report_identity_at_one():
    ident = sp.PolySchedule(name="id", iterations=())
    rep = sp.fit_report(ident, 3e-4, 4.0, [1.0])
    assert rep.max_dev_vs_sign == pytest.approx(0.0, abs=1e-12)


def test_fit_report_origin_agreement():
    sched = sp.load_schedule("newton-schulz")
    rep = sp.fit_report(sched, 3e-4, 4.0, [0.0])
    assert rep.max_dev_vs_sign == 0.0
    assert rep.max_dev_vs_preconditioner == 0.0


def test_fit_report_default_schedule_ordering():
    sched = sp.load_schedule(sp.DEFAULT_SCHEDULE)
    rep = sp.fit_report(sched, 3e-4, 4.0, np.linspace(0.0, 1.0, 2001))
    assert rep.max_dev_vs_preconditioner < rep.max_dev_vs_sign


def test_fit_report_grid_validation():
    sched = sp.load_schedule("newton-schulz")
    with pytest.raises(sp.InvalidInputError):
        sp.fit_report(sched, 3e-4, 4.0, [])
    with pytest.raises(sp.InvalidInputError):
        sp.fit_report(sched, 3e-4, 4.0, [-0.1, 0.5])
