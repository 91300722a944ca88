import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpmcsvm import complexity
from lpmcsvm.complexity import aerc_csv, estimate, estimate_over_p, fit_scaling, sample_noise, scaling_basis
from lpmcsvm.dataio import synthetic_blobs
from lpmcsvm.fw import FwConfig
from lpmcsvm.losses import LossSpec
from lpmcsvm.norms import INF


@pytest.fixture(scope="module")
def small():
    ds = synthetic_blobs(40, 5, 4, seed=2)
    return ds, LossSpec("multinomial_logistic", 4, "logistic")


def test_noise_streams():
    a = sample_noise("rademacher", 50, seed=3, draw=0)
    assert set(np.unique(a)) <= {-1.0, 1.0}
    assert np.array_equal(a, sample_noise("rademacher", 50, seed=3, draw=0))
    assert not np.array_equal(a, sample_noise("rademacher", 50, seed=3, draw=1))
    assert not np.array_equal(a, sample_noise("rademacher", 50, seed=4, draw=0))
    g = sample_noise("gaussian", 2000, seed=0, draw=0)
    assert abs(g.mean()) < 0.1 and abs(g.std() - 1) < 0.1
    with pytest.raises(ValueError):
        sample_noise("uniform", 5, 0, 0)


def test_degenerate_radius(small):
    ds, spec = small
    est = estimate(ds, spec, FwConfig(lam=1e-12, max_iters=50), draws=3, seed=1)
    for t, v in enumerate(est.per_draw):
        eps = sample_noise("rademacher", ds.n, 1, t)
        assert v == pytest.approx(math.log(4) * eps.mean(), abs=1e-9)
    assert est.mean == pytest.approx(np.mean(est.per_draw), rel=1e-15)


def test_determinism_and_order_independence(small):
    ds, spec = small
    cfg = FwConfig(lam=5.0, max_iters=200)
    one = estimate(ds, spec, cfg, draws=1, seed=9)
    again = estimate(ds, spec, cfg, draws=1, seed=9)
    assert one.per_draw == again.per_draw
    three = estimate(ds, spec, cfg, draws=3, seed=9)
    # draw 0 does not depend on how many draws were requested
    assert three.per_draw[0] == one.per_draw[0]
    par = estimate(ds, spec, cfg, draws=3, seed=9, jobs=3)
    assert par.per_draw == three.per_draw


def test_nested_radii(small):
    ds, spec = small
    lo = estimate(ds, spec, FwConfig(lam=1.0, max_iters=500), draws=4, seed=5)
    hi = estimate(ds, spec, FwConfig(lam=4.0, max_iters=500), draws=4, seed=5)
    assert all(a <= b + 1e-6 for a, b in zip(lo.per_draw, hi.per_draw))


def test_over_p_monotone_and_ordered(small):
    ds, spec = small
    cfg = FwConfig(lam=10.0, max_iters=500)
    ps = [4.0, 2.0, INF, 1.5]
    ests = estimate_over_p(ds, spec, cfg, ps, draws=3, seed=2)
    by_p = dict(zip(ps, ests))
    order = sorted(ps)
    for a, b in zip(order, order[1:]):
        assert all(x <= y + 1e-4 for x, y in zip(by_p[a].per_draw, by_p[b].per_draw))
    # the first p in sorted order has no warm start, so it matches a plain estimate
    plain = estimate(ds, spec, cfg.replace(p=1.5), draws=3, seed=2)
    assert by_p[1.5].per_draw == plain.per_draw


def test_restarts_never_hurt(small):
    ds, spec = small
    cfg = FwConfig(p=3.0, lam=10.0, max_iters=300)
    base = estimate(ds, spec, cfg, draws=2, seed=4)
    more = estimate(ds, spec, cfg, draws=2, seed=4, restarts=2)
    assert all(b >= a for a, b in zip(base.per_draw, more.per_draw))


def test_rademacher_mean_not_significantly_negative(small):
    ds, spec = small
    est = estimate(ds, spec, FwConfig(lam=3.0, max_iters=300), draws=12, seed=0)
    assert est.mean >= -3 * est.stderr


def test_gaussian_noise_kind(small):
    ds, spec = small
    est = estimate(ds, spec, FwConfig(lam=3.0, max_iters=200), draws=2, noise_kind="gaussian", seed=0)
    assert est.noise_kind == "gaussian" and np.all(np.isfinite(est.per_draw))
    with pytest.raises(ValueError):
        estimate(ds, spec, FwConfig(), draws=0)


def test_fit_scaling_examples():
    xs = [2.0, 4.0]
    a = [scaling_basis(x, 10, "in_p") for x in xs]
    fit = fit_scaling(xs, [2 * v for v in a], 10, "in_p")
    assert fit.tau_hat == pytest.approx(2.0, rel=1e-14)
    assert fit.residual_rms == pytest.approx(0.0, abs=1e-14)
    fit = fit_scaling([1.0, 1.5, 2.0], [1.0, 2.0, 4.0], 16, "in_p")
    assert fit.tau_hat == pytest.approx(7.0 / 3.0)
    rng = np.random.default_rng(0)
    cs = [2, 4, 8, 16, 32]
    ys = [2 * scaling_basis(c, 4.0, "in_c") + rng.normal(scale=0.01) for c in cs]
    assert 1.9 <= fit_scaling(cs, ys, 4.0, "in_c").tau_hat <= 2.1


def test_fit_scaling_clamps_and_validates():
    assert fit_scaling([2.0, 3.0], [-1.0, -2.0], 8, "in_p").tau_hat == 0.0
    with pytest.raises(ValueError):
        fit_scaling([2.0], [1.0, 2.0], 8, "in_p")
    with pytest.raises(ValueError):
        fit_scaling([2.0], [1.0], 8, "in_x")


def test_scaling_basis_values():
    assert scaling_basis(4.0, 16, "in_p") == pytest.approx(2.0)
    assert scaling_basis(INF, 16, "in_p") == pytest.approx(4.0)
    assert scaling_basis(1.5, 16, "in_p") == 1.0
    assert scaling_basis(16, 4.0, "in_c") == pytest.approx(2.0)


@given(st.lists(st.sampled_from([1.0, 2.0, 3.0, 4.0, 8.0, INF]), min_size=1, max_size=6), st.floats(0, 10), st.integers(2, 50))
def test_fit_exact_on_model(ps, tau, c):
    ys = [tau * scaling_basis(p, c, "in_p") for p in ps]
    fit = fit_scaling(ps, ys, c, "in_p")
    assert fit.residual_rms <= 1e-9 * max(1.0, tau * c)
    assert fit.tau_hat == pytest.approx(tau, rel=1e-9, abs=1e-12)


def test_csv_layout(small):
    ds, spec = small
    est = estimate(ds, spec, FwConfig(lam=1.0, max_iters=50), draws=2, seed=0)
    text = aerc_csv([(2.0, 4, est), (INF, 4, est)], fit_scaling([2.0, INF], [est.mean] * 2, 4, "in_p"))
    lines = text.splitlines()
    assert lines[0] == "kind,p,c,draw,value,fw_iters,fw_gap,residual_rms"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["draw", "draw", "mean", "draw", "draw", "mean", "fit"]
    assert lines[4].split(",")[1] == "inf"
    assert "\r" not in text


def test_failed_draws_are_recorded(small, monkeypatch):
    ds, spec = small

    def broken(*args, **kwargs):
        raise FloatingPointError("boom")

    monkeypatch.setattr(complexity, "solve", broken)
    est = estimate(ds, spec, FwConfig(), draws=2, seed=0)
    assert est.failed
    assert all(math.isnan(v) for v in est.per_draw)
    assert "boom" in est.fw_traces[0]["error"]
