"""Residual formulas, truncated-latent draws, and recreation rules."""

import numpy as np
import pytest
from scipy.stats import kstest, norm

import lrboot as lb
from lrboot import residuals as res
from lrboot.data import DesignInfo
from lrboot.errors import UnsupportedKind
from lrboot.glm import FitResult
from lrboot.rng import substream


def _manual_fit(family, link, eta, mu=None, var=None, alpha=None, J=0):
    """Hand-assembled FitResult so formulas can be checked pointwise."""
    eta = np.asarray(eta, dtype=float)
    spec = lb.ModelSpec(
        family,
        link,
        (lb.Term("raw", 0),),
        include_intercept=False,
        n_categories=J,
    )
    design = DesignInfo(
        matrix=eta[:, None],
        coef_names=("x1",),
        means=np.zeros(1),
        sds=np.ones(1),
        has_intercept=False,
    )
    return FitResult(
        beta_hat=np.array([1.0]),
        alpha_hat=alpha,
        mu_hat=mu if mu is not None else eta,
        var_hat=var,
        loglik=0.0,
        iterations=0,
        converged=True,
        grad_norm=0.0,
        spec=spec,
        design=design,
    )


def _ds(y, n=None):
    y = np.asarray(y, dtype=float)
    n = n or y.shape[0]
    return lb.make_dataset(y, np.linspace(0, 1, n)[:, None], standardize=False)


def test_pearson_pointwise():
    fit = _manual_fit(
        "binomial",
        "probit",
        eta=np.zeros(3),
        mu=np.array([0.5, 0.5, 0.5]),
        var=np.array([0.25, 0.25, 0.25]),
    )
    r = res.pearson(fit, _ds([0.5, 1.0, 0.0])).values
    assert np.allclose(r, [0.0, 1.0, -1.0])

    fit_p = _manual_fit(
        "poisson", "log", np.zeros(2), mu=np.array([4.0, 4.0]), var=np.array([4.0, 4.0])
    )
    assert np.allclose(res.pearson(fit_p, _ds([6.0, 4.0])).values, [1.0, 0.0])


def test_deviance_pointwise():
    fit_p = _manual_fit("poisson", "log", np.zeros(2), mu=np.array([2.0, 3.0]))
    r = res.deviance(fit_p, _ds([0.0, 3.0])).values
    assert np.isclose(r[0], -2.0)  # y=0, mu=2 with the 0*log0 = 0 convention
    assert r[1] == 0.0

    fit_g = _manual_fit("gaussian", "identity", np.array([1.0, 2.0]))
    dev = res.deviance(fit_g, _ds([1.5, 1.0])).values
    rawr = res.raw(fit_g, _ds([1.5, 1.0])).values
    assert np.allclose(dev, rawr)


def test_sbs_binary_and_ordinal():
    fit = _manual_fit(
        "binomial", "probit", np.zeros(2), mu=np.array([0.3, 0.3]), var=np.array([0.21, 0.21])
    )
    r = res.sbs(fit, _ds([1.0, 0.0])).values
    assert np.allclose(r, [0.7, -0.3])

    probs = np.array([[0.2, 0.5, 0.3], [0.2, 0.5, 0.3]])
    fit_o = _manual_fit(
        "ordinal", "probit", np.zeros(2), mu=probs, alpha=np.array([-0.5, 0.5]), J=3
    )
    r_o = res.sbs(fit_o, _ds([2.0, 1.0])).values
    assert np.isclose(r_o[0], -0.1)


def test_sbs_strictly_increasing_in_category():
    probs = np.tile([0.1, 0.25, 0.4, 0.25], (2, 1))
    fit = _manual_fit(
        "ordinal", "probit", np.zeros(2), mu=probs, alpha=np.array([-1.0, 0.0, 1.0]), J=4
    )
    vals = [res.sbs(fit, _ds([float(j), 1.0])).values[0] for j in (1, 2, 3, 4)]
    assert np.all(np.diff(vals) > 0)
    assert all(-1 < v < 1 for v in vals)


def test_surrogate_half_normal_mean():
    n = 100_000
    fit = _manual_fit(
        "binomial", "probit", np.zeros(n), mu=np.full(n, 0.5), var=np.full(n, 0.25)
    )
    r = res.surrogate(fit, _ds(np.ones(n)), rng=substream(123)).values
    assert np.all(r > 0)
    assert abs(r.mean() - np.sqrt(2 / np.pi)) < 0.01


def test_surrogate_respects_truncation_bounds_ordinal():
    rng = np.random.default_rng(5)
    n = 2000
    eta = rng.uniform(-1.5, 1.5, n)
    alpha = np.array([-0.8, 0.4, 1.1])
    z = eta + rng.standard_normal(n)
    y = 1.0 + (z[:, None] > alpha[None, :]).sum(axis=1)
    probs = np.ones((n, 4)) / 4
    fit = _manual_fit("ordinal", "probit", eta, mu=probs, alpha=alpha, J=4)
    rs = res.surrogate(fit, _ds(y), rng=substream(9)).values
    lo, hi = res.latent_intervals(fit, y)
    assert np.all(rs > lo) and np.all(rs <= hi)


def test_surrogate_standard_normal_under_correct_model():
    rng = np.random.default_rng(77)
    n = 5000
    x = rng.uniform(-2, 2, n)
    y = (rng.random(n) < norm.cdf(0.3 + 0.9 * x)).astype(float)
    ds = lb.make_dataset(y, x[:, None])
    spec = lb.ModelSpec("binomial", "probit", (lb.Term("raw", 0),))
    fit = lb.fit_qmle(ds, spec)
    r = res.surrogate(fit, ds, rng=substream(11)).values
    stat = kstest(r, "norm").statistic
    assert stat < 1.6276 / np.sqrt(n)  # 1% KS critical value


def test_surrogate_distribution_converges_with_n():
    med = []
    for n in (500, 2000, 8000):
        stats = []
        for rep in range(20):
            rng = np.random.default_rng(97 + 31 * rep)
            x = rng.uniform(-2, 2, n)
            y = (rng.random(n) < norm.cdf(0.4 + 0.8 * x)).astype(float)
            ds = lb.make_dataset(y, x[:, None])
            fit = lb.fit_qmle(ds, lb.ModelSpec("binomial", "probit", (lb.Term("raw", 0),)))
            r = res.surrogate(fit, ds, rng=substream(500 + rep)).values
            stats.append(kstest(r, "norm").statistic)
        med.append(np.median(stats))
    assert med[0] > med[1] > med[2]


def test_logit_surrogate_uses_logistic_latent():
    n = 200_000
    fit = _manual_fit(
        "binomial", "logit", np.zeros(n), mu=np.full(n, 0.5), var=np.full(n, 0.25)
    )
    r = res.surrogate(fit, _ds(np.ones(n)), rng=substream(21)).values
    # half-logistic mean is 2 log 2
    assert abs(r.mean() - 2 * np.log(2.0)) < 0.02


def test_supported_kind_matrix():
    assert res.supports("binomial", "surrogate")
    assert res.supports("ordinal", "sbs")
    assert not res.supports("ordinal", "pearson")
    assert not res.supports("poisson", "surrogate")
    assert not res.supports("binomial", "raw")
    assert res.supports("gaussian", "raw")
    with pytest.raises(UnsupportedKind):
        res.check_supported("ordinal", "pearson")


def test_recreate_surrogate_binary_sign_rule():
    eta = np.array([0.4, -0.2])
    fit = _manual_fit(
        "binomial", "probit", eta, mu=norm.cdf(eta), var=norm.cdf(eta) * (1 - norm.cdf(eta))
    )
    r_star = np.array([-0.3, 0.1])  # s* = 0.1 > 0 ; s* = -0.1 <= 0
    y_star = res.recreate(fit, _ds([1.0, 0.0]), r_star, "surrogate")
    assert np.allclose(y_star, [1.0, 0.0])


def test_recreate_pearson_clamps_to_support():
    fit = _manual_fit(
        "binomial", "probit", np.zeros(2), mu=np.array([0.5, 0.5]), var=np.array([0.25, 0.25])
    )
    y_star = res.recreate(fit, _ds([1.0, 0.0]), np.array([2.0, 0.0]), "pearson")
    assert y_star[0] == 1.0  # 0.5 + 0.5*2 = 1.5 clamps to 1

    fit_p = _manual_fit(
        "poisson", "log", np.zeros(2), mu=np.ones(2), var=np.ones(2)
    )
    assert res.recreate(fit_p, _ds([0.0, 1.0]), np.array([-5.0, 0.0]), "pearson")[0] == 0.0


def test_recreate_raw_round_trip_exact():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(100)
    y = 1 + 2 * x + rng.standard_normal(100)
    ds = lb.make_dataset(y, x[:, None])
    fit = lb.fit_qmle(ds, lb.ModelSpec("gaussian", "identity", (lb.Term("raw", 0),)))
    r = res.raw(fit, ds).values
    assert np.allclose(res.recreate(fit, ds, r, "raw"), y, atol=1e-12)
    # pearson coincides for the gaussian family
    rp = res.pearson(fit, ds).values
    assert np.allclose(res.recreate(fit, ds, rp, "pearson"), y, atol=1e-12)


def test_recreate_pearson_round_trip_where_no_clamp():
    rng = np.random.default_rng(13)
    x = rng.uniform(-1, 1, 300)
    y = rng.poisson(np.exp(0.5 + 0.4 * x)).astype(float)
    ds = lb.make_dataset(y, x[:, None])
    fit = lb.fit_qmle(ds, lb.ModelSpec("poisson", "log", (lb.Term("raw", 0),)))
    r = res.pearson(fit, ds).values
    back = res.recreate(fit, ds, r, "pearson")
    no_clamp = back > 0
    assert np.allclose(back[no_clamp], y[no_clamp], atol=1e-10)


def test_recreate_sbs_ordinal_monotone_pseudo_inverse():
    # dyadic probabilities so the SBS grid (-0.75, 0.0, 0.75) is float-exact
    probs = np.array([[0.25, 0.5, 0.25], [0.5, 0.25, 0.25]])
    fit = _manual_fit(
        "ordinal", "probit", np.zeros(2), mu=probs, alpha=np.array([-0.5, 0.9]), J=3
    )
    ds = _ds([1.0, 2.0])
    for r_star, expected in [(-0.9, 1.0), (-0.2, 2.0), (0.69, 3.0)]:
        y_star = res.recreate(fit, ds, np.array([r_star, 0.0]), "sbs")
        assert y_star[0] == expected
    # tie exactly between categories 1 and 2 resolves to the smaller one
    assert res.recreate(fit, ds, np.array([-0.375, 0.0]), "sbs")[0] == 1.0


def test_recreate_sbs_reduces_to_binary_rule():
    fit = _manual_fit(
        "binomial", "probit", np.zeros(3), mu=np.full(3, 0.4), var=np.full(3, 0.24)
    )
    y_star = res.recreate(fit, _ds([1.0, 0.0, 1.0]), np.array([-0.1, 0.0, 0.2]), "sbs")
    assert np.allclose(y_star, [0.0, 0.0, 1.0])


def test_recreate_deviance_rejected():
    fit = _manual_fit("poisson", "log", np.zeros(2), mu=np.ones(2), var=np.ones(2))
    with pytest.raises(UnsupportedKind):
        res.recreate(fit, _ds([1.0, 2.0]), np.zeros(2), "deviance")


def test_residual_csv_export(tmp_path):
    fit = _manual_fit("gaussian", "identity", np.array([1.0, 2.0]))
    r = res.raw(fit, _ds([1.5, 1.0]))
    path = tmp_path / "resid.csv"
    res.to_csv(r, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "index,residual,kind"
    assert lines[1].startswith("1,0.5,raw")
    assert len(lines) == 3
