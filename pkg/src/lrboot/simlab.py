"""Simulation lab: misspecification scenarios, Monte Carlo pseudo-true
parameters and standard errors, and coverage/ratio experiments.

Fixed-design semantics: for a given (scenario, n, seed) the covariates are
frozen and only the response is redrawn across Monte Carlo replicates, so the
pseudo-true standard error measures response randomness alone.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr, ndtri
from scipy.stats import ks_2samp

from .bootstrap import ci_percentile, run
from .data import Dataset, ModelSpec, Term, back_transform, build_design, make_dataset
from .errors import TooManyFailures, UnknownScenario
from .glm import FitOptions, FitResult, fit_ordinal, fit_qmle, get_family
from .neighborhood import build_neighborhoods
from .residuals import surrogate_values
from .rng import derive_seed, stable_int, substream

__all__ = [
    "ScenarioDef",
    "PseudoTruth",
    "ExperimentReport",
    "scenario_ids",
    "get_scenario",
    "generate",
    "pseudo_truth",
    "run_experiment",
    "sweep_param",
    "theorem1_ks",
    "case1_candidates",
    "case2_candidates",
    "default_neighborhood_size",
    "report_to_csv",
    "sweep_to_csv",
]

# y-substream purposes keep pseudo-truth, experiment, and ad-hoc draws disjoint
_PURPOSE_PSEUDO = 1
_PURPOSE_EXPERIMENT = 2
_PURPOSE_ADHOC = 3


def _terms(k):
    return tuple(Term("raw", j) for j in range(k))


@dataclass(frozen=True)
class ScenarioDef:
    """Registered data-generating process plus its (misspecified) assumed model."""

    id: str
    default_n: int
    make_x: callable  # (rng, n, params) -> X_full
    draw_y: callable  # (rng, X_full, params) -> y
    assumed: callable  # (params) -> ModelSpec
    observed: callable  # (params) -> (col indices, meta, names) into X_full
    defaults: dict = field(default_factory=dict)
    x_param_names: tuple = ()  # params that alter the covariate draw
    paper_l: int | None = None  # neighborhood size when the source states one


_REGISTRY: dict[str, ScenarioDef] = {}


def _register(scn: ScenarioDef) -> None:
    _REGISTRY[scn.id] = scn


def scenario_ids() -> tuple:
    return tuple(sorted(_REGISTRY))


def get_scenario(scenario_id: str) -> ScenarioDef:
    scn = _REGISTRY.get(scenario_id)
    if scn is None:
        raise UnknownScenario(
            f"unknown scenario {scenario_id!r}; known: {', '.join(scenario_ids())}"
        )
    return scn


def default_neighborhood_size(scenario_id: str, n: int) -> int:
    scn = get_scenario(scenario_id)
    if scn.paper_l is not None:
        return scn.paper_l
    return int(np.ceil(n ** (1.0 / 3.0)))


# ---------------------------------------------------------------------------
# scenario registry


def _obs_all(k, names=None, meta=None):
    names = names or tuple(f"x{j + 1}" for j in range(k))
    meta = meta or tuple("continuous" for _ in range(k))

    def observed(params):
        return list(range(k)), meta, names

    return observed


def _binary_probit_spec(k):
    def assumed(params):
        return ModelSpec("binomial", "probit", _terms(k))

    return assumed


def _sc1_make_x(rng, n, params):
    return rng.uniform(-6.0, 6.0, size=(n, 1))


def _sc1_index(X, params):
    b0, b1 = 12.0, 2.0
    b2 = params["beta2"]
    x = X[:, 0]
    return b0 + b1 * x + b2 * x**2


_register(
    ScenarioDef(
        id="SC1_probit",
        default_n=2000,
        make_x=_sc1_make_x,
        draw_y=lambda rng, X, p: (rng.random(X.shape[0]) < ndtr(_sc1_index(X, p))).astype(float),
        assumed=_binary_probit_spec(1),
        observed=_obs_all(1, names=("x",)),
        defaults={"beta2": -2.0},
        paper_l=10,
    )
)

_register(
    ScenarioDef(
        id="SC1_logit",
        default_n=2000,
        make_x=_sc1_make_x,
        draw_y=lambda rng, X, p: (rng.random(X.shape[0]) < expit(_sc1_index(X, p))).astype(float),
        assumed=lambda p: ModelSpec("binomial", "logit", _terms(1)),
        observed=_obs_all(1, names=("x",)),
        defaults={"beta2": -2.0},
        paper_l=10,
    )
)


def _sc1_ordinal_draw(rng, X, params):
    x = X[:, 0]
    alphas = np.array([-16.0, -12.0, -8.0])
    index = 8.0 * x + params["beta2"] * x**2
    cum = ndtr(alphas[None, :] + index[:, None])
    u = rng.random(x.shape[0])
    y = 1.0 + (u[:, None] > cum).sum(axis=1)
    counts = np.bincount(y.astype(int), minlength=5)[1:]
    if np.any(counts == 0):
        warnings.warn(
            f"SC1_ordinal draw left category {int(np.argmin(counts)) + 1} empty",
            stacklevel=2,
        )
    return y


_register(
    ScenarioDef(
        id="SC1_ordinal",
        default_n=2000,
        make_x=lambda rng, n, p: rng.uniform(1.0, 7.0, size=(n, 1)),
        draw_y=_sc1_ordinal_draw,
        assumed=lambda p: ModelSpec(
            "ordinal", "probit", _terms(1), include_intercept=False, n_categories=4
        ),
        observed=_obs_all(1, names=("x",)),
        defaults={"beta2": -1.0},
        paper_l=10,
    )
)


def _sc2_make_x(rng, n, params):
    p = 10
    if params["correlated"]:
        cov = 0.5 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        L = np.linalg.cholesky(cov)
        return rng.standard_normal((n, p)) @ L.T
    return rng.standard_normal((n, p))


def _sc2_draw_y(rng, X, params):
    signs = np.array([(-1.0) ** j for j in range(1, 11)])
    index = 1.0 + X @ signs - X[:, 0] * X[:, 9] + X[:, 1] * X[:, 8]
    return (rng.random(X.shape[0]) < ndtr(index)).astype(float)


_register(
    ScenarioDef(
        id="SC2",
        default_n=2000,
        make_x=_sc2_make_x,
        draw_y=_sc2_draw_y,
        assumed=_binary_probit_spec(10),
        observed=_obs_all(10),
        defaults={"correlated": False},
        x_param_names=("correlated",),
    )
)


def _sc3_make_x(rng, n, params):
    rho = 0.7 if params["correlated"] else 0.0
    z = rng.standard_normal((n, 2))
    x1 = z[:, 0]
    v = rho * z[:, 0] + np.sqrt(1.0 - rho**2) * z[:, 1]
    return np.column_stack([x1, np.exp(v)])


_register(
    ScenarioDef(
        id="SC3",
        default_n=2000,
        make_x=_sc3_make_x,
        draw_y=lambda rng, X, p: (
            rng.random(X.shape[0]) < ndtr(-1.0 + 2.0 * X[:, 0] + 2.0 * X[:, 1])
        ).astype(float),
        assumed=_binary_probit_spec(1),
        observed=lambda p: ([0], ("continuous",), ("x1",)),  # x2 unobserved
        defaults={"correlated": False},
        x_param_names=("correlated",),
    )
)

_register(
    ScenarioDef(
        id="SC4_exp",
        default_n=2000,
        make_x=_sc1_make_x,
        draw_y=lambda rng, X, p: (
            rng.random(X.shape[0]) < ndtr(-2.0 + 4.0 * np.exp(X[:, 0]))
        ).astype(float),
        assumed=_binary_probit_spec(1),
        observed=_obs_all(1, names=("x",)),
    )
)

_register(
    ScenarioDef(
        id="SC4_sine",
        default_n=2000,
        make_x=_sc1_make_x,
        draw_y=lambda rng, X, p: (
            rng.random(X.shape[0]) < ndtr(5.0 * np.sin(X[:, 0]))
        ).astype(float),
        assumed=_binary_probit_spec(1),
        observed=_obs_all(1, names=("x",)),
    )
)


def _sc5_make_x(rng, n, params):
    x = rng.uniform(-6.0, 6.0, n)
    u = (rng.random(n) < 0.5).astype(float)
    return np.column_stack([x, u])


def _sc5_draw(rng, X, params):
    x, u = X[:, 0], X[:, 1]
    if params["shift_intercept"]:
        index = np.where(u == 0.0, -1.0 + x, 1.0 - x)
    else:
        index = np.where(u == 0.0, -2.0 + x, -2.0 - x)
    return (rng.random(X.shape[0]) < ndtr(index)).astype(float)


def _sc5_observed(params):
    return [0, 1], ("continuous", "categorical"), ("x", "u")


def _sc5_assumed(params):
    return ModelSpec("binomial", "probit", _terms(2))


_register(
    ScenarioDef(
        id="SC5_slope",
        default_n=2000,
        make_x=_sc5_make_x,
        draw_y=_sc5_draw,
        assumed=_sc5_assumed,
        observed=_sc5_observed,
        defaults={"shift_intercept": False},
    )
)

_register(
    ScenarioDef(
        id="SC5_both",
        default_n=2000,
        make_x=_sc5_make_x,
        draw_y=_sc5_draw,
        assumed=_sc5_assumed,
        observed=_sc5_observed,
        defaults={"shift_intercept": True},
    )
)

_register(
    ScenarioDef(
        id="SC6",
        default_n=2000,
        make_x=lambda rng, n, p: np.column_stack(
            [
                (rng.random(n) < 0.2).astype(float),
                (rng.random(n) < 0.8).astype(float),
            ]
        ),
        draw_y=lambda rng, X, p: (
            rng.random(X.shape[0])
            < ndtr(1.0 + X[:, 0] - X[:, 1] - 4.0 * X[:, 0] * X[:, 1])
        ).astype(float),
        assumed=_sc5_assumed,
        observed=lambda p: ([0, 1], ("categorical", "categorical"), ("x1", "x2")),
    )
)


def _sc7_draw(rng, X, params):
    mu = expit(-2.0 + 2.0 * X[:, 0])
    p_i = rng.beta(2.0 * mu, 2.0 * (1.0 - mu))
    return rng.binomial(10, p_i) / 10.0


_register(
    ScenarioDef(
        id="SC7",
        default_n=200,
        make_x=lambda rng, n, p: rng.uniform(0.0, 2.0, size=(n, 1)),
        draw_y=_sc7_draw,
        assumed=lambda p: ModelSpec("binomial", "logit", _terms(1)),
        observed=_obs_all(1, names=("x",)),
    )
)

_register(
    ScenarioDef(
        id="SC8",
        default_n=2000,
        make_x=_sc1_make_x,
        draw_y=lambda rng, X, p: rng.poisson(
            np.exp(4.0 + 2.0 * X[:, 0] - X[:, 0] ** 2)
        ).astype(float),
        assumed=lambda p: ModelSpec("poisson", "log", _terms(1)),
        observed=_obs_all(1, names=("x",)),
    )
)

_register(
    ScenarioDef(
        id="SC9",
        default_n=2000,
        make_x=lambda rng, n, p: rng.uniform(0.0, 1.0, size=(n, 1)),
        draw_y=lambda rng, X, p: rng.gamma(
            1.0, np.exp(2.0 + X[:, 0] - X[:, 0] ** 2)
        ),
        assumed=lambda p: ModelSpec("gamma", "inverse", _terms(1)),
        observed=_obs_all(1, names=("x",)),
    )
)


def _sc10_make_x(rng, n, params):
    cov = np.full((3, 3), 0.2)
    np.fill_diagonal(cov, 1.0)
    L = np.linalg.cholesky(cov)
    vxx = rng.standard_normal((n, 3)) @ L.T
    v, x2, x3 = vxx[:, 0], vxx[:, 1], vxx[:, 2]
    # lognormal moments in closed form
    x1 = (np.exp(v) - np.exp(0.5)) / np.sqrt((np.e - 1.0) * np.e)
    return np.column_stack([x1, x2, x3])


def _sc10_draw(rng, X, params):
    eps_scale = np.where(rng.random(X.shape[0]) < 0.9, 1.0, 2.0)
    eps_mean = np.where(eps_scale == 1.0, -1.0 / 9.0, 1.0)
    eps = eps_mean + eps_scale * rng.standard_normal(X.shape[0])
    return X[:, 0] + X[:, 1] + X[:, 2] + 0.5 * X[:, 0] * X[:, 1] + eps


_register(
    ScenarioDef(
        id="SC10",
        default_n=2000,
        make_x=_sc10_make_x,
        draw_y=_sc10_draw,
        assumed=lambda p: ModelSpec("gaussian", "identity", _terms(3)),
        observed=_obs_all(3),
    )
)


def _sc11_assumed(params):
    return ModelSpec(
        "gaussian", "identity", (Term("raw", 0), Term("power", 0, power=2))
    )


_register(
    ScenarioDef(
        id="SC11",
        default_n=2000,
        make_x=lambda rng, n, p: rng.uniform(0.0, 1.0, size=(n, 1)),
        draw_y=lambda rng, X, p: (
            1.0
            + X[:, 0]
            + X[:, 0] ** 2
            + (X[:, 0] - 0.5) ** 2 * rng.standard_normal(X.shape[0])
        ),
        assumed=_sc11_assumed,
        observed=_obs_all(1, names=("x",)),
    )
)


def _sc12_draw(rng, X, params):
    x, u = X[:, 0], X[:, 1]
    eps = rng.standard_normal(X.shape[0])
    return np.where(u == 0.0, -2.0 + 2.0 * x, -2.0 - 2.0 * x) + eps


_register(
    ScenarioDef(
        id="SC12",
        default_n=2000,
        make_x=lambda rng, n, p: np.column_stack(
            [rng.standard_normal(n), (rng.random(n) < 0.5).astype(float)]
        ),
        draw_y=_sc12_draw,
        assumed=lambda p: ModelSpec("gaussian", "identity", _terms(2)),
        observed=lambda p: ([0, 1], ("continuous", "categorical"), ("x", "u")),
    )
)


def _irregular_index(x):
    return np.sin(2.0 * x - 1.0) + 0.1 * np.exp(x) + 0.5 * x**3


_register(
    ScenarioDef(
        id="CaseI",
        default_n=2000,
        make_x=_sc1_make_x,
        draw_y=lambda rng, X, p: (
            rng.random(X.shape[0]) < ndtr(_irregular_index(X[:, 0]))
        ).astype(float),
        assumed=_binary_probit_spec(1),
        observed=_obs_all(1, names=("x",)),
    )
)

_register(
    ScenarioDef(
        id="CaseII",
        default_n=2000,
        make_x=lambda rng, n, p: rng.uniform(-6.0, 6.0, size=(n, 2)),
        draw_y=lambda rng, X, p: (
            rng.random(X.shape[0])
            < ndtr(
                1.0
                + 2.0 * X[:, 0]
                - 1.5 * X[:, 1]
                + X[:, 0] * X[:, 1]
                - (X[:, 0] - X[:, 1]) ** 2
            )
        ).astype(float),
        assumed=_binary_probit_spec(2),
        observed=_obs_all(2),
    )
)

_register(
    ScenarioDef(
        id="Example1",
        default_n=500,
        make_x=_sc1_make_x,
        draw_y=lambda rng, X, p: (
            rng.random(X.shape[0]) < ndtr(_irregular_index(X[:, 0]))
        ).astype(float),
        assumed=_binary_probit_spec(1),
        observed=_obs_all(1, names=("x",)),
        paper_l=4,
    )
)


# correctly specified homoscedastic linear model; closed-form SE available
_register(
    ScenarioDef(
        id="GaussianCheck",
        default_n=500,
        make_x=lambda rng, n, p: rng.uniform(0.0, 1.0, size=(n, 1)),
        draw_y=lambda rng, X, p: 1.0
        + 2.0 * X[:, 0]
        + 0.5 * rng.standard_normal(X.shape[0]),
        assumed=lambda p: ModelSpec("gaussian", "identity", _terms(1)),
        observed=_obs_all(1, names=("x",)),
    )
)


def case1_candidates() -> tuple:
    """Probit candidates with misspecified predictor sets for CaseI data."""
    return (
        ModelSpec("binomial", "probit", (Term("raw", 0),), label="probit-(x)"),
        ModelSpec(
            "binomial",
            "probit",
            (Term("raw", 0), Term("exp", 0)),
            label="probit-(x,exp(x))",
        ),
        ModelSpec(
            "binomial",
            "probit",
            (Term("raw", 0), Term("power", 0, power=2), Term("power", 0, power=3)),
            label="probit-(x,x^2,x^3)",
        ),
    )


def case2_candidates() -> tuple:
    """Candidates with link/mean misspecification for CaseII data."""
    base = (Term("raw", 0), Term("raw", 1))
    inter = base + (Term("interaction", 0, col2=1),)
    quad = base + (Term("power", 0, power=2),)
    return (
        ModelSpec("binomial", "probit", base, label="probit-(x1,x2)"),
        ModelSpec("binomial", "logit", quad, label="logit-(x1,x2,x1^2)"),
        ModelSpec("binomial", "logit", inter, label="logit-(x1,x2,x1x2)"),
        ModelSpec("binomial", "probit", inter, label="probit-(x1,x2,x1x2)"),
    )


# ---------------------------------------------------------------------------
# generation


def _merged_params(scn: ScenarioDef, params) -> dict:
    merged = dict(scn.defaults)
    if params:
        unknown = set(params) - set(scn.defaults)
        if unknown:
            raise UnknownScenario(
                f"scenario {scn.id} has no parameters {sorted(unknown)}"
            )
        merged.update(params)
    return merged


def _x_stream_key(scn: ScenarioDef, params: dict) -> int:
    relevant = {k: params[k] for k in scn.x_param_names}
    return stable_int(repr(sorted(relevant.items())))


def _frozen_x(scn: ScenarioDef, n: int, seed: int, params: dict) -> np.ndarray:
    rng = substream(stable_int(scn.id), n, seed, 0, _x_stream_key(scn, params))
    return scn.make_x(rng, n, params)


def _draw_response(scn, X_full, n, seed, params, purpose, y_index):
    rng = substream(stable_int(scn.id), n, seed, 1, purpose, y_index)
    return scn.draw_y(rng, X_full, params)


def _dataset_from(scn, X_full, y, params) -> Dataset:
    cols, meta, names = scn.observed(params)
    return make_dataset(y, X_full[:, cols], column_meta=meta, column_names=names)


def generate(
    scenario_id: str,
    n: int | None = None,
    seed: int = 0,
    params: dict | None = None,
    y_index: int = 0,
) -> Dataset:
    """One dataset draw; X is frozen per (scenario, n, seed) and y_index picks
    the response redraw."""
    scn = get_scenario(scenario_id)
    n = n or scn.default_n
    params = _merged_params(scn, params)
    X_full = _frozen_x(scn, n, seed, params)
    y = _draw_response(scn, X_full, n, seed, params, _PURPOSE_ADHOC, y_index)
    return _dataset_from(scn, X_full, y, params)


# ---------------------------------------------------------------------------
# pseudo-truth


@dataclass
class PseudoTruth:
    scenario: str
    n: int
    reps: int
    seed: int
    params: dict
    coef_names: tuple
    beta_dagger: np.ndarray  # standardized-design scale
    psi: np.ndarray
    beta_dagger_raw: np.ndarray
    psi_raw: np.ndarray
    n_failed: int
    first_slope: int

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "params": self.params,
            "coef_names": list(self.coef_names),
            "beta_dagger": [float(v) for v in self.beta_dagger],
            "psi": [float(v) for v in self.psi],
            "beta_dagger_raw": [float(v) for v in self.beta_dagger_raw],
            "psi_raw": [float(v) for v in self.psi_raw],
            "n_failed": self.n_failed,
            "first_slope": self.first_slope,
        }


def _cache_key(scenario_id, n, reps, seed, params) -> str:
    return f"{scenario_id}|n={n}|reps={reps}|seed={seed}|params={sorted(params.items())}"


def _raw_coefs(fit: FitResult) -> np.ndarray:
    """Coefficients on the raw predictor scale (cutpoints shifted for ordinal)."""
    design = fit.design
    if fit.alpha_hat is None:
        return back_transform(fit.coef.copy(), design)
    shift = float(np.sum(fit.beta_hat * design.means / design.sds))
    return np.concatenate([fit.alpha_hat + shift, fit.beta_hat / design.sds])


def pseudo_truth(
    scenario_id: str,
    n: int | None = None,
    reps: int = 10_000,
    seed: int = 0,
    params: dict | None = None,
    cache_path=None,
    options: FitOptions | None = None,
) -> PseudoTruth:
    """Monte Carlo pseudo-true parameter (mean of QMLE fits over response
    redraws on frozen X) and pseudo-true SE (divisor-reps standard deviation)."""
    scn = get_scenario(scenario_id)
    n = n or scn.default_n
    merged = _merged_params(scn, params)
    key = _cache_key(scenario_id, n, reps, seed, merged)
    if cache_path and os.path.exists(cache_path):
        with open(cache_path) as fh:
            cache = json.load(fh)
        if key in cache:
            d = cache[key]
            return PseudoTruth(
                scenario=scenario_id,
                n=n,
                reps=reps,
                seed=seed,
                params=merged,
                coef_names=tuple(d["coef_names"]),
                beta_dagger=np.array(d["beta_dagger"]),
                psi=np.array(d["psi"]),
                beta_dagger_raw=np.array(d["beta_dagger_raw"]),
                psi_raw=np.array(d["psi_raw"]),
                n_failed=d["n_failed"],
                first_slope=d["first_slope"],
            )
    if reps < 100:
        raise TooManyFailures("pseudo_truth needs reps >= 100")
    X_full = _frozen_x(scn, n, seed, merged)
    spec = scn.assumed(merged)
    y0 = _draw_response(scn, X_full, n, seed, merged, _PURPOSE_PSEUDO, 0)
    ds0 = _dataset_from(scn, X_full, y0, merged)
    design = build_design(ds0, spec)
    fam = None if spec.is_ordinal else get_family(spec.family, spec.link)
    coefs, coefs_raw = [], []
    n_failed = 0
    first_slope = None
    for r in range(reps):
        y = _draw_response(scn, X_full, n, seed, merged, _PURPOSE_PSEUDO, r)
        ds = ds0.with_response(y)
        try:
            if spec.is_ordinal:
                fit = fit_ordinal(ds, spec, options, design=design)
            else:
                fit = fit_qmle(ds, spec, options, design=design)
        except Exception as exc:
            from .errors import FitError

            if isinstance(exc, FitError):
                n_failed += 1
                if n_failed > 0.05 * reps:
                    raise TooManyFailures(
                        f"{n_failed} pseudo-truth fits failed out of {r + 1}"
                    ) from exc
                continue
            raise
        first_slope = fit.first_slope
        coefs.append(fit.coef)
        coefs_raw.append(_raw_coefs(fit))
    coefs = np.vstack(coefs)
    coefs_raw = np.vstack(coefs_raw)
    truth = PseudoTruth(
        scenario=scenario_id,
        n=n,
        reps=reps,
        seed=seed,
        params=merged,
        coef_names=tuple(
            fit.coef_names
        ),
        beta_dagger=coefs.mean(axis=0),
        psi=coefs.std(axis=0, ddof=0),
        beta_dagger_raw=coefs_raw.mean(axis=0),
        psi_raw=coefs_raw.std(axis=0, ddof=0),
        n_failed=n_failed,
        first_slope=first_slope,
    )
    if cache_path:
        cache = {}
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                cache = json.load(fh)
        cache[key] = truth.to_json_dict()
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(cache_path)))
        with os.fdopen(fd, "w") as fh:
            json.dump(cache, fh, indent=2, sort_keys=True)
        os.replace(tmp, cache_path)
    return truth


# ---------------------------------------------------------------------------
# coverage / ratio experiments


@dataclass
class MethodStats:
    label: str
    se_hats: np.ndarray  # per replication, target coefficient
    coverage: dict  # (ci_type, level) -> rate
    width_mean: dict  # (ci_type, level) -> mean width
    width_se: dict  # (ci_type, level) -> SE of the mean width
    n_failed_total: int
    psi: float

    @property
    def mean_se(self) -> float:
        return float(self.se_hats.mean())

    @property
    def se_ratio(self) -> float:
        """mean(se_hat) / psi; identical to the mean of per-replication ratios."""
        return self.mean_se / self.psi

    @property
    def mean_of_ratios(self) -> float:
        return float((self.se_hats / self.psi).mean())


@dataclass
class ExperimentReport:
    scenario: str
    n: int
    B: int
    replications: int
    levels: tuple
    seed: int
    target_name: str
    psi: float
    beta_dagger_target: float
    methods: dict  # label -> MethodStats


def run_experiment(
    scenario_id: str,
    methods: list,
    truth: PseudoTruth,
    B: int = 500,
    replications: int = 100,
    levels: tuple = (0.95, 0.90, 0.75),
    seed: int = 0,
    params: dict | None = None,
    n_threads: int = 1,
    options: FitOptions | None = None,
) -> ExperimentReport:
    """Coverage and SE-ratio experiment on the frozen design of `truth`.

    Per replication: a fresh response draw, one fit, one BootstrapOutcome per
    method; CI hits of the pseudo-true target coefficient and widths are
    recorded per level for both the normal and percentile intervals.
    """
    scn = get_scenario(scenario_id)
    n = truth.n
    merged = _merged_params(scn, params)
    if merged != truth.params:
        raise UnknownScenario("params do not match the pseudo-truth object")
    spec = scn.assumed(merged)
    X_full = _frozen_x(scn, n, truth.seed, merged)
    y0 = _draw_response(scn, X_full, n, truth.seed, merged, _PURPOSE_EXPERIMENT, 0)
    ds0 = _dataset_from(scn, X_full, y0, merged)
    design = build_design(ds0, spec)
    t = truth.first_slope
    beta_target = float(truth.beta_dagger[t])
    psi_target = float(truth.psi[t])

    nb_cache: dict[int, object] = {}

    def neighborhoods_for(method):
        if method.kind not in ("lrb", "local_response"):
            return None
        if method.l not in nb_cache:
            nb_cache[method.l] = build_neighborhoods(ds0, method.l)
        return nb_cache[method.l]

    labels = [m.label for m in methods]
    se_hats = {lab: [] for lab in labels}
    hits = {lab: {} for lab in labels}
    widths = {lab: {} for lab in labels}
    failed = dict.fromkeys(labels, 0)
    for lab in labels:
        for level in levels:
            for ci in ("nor", "per"):
                hits[lab][(ci, level)] = []
                widths[lab][(ci, level)] = []

    for r in range(replications):
        y = _draw_response(scn, X_full, n, truth.seed, merged, _PURPOSE_EXPERIMENT, r)
        ds = ds0.with_response(y)
        if spec.is_ordinal:
            fit = fit_ordinal(ds, spec, options, design=design)
        else:
            fit = fit_qmle(ds, spec, options, design=design)
        for method in methods:
            lab = method.label
            out = run(
                ds,
                spec,
                method,
                B,
                seed=derive_seed(seed, r, lab),
                fit=fit,
                neighborhoods=neighborhoods_for(method),
                n_threads=n_threads,
                options=options,
            )
            se_t = float(out.se_hat[t])
            se_hats[lab].append(se_t)
            failed[lab] += out.n_failed
            est = float(out.estimate[t])
            for level in levels:
                z = ndtri(0.5 + level / 2.0)
                lo, hi = est - z * se_t, est + z * se_t
                hits[lab][("nor", level)].append(lo <= beta_target <= hi)
                widths[lab][("nor", level)].append(hi - lo)
                per = ci_percentile(out.replicates[:, [t]], 1.0 - level)[0]
                hits[lab][("per", level)].append(per[0] <= beta_target <= per[1])
                widths[lab][("per", level)].append(per[1] - per[0])

    stats = {}
    for lab in labels:
        coverage, wmean, wse = {}, {}, {}
        for keypair in hits[lab]:
            hv = np.array(hits[lab][keypair], dtype=float)
            wv = np.array(widths[lab][keypair], dtype=float)
            coverage[keypair] = float(hv.mean())
            wmean[keypair] = float(wv.mean())
            wse[keypair] = float(wv.std(ddof=1) / np.sqrt(len(wv)))
        stats[lab] = MethodStats(
            label=lab,
            se_hats=np.array(se_hats[lab]),
            coverage=coverage,
            width_mean=wmean,
            width_se=wse,
            n_failed_total=failed[lab],
            psi=psi_target,
        )
    return ExperimentReport(
        scenario=scenario_id,
        n=n,
        B=B,
        replications=replications,
        levels=tuple(levels),
        seed=seed,
        target_name=truth.coef_names[t],
        psi=psi_target,
        beta_dagger_target=beta_target,
        methods=stats,
    )


def report_to_csv(report: ExperimentReport, path, extra: dict | None = None) -> None:
    """Coverage/width table, one row per method x CI type x level; `extra`
    adds constant provenance columns (seed, tool version, ...)."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "scenario", "n", "B", "replications", "seed", "target", "method",
                "ci_type", "level", "coverage", "width", "width_se",
                "mean_se_hat", "psi", "se_ratio",
            ]
            + list(extra)
        )
        for lab, st in report.methods.items():
            for ci in ("nor", "per"):
                for level in report.levels:
                    w.writerow(
                        [
                            report.scenario, report.n, report.B,
                            report.replications, report.seed,
                            report.target_name, lab,
                            ci, level,
                            repr(st.coverage[(ci, level)]),
                            repr(st.width_mean[(ci, level)]),
                            repr(st.width_se[(ci, level)]),
                            repr(st.mean_se), repr(st.psi), repr(st.se_ratio),
                        ]
                        + [extra[k] for k in extra]
                    )


def sweep_param(
    scenario_id: str,
    param_name: str,
    values,
    methods: list,
    n: int | None = None,
    B: int = 200,
    replications: int = 30,
    reps_truth: int = 3000,
    seed: int = 0,
    n_threads: int = 1,
) -> dict:
    """SE ratios as a function of one generator parameter (misspecification
    sweeps); returns {value: {method label: ratio}}."""
    out = {}
    for v in values:
        params = {param_name: v}
        truth = pseudo_truth(
            scenario_id, n=n, reps=reps_truth, seed=seed, params=params
        )
        report = run_experiment(
            scenario_id,
            methods,
            truth,
            B=B,
            replications=replications,
            levels=(0.95,),
            seed=derive_seed(seed, repr(v)),
            params=params,
            n_threads=n_threads,
        )
        out[v] = {lab: st.se_ratio for lab, st in report.methods.items()}
    return out


def sweep_to_csv(sweep: dict, param_name: str, path) -> None:
    labels = sorted(next(iter(sweep.values())))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([param_name] + labels)
        for v, ratios in sweep.items():
            w.writerow([v] + [repr(ratios[lab]) for lab in labels])


# ---------------------------------------------------------------------------
# residual-distribution property (bootstrap validity at desk scale)


def theorem1_ks(
    scenario_id: str,
    truth: PseudoTruth,
    l: int,
    rep: int = 0,
    seed: int = 0,
) -> float:
    """Two-sample KS distance between one round of locally resampled
    surrogate residuals and surrogate residuals drawn under the pseudo-true
    parameters (fresh response from the true process)."""
    scn = get_scenario(scenario_id)
    merged = truth.params
    n = truth.n
    X_full = _frozen_x(scn, n, truth.seed, merged)
    spec = scn.assumed(merged)
    y = _draw_response(scn, X_full, n, truth.seed, merged, _PURPOSE_ADHOC, 1000 + rep)
    ds = _dataset_from(scn, X_full, y, merged)
    fit = fit_qmle(ds, spec)
    r_hat = surrogate_values(fit, ds.y, substream(seed, rep, 0))
    nb = build_neighborhoods(ds, l)
    mat = nb.as_matrix()
    k = substream(seed, rep, 1).integers(0, l, size=n)
    r_star = r_hat[mat[np.arange(n), k]]

    # oracle side: fresh truth draw, surrogate at the pseudo-true coefficients
    y_dagger = _draw_response(
        scn, X_full, n, truth.seed, merged, _PURPOSE_ADHOC, 2000 + rep
    )
    fit_dagger = FitResult(
        beta_hat=truth.beta_dagger.copy(),
        alpha_hat=None,
        mu_hat=fit.mu_hat,
        var_hat=fit.var_hat,
        loglik=0.0,
        iterations=0,
        converged=True,
        grad_norm=0.0,
        spec=spec,
        design=fit.design,
    )
    r_dagger = surrogate_values(fit_dagger, y_dagger, substream(seed, rep, 2))
    return float(ks_2samp(r_star, r_dagger).statistic)
