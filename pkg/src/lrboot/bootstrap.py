"""Bootstrap engines: local residual bootstrap, local response bootstrap,
classical residual bootstrap, and the parametric/pairwise/wild/multiplier
comparison methods.

Replicate b always consumes the substream (seed, b) with per-observation
draws in observation order, so outcomes are bit-identical regardless of how
many worker threads execute the replicates.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import residuals as res
from .data import Dataset, ModelSpec
from .errors import (
    FitError,
    IncompatibleResidual,
    InvalidSize,
    TooFewReplicates,
    TooManyFailures,
    UnsupportedKind,
)
from .glm import (
    FitOptions,
    FitResult,
    fit_design,
    fit_ordinal,
    fit_ordinal_design,
    fit_qmle,
    get_family,
)
from .neighborhood import NeighborhoodMap, build_neighborhoods
from .rng import substream

__all__ = [
    "BootstrapMethod",
    "BootstrapOutcome",
    "run",
    "se_estimate",
    "ci_percentile",
    "p_value",
]

METHOD_KINDS = (
    "lrb",
    "local_response",
    "classical_residual",
    "parametric",
    "pairwise",
    "wild",
    "multiplier",
)

# methods whose replicates regenerate the response vector
RESPONSE_RECREATING = ("lrb", "local_response", "classical_residual", "parametric")

_FAILURE_SHARE = 0.2


@dataclass(frozen=True)
class BootstrapMethod:
    kind: str
    residual_kind: str | None = None
    l: int | None = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise UnsupportedKind(f"unknown bootstrap method {self.kind!r}")

    @classmethod
    def lrb(cls, residual_kind: str, l: int) -> "BootstrapMethod":
        return cls("lrb", residual_kind=residual_kind, l=int(l))

    @classmethod
    def local_response(cls, l: int) -> "BootstrapMethod":
        return cls("local_response", l=int(l))

    @classmethod
    def classical_residual(cls, residual_kind: str) -> "BootstrapMethod":
        return cls("classical_residual", residual_kind=residual_kind)

    @classmethod
    def parametric(cls) -> "BootstrapMethod":
        return cls("parametric")

    @classmethod
    def pairwise(cls) -> "BootstrapMethod":
        return cls("pairwise")

    @classmethod
    def wild(cls) -> "BootstrapMethod":
        return cls("wild")

    @classmethod
    def multiplier(cls) -> "BootstrapMethod":
        return cls("multiplier")

    @property
    def recreates_responses(self) -> bool:
        return self.kind in RESPONSE_RECREATING

    @property
    def label(self) -> str:
        if self.kind in ("lrb", "classical_residual"):
            prefix = "lrb" if self.kind == "lrb" else "classical"
            return f"{prefix}-{self.residual_kind}"
        return self.kind.replace("_", "-")


@dataclass
class BootstrapOutcome:
    replicates: np.ndarray  # successful replicates only, B' x q
    se_hat: np.ndarray
    ci_normal: np.ndarray  # q x 2
    ci_percentile: np.ndarray  # q x 2
    n_failed: int
    estimate: np.ndarray
    coef_names: tuple
    alpha: float
    provenance: dict
    responses: np.ndarray | None = None  # recreated y*, aligned with replicates

    def to_json_dict(self, include_replicates: bool = True) -> dict:
        out = {
            "estimate": [float(v) for v in self.estimate],
            "coef_names": list(self.coef_names),
            "se_hat": [float(v) for v in self.se_hat],
            "ci_normal": [[float(a), float(b)] for a, b in self.ci_normal],
            "ci_percentile": [[float(a), float(b)] for a, b in self.ci_percentile],
            "alpha": self.alpha,
            "n_failed": self.n_failed,
            "provenance": self.provenance,
        }
        if include_replicates:
            out["replicates"] = [[float(v) for v in row] for row in self.replicates]
        return out

    def summary_rows(self) -> list:
        """(coefficient, estimate, se, ci_nor, ci_per, two-sided p vs 0) rows."""
        rows = []
        for j, name in enumerate(self.coef_names):
            rows.append(
                {
                    "coefficient": name,
                    "estimate": float(self.estimate[j]),
                    "se_hat": float(self.se_hat[j]),
                    "ci_nor_lo": float(self.ci_normal[j, 0]),
                    "ci_nor_hi": float(self.ci_normal[j, 1]),
                    "ci_per_lo": float(self.ci_percentile[j, 0]),
                    "ci_per_hi": float(self.ci_percentile[j, 1]),
                    "p_two_sided": float(
                        p_value(self.replicates[:, j], 0.0, "two_sided")
                    ),
                }
            )
        return rows


def se_estimate(replicates: np.ndarray) -> np.ndarray:
    """Divisor-B standard deviation per coefficient column."""
    replicates = np.atleast_2d(np.asarray(replicates, dtype=float))
    if replicates.shape[0] < 2:
        raise TooFewReplicates("need at least 2 bootstrap replicates")
    # shifting by a row is a mathematical no-op that keeps constant columns
    # at exactly zero (the plain mean can round an ulp away)
    return (replicates - replicates[0]).std(axis=0, ddof=0)


def ci_percentile(replicates: np.ndarray, alpha: float) -> np.ndarray:
    """Type-7 (linear interpolation) empirical alpha/2 and 1-alpha/2 quantiles."""
    replicates = np.atleast_2d(np.asarray(replicates, dtype=float))
    if replicates.shape[0] < 2:
        raise TooFewReplicates("need at least 2 bootstrap replicates")
    lo = np.quantile(replicates, alpha / 2.0, axis=0, method="linear")
    hi = np.quantile(replicates, 1.0 - alpha / 2.0, axis=0, method="linear")
    return np.column_stack([lo, hi])


def p_value(replicates: np.ndarray, null_value: float, alternative: str = "two_sided"):
    """Bootstrap p-value by percentile-interval duality."""
    r = np.asarray(replicates, dtype=float).ravel()
    if r.shape[0] < 2:
        raise TooFewReplicates("need at least 2 bootstrap replicates")
    mass_le = float(np.mean(r <= null_value))
    mass_ge = float(np.mean(r >= null_value))
    if alternative == "greater":
        return mass_le
    if alternative == "less":
        return mass_ge
    if alternative == "two_sided":
        return min(1.0, 2.0 * min(mass_le, mass_ge))
    raise UnsupportedKind(f"unknown alternative {alternative!r}")


def _validate(data: Dataset, spec: ModelSpec, method: BootstrapMethod) -> None:
    fam = spec.family
    if method.kind in ("lrb", "classical_residual"):
        kind = method.residual_kind
        if kind is None:
            raise IncompatibleResidual(f"{method.kind} needs a residual kind")
        if kind not in res.RECREATABLE_KINDS:
            raise IncompatibleResidual(f"{kind} residuals cannot recreate responses")
        if not res.supports(fam, kind):
            raise IncompatibleResidual(
                f"{kind} residuals are not defined for {fam} models"
            )
    if method.kind in ("lrb", "local_response"):
        if method.l is None or not 1 <= method.l <= data.n:
            raise InvalidSize(f"neighborhood size must lie in [1, {data.n}]")
    if method.kind == "wild" and spec.is_ordinal:
        raise IncompatibleResidual("wild bootstrap is not defined for ordinal models")


def _refit(Xd, y_star, fit: FitResult, options, phi0) -> np.ndarray:
    if fit.spec.is_ordinal:
        alpha, beta, *_ = fit_ordinal_design(
            Xd, y_star, fit.spec.n_categories, options, phi0=phi0
        )
        return np.concatenate([alpha, beta])
    family = get_family(fit.spec.family, fit.spec.link)
    beta, *_ = fit_design(
        Xd, y_star, family, options, check_rank=False, beta0=fit.beta_hat
    )
    return beta


def _draw_indices(rng, nb_matrix, nb_sets, lengths, n):
    """One neighbor pick per observation, consuming the stream in obs order."""
    if nb_matrix is not None:
        k = rng.integers(0, nb_matrix.shape[1], size=n)
        return nb_matrix[np.arange(n), k]
    u = rng.random(n)
    k = np.floor(u * lengths).astype(int)
    return np.array([nb_sets[i][k[i]] for i in range(n)])


def run(
    data: Dataset,
    spec: ModelSpec,
    method: BootstrapMethod,
    B: int,
    alpha: float = 0.05,
    seed: int = 0,
    *,
    n_threads: int = 1,
    fit: FitResult | None = None,
    neighborhoods: NeighborhoodMap | None = None,
    options: FitOptions | None = None,
    keep_responses: bool = False,
) -> BootstrapOutcome:
    """Run B bootstrap replicates and assemble SE/CI estimates.

    Failed replicate fits are dropped and counted; more than 20% failures
    aborts. Identical inputs give bit-identical outcomes for any n_threads.
    """
    _validate(data, spec, method)
    if fit is None:
        fit = fit_ordinal(data, spec, options) if spec.is_ordinal else fit_qmle(
            data, spec, options
        )
    Xd = fit.design.matrix
    n = data.n
    y = data.y
    family = None if spec.is_ordinal else get_family(spec.family, spec.link)

    # method-specific, replicate-independent preparation
    pool = None
    nb_matrix = None
    nb_sets = None
    lengths = None
    dispersion = None
    wild_resid = None
    if method.kind in ("lrb", "classical_residual"):
        rkind = method.residual_kind
        rng0 = substream(seed, 0)
        pool = res.compute(fit, data, rkind, rng=rng0).values
    if method.kind in ("lrb", "local_response"):
        nb = neighborhoods if neighborhoods is not None else build_neighborhoods(
            data, method.l
        )
        nb_matrix = nb.as_matrix()
        if nb_matrix is None:
            nb_sets = nb.sets
            lengths = np.array([len(s) for s in nb.sets], dtype=float)
    if method.kind == "parametric":
        if spec.family == "gaussian":
            dof = max(n - fit.design.q, 1)
            dispersion = float(np.sum((y - fit.mu_hat) ** 2) / dof)
        elif spec.family == "gamma":
            dof = max(n - fit.design.q, 1)
            pr = (y - fit.mu_hat) / np.sqrt(fit.var_hat)
            dispersion = float(np.sum(pr**2) / dof)
        if spec.is_ordinal:
            dispersion = None
            param_cum = np.cumsum(fit.mu_hat, axis=1)
    if method.kind == "wild":
        wild_resid = y - fit.mu_hat

    def make_response(rng) -> np.ndarray:
        if method.kind == "lrb":
            idx = _draw_indices(rng, nb_matrix, nb_sets, lengths, n)
            return res.recreate(fit, data, pool[idx], method.residual_kind)
        if method.kind == "classical_residual":
            idx = rng.integers(0, n, size=n)
            return res.recreate(fit, data, pool[idx], method.residual_kind)
        if method.kind == "local_response":
            idx = _draw_indices(rng, nb_matrix, nb_sets, lengths, n)
            return y[idx]
        if method.kind == "parametric":
            if spec.is_ordinal:
                u = rng.random(n)
                codes = 1 + (u[:, None] > param_cum).sum(axis=1)
                return codes.astype(float)
            return family.simulate(rng, fit.mu_hat, dispersion)
        if method.kind == "wild":
            w = rng.integers(0, 2, size=n) * 2.0 - 1.0
            return family.clamp_response(fit.mu_hat + w * wild_resid)
        raise UnsupportedKind(method.kind)

    phi0 = None
    if spec.is_ordinal:
        from .glm import _ordinal_pack

        phi0 = _ordinal_pack(fit.alpha_hat, fit.beta_hat)

    def replicate(b: int):
        rng = substream(seed, b)
        try:
            if method.kind == "pairwise":
                rows = rng.integers(0, n, size=n)
                if spec.is_ordinal:
                    a, bet, *_ = fit_ordinal_design(
                        Xd[rows], y[rows], spec.n_categories, options, phi0=phi0
                    )
                    return np.concatenate([a, bet]), None
                beta, *_ = fit_design(
                    Xd[rows], y[rows], family, options,
                    check_rank=False, beta0=fit.beta_hat,
                )
                return beta, None
            if method.kind == "multiplier":
                w = rng.standard_exponential(n)
                if spec.is_ordinal:
                    a, bet, *_ = fit_ordinal_design(
                        Xd, y, spec.n_categories, options, weights=w, phi0=phi0
                    )
                    return np.concatenate([a, bet]), None
                beta, *_ = fit_design(
                    Xd, y, family, options, weights=w,
                    check_rank=False, beta0=fit.beta_hat,
                )
                return beta, None
            y_star = make_response(rng)
            return _refit(Xd, y_star, fit, options, phi0), y_star
        except FitError:
            return None, None

    results: list = [None] * B
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as ex:
            for b, out in zip(range(1, B + 1), ex.map(replicate, range(1, B + 1))):
                results[b - 1] = out
    else:
        for b in range(1, B + 1):
            results[b - 1] = replicate(b)

    coefs = [r[0] for r in results if r[0] is not None]
    n_failed = B - len(coefs)
    if n_failed > _FAILURE_SHARE * B:
        raise TooManyFailures(
            f"{n_failed}/{B} replicate fits failed "
            f"(method={method.label}, family={spec.family})"
        )
    replicates = np.vstack(coefs)
    responses = None
    if keep_responses:
        if not method.recreates_responses:
            raise UnsupportedKind(
                f"{method.label} does not recreate responses; none to keep"
            )
        responses = np.vstack([r[1] for r in results if r[0] is not None])

    estimate = fit.coef
    se = se_estimate(replicates)
    z = ndtri(1.0 - alpha / 2.0)
    ci_nor = np.column_stack([estimate - z * se, estimate + z * se])
    ci_per = ci_percentile(replicates, alpha)
    provenance = {
        "method": method.kind,
        "residual_kind": method.residual_kind,
        "l": method.l,
        "B": B,
        "alpha": alpha,
        "seed": seed,
        "first_slope": fit.first_slope,
    }
    return BootstrapOutcome(
        replicates=replicates,
        se_hat=se,
        ci_normal=ci_nor,
        ci_percentile=ci_per,
        n_failed=n_failed,
        estimate=estimate,
        coef_names=fit.coef_names,
        alpha=alpha,
        provenance=provenance,
        responses=responses,
    )


def outcome_to_json(outcome: BootstrapOutcome, path, include_replicates=False) -> None:
    with open(path, "w") as fh:
        json.dump(
            outcome.to_json_dict(include_replicates=include_replicates),
            fh,
            indent=2,
            sort_keys=True,
        )
