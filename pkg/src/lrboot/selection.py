"""Bootstrap model selection: in-sample average loss, out-of-sample
prediction error with optimism correction, candidate ranking, and the CR1/CR2
rank-accuracy scores."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bootstrap import BootstrapMethod, run
from .data import Dataset, ModelSpec
from .errors import (
    LengthMismatch,
    MethodCannotRecreate,
    NotAPermutation,
    UnsupportedKind,
)
from .glm import FitResult, fit_qmle, get_family
from .neighborhood import build_neighborhoods
from .rng import derive_seed

__all__ = [
    "CandidateSet",
    "SelectionReport",
    "in_sample_loss",
    "prediction_error",
    "loss_from_replicates",
    "prediction_error_from_replicates",
    "rank_models",
    "cr1",
    "cr2",
]


@dataclass(frozen=True)
class CandidateSet:
    models: tuple
    data: Dataset
    method: BootstrapMethod
    B: int

    def __post_init__(self):
        if len(self.models) < 2:
            raise UnsupportedKind("need at least two candidate models")
        labels = [m.display() for m in self.models]
        if len(set(labels)) != len(labels):
            raise UnsupportedKind(f"candidate labels must be distinct: {labels}")


@dataclass
class SelectionReport:
    criterion: str  # "L" or "Gamma"
    labels: tuple
    values: np.ndarray
    ranks: np.ndarray  # permutation of 1..M, rank 1 = smallest value
    chosen: str
    provenance: dict

    def to_json_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "labels": list(self.labels),
            "values": [float(v) for v in self.values],
            "ranks": [int(r) for r in self.ranks],
            "chosen": self.chosen,
            "provenance": self.provenance,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)

    def to_table(self) -> str:
        head = f"{'model':<32} {self.criterion:>12} {'rank':>5} {'chosen':>7}"
        lines = [head, "-" * len(head)]
        for label, v, r in zip(self.labels, self.values, self.ranks):
            mark = "*" if label == self.chosen else ""
            lines.append(f"{label:<32} {v:>12.6f} {int(r):>5} {mark:>7}")
        return "\n".join(lines)


def _check_scalar_family(spec: ModelSpec) -> None:
    if spec.is_ordinal:
        raise UnsupportedKind(
            "ordinal models have no scalar mean/variance; selection criteria "
            "require a mean-variance representable family"
        )


def loss_from_replicates(
    data: Dataset, fit: FitResult, betas: np.ndarray
) -> float:
    """Monte Carlo in-sample average loss given replicate coefficients."""
    _check_scalar_family(fit.spec)
    family = get_family(fit.spec.family, fit.spec.link)
    Xd = fit.design.matrix
    mu_star = family.mean(Xd @ np.atleast_2d(betas).T)  # n x B
    denom = data.n * fit.var_hat
    losses = ((data.y[:, None] - mu_star) ** 2 / denom[:, None]).sum(axis=0)
    return float(losses.mean())


def prediction_error_from_replicates(
    data: Dataset, fit: FitResult, betas: np.ndarray, ystars: np.ndarray
) -> float:
    """Three-term optimism-corrected prediction error given replicates."""
    _check_scalar_family(fit.spec)
    family = get_family(fit.spec.family, fit.spec.link)
    Xd = fit.design.matrix
    n = data.n
    betas = np.atleast_2d(betas)
    mu_star = family.mean(Xd @ betas.T)  # n x B
    denom_hat = n * fit.var_hat
    term1 = float(((data.y - fit.mu_hat) ** 2 / denom_hat).sum())
    term2 = ((data.y[:, None] - mu_star) ** 2 / denom_hat[:, None]).sum(axis=0)
    var_star = family.variance(mu_star)
    term3 = ((ystars.T - mu_star) ** 2 / (n * var_star)).sum(axis=0)
    return float(np.mean(term1 + term2 - term3))


def in_sample_loss(
    data: Dataset,
    spec: ModelSpec,
    method: BootstrapMethod,
    B: int,
    seed: int = 0,
    *,
    fit: FitResult | None = None,
    neighborhoods=None,
    n_threads: int = 1,
    options=None,
) -> float:
    """Bootstrap estimate of the in-sample average loss.

    Any bootstrap method qualifies: only the replicate coefficients enter.
    """
    _check_scalar_family(spec)
    fit = fit or fit_qmle(data, spec, options)
    out = run(
        data, spec, method, B, seed=seed,
        fit=fit, neighborhoods=neighborhoods, n_threads=n_threads, options=options,
    )
    return loss_from_replicates(data, fit, out.replicates)


def prediction_error(
    data: Dataset,
    spec: ModelSpec,
    method: BootstrapMethod,
    B: int,
    seed: int = 0,
    *,
    fit: FitResult | None = None,
    neighborhoods=None,
    n_threads: int = 1,
    options=None,
) -> float:
    """Bootstrap estimate of the out-of-sample prediction error.

    Needs recreated responses, so only response-regenerating methods qualify;
    terms 2 and 3 use the same replicate's (y*, beta*) in a single pass.
    """
    _check_scalar_family(spec)
    if not method.recreates_responses:
        raise MethodCannotRecreate(
            f"{method.label} does not recreate responses; "
            "the prediction-error criterion requires y*"
        )
    fit = fit or fit_qmle(data, spec, options)
    out = run(
        data, spec, method, B, seed=seed,
        fit=fit, neighborhoods=neighborhoods, n_threads=n_threads,
        options=options, keep_responses=True,
    )
    return prediction_error_from_replicates(data, fit, out.replicates, out.responses)


def assign_ranks(values, labels) -> np.ndarray:
    """Ascending ranks (1 = smallest); exact ties broken by label order."""
    values = np.asarray(values, dtype=float)
    order = sorted(range(len(labels)), key=lambda i: (values[i], labels[i]))
    ranks = np.empty(len(labels), dtype=int)
    for pos, i in enumerate(order, start=1):
        ranks[i] = pos
    return ranks


def rank_models(
    cands: CandidateSet,
    criterion: str,
    seed: int = 0,
    *,
    n_threads: int = 1,
    options=None,
) -> SelectionReport:
    """Evaluate the criterion per model (substream keyed by label, so the
    result is invariant to model order) and rank ascending, ties by label."""
    if criterion not in ("L", "Gamma"):
        raise UnsupportedKind(f"criterion must be 'L' or 'Gamma', got {criterion!r}")
    evaluate = in_sample_loss if criterion == "L" else prediction_error
    data, method = cands.data, cands.method
    neighborhoods = None
    if method.kind in ("lrb", "local_response"):
        neighborhoods = build_neighborhoods(data, method.l)
    labels, values = [], []
    for spec in cands.models:
        label = spec.display()
        labels.append(label)
        values.append(
            evaluate(
                data,
                spec,
                method,
                cands.B,
                seed=derive_seed(seed, label),
                neighborhoods=neighborhoods,
                n_threads=n_threads,
                options=options,
            )
        )
    values = np.asarray(values)
    ranks = assign_ranks(values, labels)
    chosen = labels[int(np.argmin(ranks))]
    return SelectionReport(
        criterion=criterion,
        labels=tuple(labels),
        values=values,
        ranks=ranks,
        chosen=chosen,
        provenance={
            "method": method.label,
            "l": method.l,
            "B": cands.B,
            "seed": seed,
        },
    )


def _check_ranks(true_ranks, est_ranks):
    t = np.asarray(true_ranks, dtype=int)
    e = np.asarray(est_ranks, dtype=int)
    if t.shape != e.shape:
        raise LengthMismatch("rank vectors differ in length")
    want = set(range(1, t.shape[0] + 1))
    if set(t.tolist()) != want or set(e.tolist()) != want:
        raise NotAPermutation("rank vectors must each be a permutation of 1..M")
    return t, e


def cr1(true_ranks, est_ranks) -> float:
    """Share of models whose rank is exactly recovered."""
    t, e = _check_ranks(true_ranks, est_ranks)
    return float(np.mean(t == e))


def cr2(true_ranks, est_ranks) -> float:
    """Share of ordered pairs whose relative order is recovered (C-index style)."""
    t, e = _check_ranks(true_ranks, est_ranks)
    m = t.shape[0]
    agree = 0
    for i in range(m):
        for j in range(m):
            if i != j and (t[i] - t[j]) * (e[i] - e[j]) > 0:
                agree += 1
    return agree / (m * (m - 1))
