"""Classifier ensemble: oversampling, pooled posterior draws, uncertainty-zone
label assignment, term importance and density export.

Pooled draws are the concatenation of every member's kept draws, so pooled
quantiles realize the ensemble-averaged predictive distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit, logit
from scipy.stats import gaussian_kde, norm

from .bart import BartConfig, BartModel, fit_bart

__all__ = [
    "Limits", "EnsembleConfig", "PpdSummary", "UncertaintyZone", "EnsembleFit",
    "oversample_positives", "fit_ensemble", "pooled_draws", "summarise_ppd",
    "compute_uncertainty_zone", "assign_labels", "term_importance",
    "export_ppd_density",
]

DENSITY_GRID_SIZE = 512
_FALLBACK_BANDWIDTH = 0.25    # logit scale, for degenerate draw groups


@dataclass
class Limits:
    stop_after: int = 4
    pos_target: int | None = None
    labeling_limit: int | float | None = None

    def __post_init__(self):
        if self.stop_after < 1:
            raise ValueError("stop_after must be >= 1")


@dataclass
class EnsembleConfig:
    n_models: int = 10
    oversample_mult: int = 10
    pred_quantiles: tuple[float, float, float] = (0.01, 0.5, 0.99)
    resample: bool = False
    limits: Limits = field(default_factory=Limits)
    bart: BartConfig = field(default_factory=BartConfig)

    def __post_init__(self):
        if self.n_models < 1:
            raise ValueError("n_models must be >= 1")
        if self.oversample_mult < 1:
            raise ValueError("oversample_mult must be >= 1")
        q = self.pred_quantiles
        if not (0.0 < q[0] < q[1] < q[2] < 1.0):
            raise ValueError("pred_quantiles must be strictly increasing in (0,1)")


@dataclass
class PpdSummary:
    lo: np.ndarray
    med: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if not (np.all(self.lo <= self.med) and np.all(self.med <= self.hi)):
            raise ValueError("quantile summary must satisfy lo <= med <= hi")


@dataclass
class UncertaintyZone:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("zone must be normalized (lower <= upper)")


def oversample_positives(X: np.ndarray, y: np.ndarray,
                         mult: int) -> tuple[np.ndarray, np.ndarray]:
    """Append mult-1 copies of every positive row; negatives untouched."""
    X = np.asarray(X)
    y = np.asarray(y)
    if mult == 1:
        return X.copy(), y.copy()
    pos = np.nonzero(y == 1)[0]
    extra = np.tile(pos, mult - 1)
    return np.vstack([X, X[extra]]), np.concatenate([y, y[extra]])


@dataclass
class EnsembleFit:
    models: list[BartModel]
    config: EnsembleConfig

    def inclusion_rate_matrix(self) -> np.ndarray:
        """(n_models, n_features) inclusion rates per 10,000."""
        return np.stack([m.inclusion_rates() for m in self.models])


def _member_seeds(base_seed: int, n_models: int) -> list[int]:
    state = np.random.SeedSequence(base_seed).generate_state(n_models, np.uint32)
    return [int(s) for s in state]


def fit_ensemble(X: np.ndarray, y: np.ndarray, config: EnsembleConfig) -> EnsembleFit:
    """Fit n_models members with derived seeds on the oversampled (and
    optionally bootstrapped) labelled rows."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if y.min() == y.max():
        raise ValueError("labels must include both classes")
    seeds = _member_seeds(config.bart.seed, config.n_models)
    models = []
    for m, seed in enumerate(seeds):
        X_m, y_m = X, y
        if config.resample:
            rng = np.random.default_rng(seed)
            while True:
                idx = rng.integers(0, len(y), size=len(y))
                if y[idx].min() != y[idx].max():
                    break
            X_m, y_m = X[idx], y[idx]
        X_m, y_m = oversample_positives(X_m, y_m, config.oversample_mult)
        cfg = BartConfig(config.bart.n_trees, config.bart.n_iterations,
                         config.bart.n_burnin, config.bart.k,
                         config.bart.split_prior_alpha, config.bart.split_prior_beta,
                         seed)
        models.append(fit_bart(X_m, y_m, cfg))
    return EnsembleFit(models, config)


def pooled_draws(fit: EnsembleFit, X: np.ndarray,
                 chunk_size: int = 5000) -> np.ndarray:
    """Concatenate every member's kept draws: (n_rows, n_models * n_kept)."""
    return np.hstack([m.predict_ppd(X, chunk_size=chunk_size) for m in fit.models])


def summarise_ppd(draws: np.ndarray,
                  quantiles: tuple[float, float, float] = (0.01, 0.5, 0.99)
                  ) -> PpdSummary:
    """Per-record quantiles of the pooled draws (linear interpolation)."""
    lo, med, hi = np.quantile(draws, quantiles, axis=1, method="linear")
    return PpdSummary(lo, med, hi)


def compute_uncertainty_zone(summary: PpdSummary, labels) -> UncertaintyZone:
    """Zone between the largest labelled-negative upper bound and the smallest
    labelled-positive lower bound (in either order)."""
    labels = np.asarray(labels, dtype=object)
    pos = labels == "y"
    neg = labels == "n"
    if not pos.any() or not neg.any():
        raise ValueError(
            "uncertainty zone needs at least one manually labelled positive "
            "and one negative; label more records")
    a = float(summary.hi[neg].max())
    b = float(summary.lo[pos].min())
    return UncertaintyZone(min(a, b), max(a, b))


def assign_labels(summary: PpdSummary, zone: UncertaintyZone,
                  existing_labels) -> tuple[np.ndarray, np.ndarray]:
    """Predicted label per record plus the needs-review mask.

    y iff the whole interval clears the zone from above, n iff from below,
    unk otherwise; a y/n prediction contradicting a manual label becomes
    check.  Review set: unk, check, and unconfirmed predicted positives.
    """
    existing = np.asarray(existing_labels, dtype=object)
    predicted = np.full(len(summary.lo), "unk", dtype=object)
    predicted[summary.lo > zone.upper] = "y"
    predicted[summary.hi < zone.lower] = "n"
    manual = (existing == "y") | (existing == "n")
    contradiction = manual & ((predicted == "y") | (predicted == "n")) \
        & (predicted != existing)
    predicted[contradiction] = "check"
    needs_review = ((predicted == "unk") | (predicted == "check")
                    | ((predicted == "y") & (existing != "y")))
    return predicted, needs_review


def _poisson_association(x: np.ndarray, y: np.ndarray):
    """Closed-form single-binary-predictor Poisson regression of y on x:
    slope = log rate ratio, se from the 2x2 table."""
    n1 = int(x.sum())
    n0 = len(x) - n1
    if n1 == 0 or n0 == 0:
        return np.nan, np.nan
    a = float(y[x].sum())
    c = float(y[~x].sum())
    if a == 0.0 or c == 0.0:
        return np.inf if a > 0 else (-np.inf if c > 0 else np.nan), np.nan
    slope = np.log((a / n1) / (c / n0))
    se = np.sqrt(1.0 / a + 1.0 / c)
    return slope, slope / se


def term_importance(fit: EnsembleFit, feature_names: list[str],
                    X: np.ndarray, y: np.ndarray,
                    min_is: float | None = None) -> pd.DataFrame:
    """Term report: inclusion rate per 10,000, rate stability (IS = mean/sd
    across members), Poisson rate ratio against the labels and its statistic."""
    rates = fit.inclusion_rate_matrix()
    mean_rate = rates.mean(axis=0)
    if rates.shape[0] > 1:
        sd_rate = rates.std(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            stability = np.where(sd_rate > 0, mean_rate / sd_rate, np.inf)
        stability = np.where(mean_rate == 0, 0.0, stability)
    else:
        stability = np.full(len(mean_rate), np.nan)

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rows = []
    for j, name in enumerate(feature_names):
        component, _, term = name.partition(":")
        presence = np.nan_to_num(X[:, j], nan=0.0) > 0
        slope, statistic = _poisson_association(presence, y)
        rows.append({
            "feature": name,
            "component": component,
            "term": term,
            "inclusion_rate": mean_rate[j],
            "IS": stability[j],
            "RR": np.exp(slope) if np.isfinite(slope) else slope,
            "statistic": statistic,
        })
    table = pd.DataFrame(rows).sort_values(
        "inclusion_rate", ascending=False, kind="mergesort").reset_index(drop=True)
    if min_is is not None:
        table = table[table["IS"] > min_is].reset_index(drop=True)
    return table


def export_ppd_density(draws: np.ndarray, labels) -> pd.DataFrame:
    """Per-label density of the pooled draws, computed on the logit scale and
    mapped back to probabilities; (label, x, density) rows."""
    labels = np.asarray(labels, dtype=object)
    display = np.where(labels == "", "unlabelled", labels)
    out = []
    for group in ("y", "n", "unk", "check", "unlabelled"):
        mask = display == group
        if not mask.any():
            continue
        values = logit(np.clip(draws[mask].ravel(), 1e-12, 1.0 - 1e-12))
        spread = values.std()
        if len(values) > 1 and spread > 0:
            kde = gaussian_kde(values, bw_method="silverman")
            bw = np.sqrt(kde.covariance[0, 0])
            grid = np.linspace(values.min() - 4 * bw, values.max() + 4 * bw,
                               DENSITY_GRID_SIZE)
            dens_x = kde(grid)
        else:
            loc = float(values[0])
            bw = _FALLBACK_BANDWIDTH
            grid = np.linspace(loc - 5 * bw, loc + 5 * bw, DENSITY_GRID_SIZE)
            dens_x = norm.pdf(grid, loc, bw)
        p = expit(grid)
        dens_p = dens_x / (p * (1.0 - p))
        out.append(pd.DataFrame({"label": group, "x": p, "density": dens_p}))
    if not out:
        return pd.DataFrame(columns=["label", "x", "density"])
    return pd.concat(out, ignore_index=True)
