"""Session performance estimation.

A two-parameter Bayesian logistic regression (surrogate model) relates review
outcomes to each record's lower predictive bound; its posterior extrapolates
how many positives the unreviewed remainder still hides, which yields
expected sensitivity and efficiency against random screening.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import t as student_t

from .records import manual_labels
from .store import Workspace, latest_annotation, latest_samples, load_samples, read_annotation

__all__ = [
    "SurrogateConfig", "SurrogateFit", "PerformanceSummary", "fit_surrogate",
    "bayesian_r2", "predict_total_positives", "expected_sensitivity",
    "expected_efficiency", "nhg_expected_effort", "estimate_performance",
]

RHAT_LIMIT = 1.05


@dataclass
class SurrogateConfig:
    intercept_prior: tuple[float, float, float] = (3.0, 0.0, 2.5)  # nu, mu, sigma
    slope_prior: tuple[float, float, float] = (3.0, 0.0, 1.5)
    n_chains: int = 4
    n_draws: int = 2000            # kept per chain
    warmup: int = 1000
    seed: int = 0


@dataclass
class SurrogateFit:
    draws: np.ndarray              # (n_chains * n_draws, 2): intercept, slope
    rhat: np.ndarray               # per parameter
    ess: np.ndarray                # per parameter
    config: SurrogateConfig

    @property
    def converged(self) -> bool:
        return bool(np.all(self.rhat <= RHAT_LIMIT))


def _log_posterior_fn(x: np.ndarray, y: np.ndarray, config: SurrogateConfig):
    nu_a, mu_a, sd_a = config.intercept_prior
    nu_b, mu_b, sd_b = config.slope_prior

    def log_post(theta: np.ndarray) -> float:
        a, b = theta
        eta = a + b * x
        # log Bernoulli likelihood via log1p(exp(.)) stable form
        loglik = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        prior = (student_t.logpdf(a, nu_a, mu_a, sd_a)
                 + student_t.logpdf(b, nu_b, mu_b, sd_b))
        return loglik + prior

    return log_post


def _run_chain(log_post, seed: int, config: SurrogateConfig) -> np.ndarray:
    rng = np.random.default_rng(seed)
    theta = np.zeros(2)
    current = log_post(theta)
    log_scale = np.log(0.5)
    cov = np.eye(2)
    target = 0.234
    history = []
    draws = np.empty((config.n_draws, 2))
    chol = np.linalg.cholesky(cov)
    total = config.warmup + config.n_draws
    for it in range(total):
        adapting = it < config.warmup
        proposal = theta + np.exp(log_scale) * (chol @ rng.standard_normal(2))
        cand = log_post(proposal)
        accept = np.log(rng.random()) < cand - current
        if accept:
            theta, current = proposal, cand
        if adapting:
            history.append(theta.copy())
            rate = 1.0 if accept else 0.0
            log_scale += (rate - target) / np.sqrt(it + 1.0)
            if it >= 100 and (it + 1) % 50 == 0:
                emp = np.cov(np.asarray(history[max(0, it - 500):]).T)
                cov = emp + 1e-6 * np.eye(2)
                chol = np.linalg.cholesky(cov)
        else:
            # proposal frozen after warmup so the kept chain is valid MCMC
            draws[it - config.warmup] = theta
    return draws


def _split_rhat(chains: np.ndarray) -> np.ndarray:
    """chains: (n_chains, n_draws, n_params); each chain split in half."""
    n_chains, n_draws, n_params = chains.shape
    half = n_draws // 2
    seqs = np.concatenate([chains[:, :half], chains[:, half:2 * half]], axis=0)
    m, n, _ = seqs.shape
    means = seqs.mean(axis=1)
    variances = seqs.var(axis=1, ddof=1)
    w = variances.mean(axis=0)
    b = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * w + b / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / w)
    return np.where(w > 0, rhat, 1.0)


def _ess(chains: np.ndarray) -> np.ndarray:
    """Effective sample size per parameter (initial-positive-sequence rule)."""
    n_chains, n_draws, n_params = chains.shape
    out = np.empty(n_params)
    for p in range(n_params):
        seqs = chains[:, :, p]
        centered = seqs - seqs.mean(axis=1, keepdims=True)
        var = centered.var(axis=1, ddof=0).mean()
        if var == 0:
            out[p] = float(n_chains * n_draws)
            continue
        size = 2 ** int(np.ceil(np.log2(2 * n_draws)))
        freq = np.fft.rfft(centered, n=size, axis=1)
        acov = np.fft.irfft(freq * np.conj(freq), n=size, axis=1)[:, :n_draws]
        acov = (acov / n_draws).mean(axis=0)
        rho = acov / acov[0]
        total = 0.0
        t_lag = 1
        while t_lag + 1 < n_draws:
            pair = rho[t_lag] + rho[t_lag + 1]
            if pair < 0:
                break
            total += pair
            t_lag += 2
        out[p] = n_chains * n_draws / (1.0 + 2.0 * total)
    return out


def fit_surrogate(lo_bounds: np.ndarray, outcomes: np.ndarray,
                  config: SurrogateConfig | None = None) -> SurrogateFit:
    """Posterior of (intercept, slope) by adaptive random-walk Metropolis."""
    config = config or SurrogateConfig()
    x = np.asarray(lo_bounds, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("predictor and outcomes must align")
    if len(x) < 10:
        raise ValueError("at least 10 reviewed records are required")
    if y.min() == y.max():
        raise ValueError("outcomes must include both classes")
    log_post = _log_posterior_fn(x, y, config)
    seeds = np.random.SeedSequence(config.seed).generate_state(config.n_chains)
    chains = np.stack([_run_chain(log_post, int(s), config) for s in seeds])
    rhat = _split_rhat(chains)
    ess = _ess(chains)
    draws = chains.reshape(-1, 2)
    return SurrogateFit(draws, rhat, ess, config)


def bayesian_r2(fit: SurrogateFit, lo_bounds: np.ndarray,
                outcomes=None) -> tuple[np.ndarray, float, tuple[float, float]]:
    """Per-draw R^2 = Var(p) / (Var(p) + mean(p(1-p))); median and 90% CrI."""
    x = np.asarray(lo_bounds, dtype=np.float64)
    eta = fit.draws[:, 0:1] + fit.draws[:, 1:2] * x[None, :]
    p = expit(eta)
    var_fit = p.var(axis=1)
    resid = (p * (1.0 - p)).mean(axis=1)
    r2 = var_fit / (var_fit + resid)
    lo, med, hi = np.quantile(r2, (0.05, 0.5, 0.95))
    return r2, float(med), (float(lo), float(hi))


def predict_total_positives(fit: SurrogateFit, all_lo_bounds: np.ndarray,
                            reviewed_mask: np.ndarray, observed_pos: int,
                            seed: int = 0
                            ) -> tuple[np.ndarray, tuple[float, float]]:
    """Posterior draws of the total positive count K, with the 90% interval
    truncated below at the observed count."""
    x = np.asarray(all_lo_bounds, dtype=np.float64)
    reviewed = np.asarray(reviewed_mask, dtype=bool)
    unreviewed = x[~reviewed]
    if unreviewed.size == 0:
        k_draws = np.full(len(fit.draws), observed_pos, dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        p = expit(fit.draws[:, 0:1] + fit.draws[:, 1:2] * unreviewed[None, :])
        extra = (rng.random(p.shape) < p).sum(axis=1)
        k_draws = observed_pos + extra
    q05, q95 = np.quantile(k_draws, (0.05, 0.95))
    return k_draws, (float(max(observed_pos, q05)), float(q95))


def expected_sensitivity(k_draws: np.ndarray, observed_pos: int
                         ) -> tuple[np.ndarray, tuple[float, float]]:
    draws = observed_pos / np.maximum(k_draws, 1)
    q05, q95 = np.quantile(draws, (0.05, 0.95))
    return draws, (float(q05), float(min(1.0, q95)))


def nhg_expected_effort(r: int, n_total: int, k: np.ndarray | int):
    """Mean number of records a random reviewer reads to find r positives
    among n_total records containing k positives."""
    return r * (n_total + 1) / (np.asarray(k, dtype=np.float64) + 1)


def expected_efficiency(n_reviewed: int, n_total: int, k_draws: np.ndarray,
                        observed_pos: int
                        ) -> tuple[np.ndarray, tuple[float, float]]:
    effort = nhg_expected_effort(observed_pos, n_total, k_draws)
    draws = 1.0 - n_reviewed / effort
    q05, q95 = np.quantile(draws, (0.05, 0.95))
    return draws, (float(q05), float(q95))


@dataclass
class PerformanceSummary:
    n_records: int
    n_reviewed: int
    reviewed_pct: float
    observed_positives: int
    converged: bool
    rhat: list[float]
    ess: list[float]
    predicted_positives_median: float | None = None
    predicted_positives_interval: tuple[float, float] | None = None
    sensitivity_median: float | None = None
    sensitivity_interval: tuple[float, float] | None = None
    efficiency_median: float | None = None
    efficiency_interval: tuple[float, float] | None = None
    r2_median: float | None = None
    r2_interval: tuple[float, float] | None = None
    curve: pd.DataFrame | None = None

    def to_frame(self) -> pd.DataFrame:
        def interval(pair):
            if pair is None:
                return ""
            return f"[{pair[0]:.4g}, {pair[1]:.4g}]"

        rows = [
            ("Total records", self.n_records),
            ("Reviewed records (% over total records)",
             f"{self.n_reviewed} ({self.reviewed_pct:.1%})"),
            ("Observed positives", self.observed_positives),
            ("Predicted positives [trunc. 90% PrI]",
             "" if self.predicted_positives_median is None else
             f"{self.predicted_positives_median:.4g} "
             f"{interval(self.predicted_positives_interval)}"),
            ("Expected sensitivity [trunc. 90% PrI]",
             "" if self.sensitivity_median is None else
             f"{self.sensitivity_median:.1%} "
             f"{interval(self.sensitivity_interval)}"),
            ("Expected efficiency [trunc. 90% PrI]",
             "" if self.efficiency_median is None else
             f"{self.efficiency_median:.1%} {interval(self.efficiency_interval)}"),
            ("Bayesian R2 [90% CrI]",
             "" if self.r2_median is None else
             f"{self.r2_median:.4g} {interval(self.r2_interval)}"),
            ("Converged", str(self.converged)),
        ]
        return pd.DataFrame(rows, columns=["Indicator", "Value"])


def _prediction_curve(outcomes: np.ndarray, reviewed: np.ndarray,
                      p_draws: np.ndarray, max_draws: int = 1000) -> pd.DataFrame:
    """Cumulative observed vs predicted positives in file (query) order."""
    n = len(outcomes)
    n_draws = min(max_draws, p_draws.shape[0])
    contrib = np.where(reviewed[None, :], outcomes[None, :].astype(float),
                       p_draws[:n_draws])
    cum = np.cumsum(contrib, axis=1)
    q05, med, q95 = np.quantile(cum, (0.05, 0.5, 0.95), axis=0)
    observed_cum = np.cumsum(np.where(reviewed, outcomes, 0))
    return pd.DataFrame({
        "rank": np.arange(1, n + 1),
        "observed_cum": observed_cum,
        "q05": q05, "median": med, "q95": q95,
    })


def estimate_performance(ws: Workspace, session: str,
                         config: SurrogateConfig | None = None
                         ) -> PerformanceSummary:
    """Compose the full performance summary from the session's latest
    annotation file (predictive bounds and review outcomes)."""
    config = config or SurrogateConfig()
    path = latest_annotation(ws, session)
    if path is None:
        raise FileNotFoundError(f"no annotation files for session {session!r}")
    table = read_annotation(path)
    labels = manual_labels(table)
    reviewed = (labels != "").to_numpy()
    outcomes = (labels == "y").to_numpy().astype(int)
    lo = table["Pred_Low"].to_numpy(dtype=np.float64)
    if np.isnan(lo).all():
        raise ValueError("annotation file has no predictions; run an iteration")
    lo = np.nan_to_num(lo, nan=0.0)
    n_total = len(table)
    n_reviewed = int(reviewed.sum())
    observed_pos = int(outcomes[reviewed].sum())

    summary = PerformanceSummary(
        n_records=n_total, n_reviewed=n_reviewed,
        reviewed_pct=n_reviewed / n_total if n_total else 0.0,
        observed_positives=observed_pos, converged=False, rhat=[], ess=[])

    fit = fit_surrogate(lo[reviewed], outcomes[reviewed], config)
    summary.rhat = [float(v) for v in fit.rhat]
    summary.ess = [float(v) for v in fit.ess]
    summary.converged = fit.converged
    if not fit.converged:
        return summary

    _, r2_med, r2_int = bayesian_r2(fit, lo[reviewed])
    k_draws, k_int = predict_total_positives(fit, lo, reviewed, observed_pos,
                                             seed=config.seed)
    sens_draws, sens_int = expected_sensitivity(k_draws, observed_pos)
    eff_draws, eff_int = expected_efficiency(n_reviewed, n_total, k_draws,
                                             observed_pos)
    summary.predicted_positives_median = float(np.median(k_draws))
    summary.predicted_positives_interval = k_int
    summary.sensitivity_median = float(np.median(sens_draws))
    summary.sensitivity_interval = sens_int
    summary.efficiency_median = float(np.median(eff_draws))
    summary.efficiency_interval = eff_int
    summary.r2_median = r2_med
    summary.r2_interval = r2_int

    rng = np.random.default_rng(config.seed)
    sel = rng.choice(len(fit.draws), size=min(1000, len(fit.draws)),
                     replace=False)
    p_draws = expit(fit.draws[sel, 0:1] + fit.draws[sel, 1:2] * lo[None, :])
    bern = (rng.random(p_draws.shape) < p_draws).astype(float)
    summary.curve = _prediction_curve(outcomes, reviewed, bern)
    return summary
