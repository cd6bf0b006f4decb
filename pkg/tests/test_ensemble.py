import numpy as np
import pytest
from scipy.integrate import trapezoid

from bayscreen.bart import BartConfig
from bayscreen.ensemble import (EnsembleConfig, Limits, PpdSummary,
                                UncertaintyZone, assign_labels,
                                compute_uncertainty_zone, export_ppd_density,
                                fit_ensemble, oversample_positives,
                                pooled_draws, summarise_ppd, term_importance)

from oracles import brute_assign_labels, brute_zone


def separable(n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = (rng.random((n, 6)) < 0.3).astype(np.float64)
    y = X[:, 0].astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


# --- config -------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(n_models=0)
    with pytest.raises(ValueError):
        EnsembleConfig(pred_quantiles=(0.5, 0.5, 0.9))
    with pytest.raises(ValueError):
        Limits(stop_after=0)
    with pytest.raises(ValueError):
        PpdSummary(np.array([0.5]), np.array([0.4]), np.array([0.6]))
    with pytest.raises(ValueError):
        UncertaintyZone(0.8, 0.2)


# --- oversampling ----------------------------------------------------------------

def test_oversample_counts():
    X = np.arange(10).reshape(5, 2).astype(float)
    y = np.array([1, 1, 0, 0, 0])
    X2, y2 = oversample_positives(X, y, 10)
    assert (y2 == 1).sum() == 20
    assert (y2 == 0).sum() == 3


def test_oversample_identity_and_multiset():
    X = np.arange(8).reshape(4, 2).astype(float)
    y = np.array([1, 0, 1, 0])
    X1, y1 = oversample_positives(X, y, 1)
    np.testing.assert_array_equal(X1, X)
    X3, y3 = oversample_positives(X, y, 3)
    # multiset check: each positive row appears exactly 3 times
    rows = [tuple(r) for r in X3]
    assert rows.count((0.0, 1.0)) == 3
    assert rows.count((2.0, 3.0)) == 1


# --- ensemble fit -----------------------------------------------------------------

def test_single_member_pool_equals_model(fast_bart):
    X, y = separable()
    cfg = EnsembleConfig(n_models=1, oversample_mult=1, bart=fast_bart)
    fit = fit_ensemble(X, y, cfg)
    pool = pooled_draws(fit, X)
    np.testing.assert_array_equal(pool, fit.models[0].predict_ppd(X))


def test_pooled_quantiles_bracketed_by_members():
    rng = np.random.default_rng(1)
    a = rng.random((5, 40))
    b = rng.random((5, 40)) * 0.5
    pooled = np.hstack([a, b])
    med = np.quantile(pooled, 0.5, axis=1)
    lo_members = np.minimum(np.quantile(a, 0.5, axis=1),
                            np.quantile(b, 0.5, axis=1))
    hi_members = np.maximum(np.quantile(a, 0.5, axis=1),
                            np.quantile(b, 0.5, axis=1))
    assert ((med >= lo_members) & (med <= hi_members)).all()


def test_ensemble_deterministic_with_resample(fast_bart):
    X, y = separable()
    cfg = EnsembleConfig(n_models=2, oversample_mult=2, resample=True,
                         bart=fast_bart)
    p1 = pooled_draws(fit_ensemble(X, y, cfg), X)
    p2 = pooled_draws(fit_ensemble(X, y, cfg), X)
    np.testing.assert_array_equal(p1, p2)


def test_ensemble_requires_both_classes(fast_bart):
    X, _ = separable()
    with pytest.raises(ValueError):
        fit_ensemble(X, np.zeros(len(X), dtype=int),
                     EnsembleConfig(bart=fast_bart))


def test_summary_quantile_estimator_is_linear():
    draws = np.array([[0.0, 1.0, 2.0, 3.0]])
    summary = summarise_ppd(draws, (0.25, 0.5, 0.75))
    assert summary.lo[0] == pytest.approx(0.75)
    assert summary.med[0] == pytest.approx(1.5)
    assert summary.hi[0] == pytest.approx(2.25)


# --- uncertainty zone ----------------------------------------------------------

def _summary(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return PpdSummary(lo, (lo + hi) / 2, hi)


def test_zone_direct_definition():
    summary = _summary([0.1, 0.1, 0.7], [0.3, 0.4, 0.9])
    zone = compute_uncertainty_zone(summary, ["n", "n", "y"])
    assert (zone.lower, zone.upper) == (0.4, 0.7)


def test_zone_overlapping_limits_normalized():
    summary = _summary([0.0, 0.5], [0.8, 1.0])
    zone = compute_uncertainty_zone(summary, ["n", "y"])
    assert (zone.lower, zone.upper) == (0.5, 0.8)


def test_zone_degenerate_equal_limits():
    summary = _summary([0.2, 0.6], [0.6, 0.9])
    zone = compute_uncertainty_zone(summary, ["n", "y"])
    assert zone.lower == zone.upper == 0.6


def test_zone_requires_both_classes():
    summary = _summary([0.1], [0.2])
    with pytest.raises(ValueError):
        compute_uncertainty_zone(summary, ["y"])


# --- label assignment ----------------------------------------------------------

def test_assign_rule_applications():
    zone = UncertaintyZone(0.4, 0.7)
    summary = _summary([0.9, 0.05, 0.3], [0.95, 0.2, 0.8])
    predicted, review = assign_labels(summary, zone, ["", "", ""])
    assert list(predicted) == ["y", "n", "unk"]
    assert list(review) == [True, False, True]


def test_contradiction_becomes_check():
    zone = UncertaintyZone(0.4, 0.7)
    summary = _summary([0.05], [0.2])
    predicted, review = assign_labels(summary, zone, ["y"])
    assert predicted[0] == "check" and review[0]


def test_confirmed_positive_not_reviewed():
    zone = UncertaintyZone(0.4, 0.7)
    summary = _summary([0.9], [0.95])
    predicted, review = assign_labels(summary, zone, ["y"])
    assert predicted[0] == "y" and not review[0]


def test_assign_matches_bruteforce_reference():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 30))
        lo = rng.random(n)
        hi = lo + rng.random(n) * (1 - lo)
        existing = rng.choice(["", "y", "n"], n, p=[0.6, 0.2, 0.2])
        zl, zu = sorted(rng.random(2))
        zone = UncertaintyZone(zl, zu)
        summary = PpdSummary(lo, (lo + hi) / 2, hi)
        predicted, review = assign_labels(summary, zone, existing)
        exp_pred, exp_rev = brute_assign_labels(lo, hi, zl, zu, existing)
        assert list(predicted) == exp_pred
        assert list(review) == exp_rev


def test_zone_matches_bruteforce_reference():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 25))
        lo = rng.random(n)
        hi = lo + rng.random(n) * (1 - lo)
        labels = rng.choice(["", "y", "n"], n).tolist()
        labels[0] = "y"
        labels[-1] = "n"
        summary = PpdSummary(lo, (lo + hi) / 2, hi)
        zone = compute_uncertainty_zone(summary, labels)
        assert (zone.lower, zone.upper) == brute_zone(lo, hi, labels)


def test_label_monotonicity_in_lo():
    # raising lo can only move a label towards y, never away from it
    zone = UncertaintyZone(0.3, 0.6)
    rng = np.random.default_rng(2)
    rank = {"n": 0, "unk": 1, "y": 2}
    for _ in range(200):
        lo = float(rng.random() * 0.8)
        hi = lo + float(rng.random() * (1 - lo))
        lo2 = min(lo + 0.1, hi)
        s1 = PpdSummary(np.array([lo]), np.array([(lo + hi) / 2]), np.array([hi]))
        s2 = PpdSummary(np.array([lo2]), np.array([(lo2 + hi) / 2]), np.array([hi]))
        p1, _ = assign_labels(s1, zone, [""])
        p2, _ = assign_labels(s2, zone, [""])
        assert rank[p2[0]] >= rank[p1[0]]


# --- term importance and densities ------------------------------------------------

def test_term_importance_shape_and_order(fast_bart):
    X, y = separable(80)
    cfg = EnsembleConfig(n_models=3, oversample_mult=2, bart=fast_bart)
    fit = fit_ensemble(X, y, cfg)
    names = [f"abstract:t{i}" for i in range(X.shape[1])]
    table = term_importance(fit, names, X, y)
    assert list(table.columns) == ["feature", "component", "term",
                                   "inclusion_rate", "IS", "RR", "statistic"]
    rates = table["inclusion_rate"].to_numpy()
    assert (rates[:-1] >= rates[1:]).all()
    # the decisive feature has the largest rate ratio among finite ones
    decisive = table[table["feature"] == "abstract:t0"].iloc[0]
    assert decisive["inclusion_rate"] == rates[0]


def test_term_importance_single_model_is_nan(fast_bart):
    X, y = separable(40)
    cfg = EnsembleConfig(n_models=1, oversample_mult=1, bart=fast_bart)
    fit = fit_ensemble(X, y, cfg)
    table = term_importance(fit, [f"f:t{i}" for i in range(X.shape[1])], X, y)
    assert table["IS"].isna().all()


def test_term_importance_min_is_filter(fast_bart):
    X, y = separable(60)
    cfg = EnsembleConfig(n_models=3, oversample_mult=2, bart=fast_bart)
    fit = fit_ensemble(X, y, cfg)
    names = [f"f:t{i}" for i in range(X.shape[1])]
    table = term_importance(fit, names, X, y, min_is=1.5)
    assert (table["IS"] > 1.5).all()


def test_poisson_statistic_small_for_independent_term(fast_bart):
    rng = np.random.default_rng(4)
    X = (rng.random((200, 2)) < 0.5).astype(np.float64)
    y = (rng.random(200) < 0.5).astype(int)
    X[:, 0] = y  # keep the fit non-degenerate
    cfg = EnsembleConfig(n_models=2, oversample_mult=1, bart=BartConfig(
        n_trees=5, n_iterations=60, n_burnin=10, seed=0))
    fit = fit_ensemble(X, y, cfg)
    table = term_importance(fit, ["f:signal", "f:noise"], X, y)
    noise = table[table["term"] == "noise"].iloc[0]
    assert abs(noise["statistic"]) < 2.5


def test_density_groups_and_normalization():
    rng = np.random.default_rng(0)
    draws = rng.beta(2, 5, size=(6, 200))
    labels = np.array(["y", "n", "unk", "", "", "y"], dtype=object)
    table = export_ppd_density(draws, labels)
    assert set(table["label"]) == {"y", "n", "unk", "unlabelled"}
    assert (table["density"] >= 0).all()
    for _, part in table.groupby("label"):
        mass = trapezoid(part["density"], part["x"])
        assert mass == pytest.approx(1.0, abs=2e-2)


def test_density_single_point_group_integrates_to_one():
    draws = np.full((1, 4), 0.3)
    table = export_ppd_density(draws, np.array(["y"], dtype=object))
    mass = trapezoid(table["density"], table["x"])
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_density_empty_input():
    table = export_ppd_density(np.zeros((0, 5)), np.array([], dtype=object))
    assert table.empty
