import numpy as np
import pandas as pd
import pytest

from supplierlab.datagen import Corpus, WorldConfig, generate_corpus, read_corpus
from supplierlab.econo import (
    PartitionRule,
    RegressionSpec,
    build_panel,
    cluster2_vcov,
    cluster_vcov,
    demean_hdfe,
    drop_singletons,
    hc1_vcov,
    ols,
    partition,
    run_spec,
)
from supplierlab.errors import DegenerateClusters, MissingLookup, NoConvergence, RankDeficient, SpecError
from supplierlab.shocks import build_shocks

from conftest import FIXTURES


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(WorldConfig(n_firms=60, n_destinations=12, n_years=8, seed=5))


@pytest.fixture(scope="module")
def shocks(corpus):
    return build_shocks(corpus.imports, variants=["SupplierFirm"])


def tiny_corpus(export_rows):
    exports = pd.DataFrame(export_rows, columns=["year", "firm_id", "product_hs6", "dest_country", "value_usd", "quantity"])
    imports = pd.DataFrame(columns=["year", "firm_id", "supplier_id", "product_hs6", "source_country", "value_usd", "quantity"])
    countries = pd.DataFrame({"country": ["A", "B"], "income_group": ["advanced", "emerging"]})
    classes = pd.DataFrame({"product_hs6": ["p", "q"], "scheme": ["rauch_lib"] * 2, "class": ["differentiated", "homogeneous"]})
    return Corpus(imports, exports, countries, classes)


def two_way_instance(n, seed, n_a=15, n_b=9):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, n_a, n)
    b = rng.integers(0, n_b, n)
    X = rng.normal(size=(n, 3))
    y = X @ [1.0, -0.5, 0.2] + rng.normal(size=n_a)[a] + rng.normal(size=n_b)[b] + rng.normal(size=n)
    return y, X, a, b


def dummies(codes):
    codes = pd.factorize(codes)[0]
    D = np.zeros((len(codes), codes.max() + 1))
    D[np.arange(len(codes)), codes] = 1.0
    return D


# --------------------------------------------------------------------------
# panel construction


def test_survival_outcome_examples():
    c = tiny_corpus([(0, "F", "p", "A", 1.0, 1.0), (1, "F", "p", "A", 1.0, 1.0),
                     (0, "F", "q", "A", 1.0, 1.0), (2, "F", "q", "A", 1.0, 1.0)])
    shocks = pd.DataFrame({"firm_id": ["F"] * 3, "year": [0, 1, 2], "variant": ["SupplierFirm"] * 3, "value": [0.1, 0.2, 0.3]})
    spec = RegressionSpec(outcome="survival", horizon=1, outcome_lags=0)
    panel = build_panel(c, shocks, spec)
    got = dict(zip(zip(panel.rows["product_hs6"], panel.rows["year"]), panel.y))
    assert got[("p", 0)] == 1.0
    assert got[("q", 0)] == 0.0


def test_rows_shrink_with_horizon(corpus, shocks):
    for outcome in ("exports", "survival", "imports"):
        counts = [len(build_panel(corpus, shocks, RegressionSpec(outcome=outcome, horizon=j)).y) for j in range(3)]
        assert counts[0] >= counts[1] >= counts[2]


def test_impossible_lags_raise(corpus, shocks):
    with pytest.raises(SpecError):
        build_panel(corpus, shocks, RegressionSpec(horizon=3, outcome_lags=6))


def test_spec_validation():
    with pytest.raises(SpecError):
        RegressionSpec(horizon=-1)
    with pytest.raises(SpecError):
        RegressionSpec(cluster=())
    with pytest.raises(SpecError):
        RegressionSpec.from_mapping({"outcom": "exports"})
    with pytest.raises(SpecError):
        RegressionSpec(variant="Nope")
    spec = RegressionSpec.from_mapping({"outcome": "imports", "horizon": "1"})
    assert spec.horizon == 1 and RegressionSpec.from_mapping(spec.as_dict()) == spec


def test_lag_columns_are_lagged_outcomes(corpus, shocks):
    panel = build_panel(corpus, shocks, RegressionSpec(outcome="imports", outcome_lags=1, shock_lags=1))
    assert panel.names == ["shock", "shock_l1", "logq_l1"]
    cells = corpus.imports.groupby(["firm_id", "product_hs6", "source_country", "year"])["quantity"].sum()
    r = panel.rows.iloc[10]
    assert panel.X[10, 2] == pytest.approx(np.log(cells[(r.firm_id, r.product_hs6, r.country, r.year - 1)]))
    assert panel.y[10] == pytest.approx(np.log(cells[(r.firm_id, r.product_hs6, r.country, r.year)]))


# --------------------------------------------------------------------------
# demeaning


def test_single_fe_is_exact_group_demeaning():
    rng = np.random.default_rng(0)
    g = rng.integers(0, 20, 300)
    x = rng.normal(size=(300, 2))
    out, iters, conv = demean_hdfe(x, [g])
    ref = x - pd.DataFrame(x).groupby(g).transform("mean").to_numpy()
    assert iters == 1 and conv
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-14)


def test_two_fe_matches_dummy_regression():
    y, X, a, b = two_way_instance(500, 1)
    M = np.column_stack([y, X])
    out, _, conv = demean_hdfe(M, [a, b], tol=1e-12)
    D = np.column_stack([dummies(a), dummies(b)])
    resid = M - D @ np.linalg.lstsq(D, M, rcond=None)[0]
    assert conv
    np.testing.assert_allclose(out, resid, rtol=0, atol=1e-8)
    for g in (a, b):
        means = pd.DataFrame(out).groupby(g).mean().to_numpy()
        assert np.abs(means).max() <= 1e-8


def test_within_coefficients_equal_dummy_ols():
    for n, seed in [(200, 2), (2000, 3)]:
        y, X, a, b = two_way_instance(n, seed, n_a=40, n_b=12)
        out, _, _ = demean_hdfe(np.column_stack([y, X]), [a, b], tol=1e-13)
        within = ols(out[:, 0], out[:, 1:]).coef
        D = np.column_stack([X, dummies(a), dummies(b)[:, 1:]])
        full = np.linalg.lstsq(D, y, rcond=None)[0][:3]
        np.testing.assert_allclose(within, full, rtol=0, atol=1e-8)


def test_no_convergence_reported():
    y, X, a, b = two_way_instance(300, 4)
    with pytest.raises(NoConvergence) as err:
        demean_hdfe(X, [a, b], tol=1e-30, max_iter=3)
    assert err.value.iterations == 3
    _, iters, conv = demean_hdfe(X, [a, b], tol=1e-30, max_iter=3, raise_on_fail=False)
    assert not conv and iters == 3


def test_drop_singletons_is_iterative():
    a = np.array([0, 0, 1, 2, 2])
    b = np.array([0, 1, 1, 2, 2])
    # obs 2 is a singleton in a; dropping it makes obs 1 a singleton in b, then obs 0 in a
    assert drop_singletons([a, b]).tolist() == [False, False, False, True, True]


# --------------------------------------------------------------------------
# least squares


def test_exact_fit():
    x = np.arange(1.0, 11.0)
    fit = ols(2 * x, x)
    assert fit.coef[0] == pytest.approx(2.0, abs=1e-14)
    assert np.abs(fit.resid).max() < 1e-12


def test_column_order_invariance_and_normal_equations():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 3))
    y = X @ [0.3, -1.0, 2.0] + rng.normal(size=100)
    b = ols(y, X).coef
    ref = np.linalg.inv(X.T @ X) @ X.T @ y
    np.testing.assert_allclose(b, ref, rtol=0, atol=1e-10)
    perm = [2, 0, 1]
    np.testing.assert_allclose(ols(y, X[:, perm]).coef, b[perm], rtol=0, atol=1e-12)


def test_rank_deficiency_names_columns():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    X = np.column_stack([X, X[:, 0] + X[:, 1]])
    with pytest.raises(RankDeficient) as err:
        ols(rng.normal(size=50), X, names=["a", "b", "c"])
    assert len(err.value.columns) == 1 and err.value.columns[0] in {"a", "b", "c"}


# --------------------------------------------------------------------------
# clustered variance


def brute_force_cluster(e, X, g):
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    labels = sorted(set(g))
    for lab in labels:
        idx = [i for i in range(n) if g[i] == lab]
        s = sum(X[i] * e[i] for i in idx)
        meat += np.outer(s, s)
    G = len(labels)
    return G / (G - 1) * (n - 1) / (n - k) * bread @ meat @ bread


def test_two_way_matches_three_brute_force_sandwiches():
    y, X, a, b = two_way_instance(200, 7)
    fit = ols(y, X)
    v, _ = cluster2_vcov(fit.resid, X, a, b)
    ab = [f"{i}-{j}" for i, j in zip(a, b)]
    ref = brute_force_cluster(fit.resid, X, list(a)) + brute_force_cluster(fit.resid, X, list(b)) \
        - brute_force_cluster(fit.resid, X, ab)
    w, vec = np.linalg.eigh((ref + ref.T) / 2)
    ref = (vec * np.clip(w, 0, None)) @ vec.T
    np.testing.assert_allclose(v, ref, rtol=0, atol=1e-12 * np.abs(ref).max())


def test_singleton_clusters_give_robust_sandwich():
    y, X, _, _ = two_way_instance(200, 8)
    fit = ols(y, X)
    ids = np.arange(200)
    v, repaired = cluster2_vcov(fit.resid, X, ids, ids[::-1].copy())
    np.testing.assert_allclose(v, hc1_vcov(fit.resid, X), rtol=1e-12, atol=0)


def test_identical_dimensions_give_one_way():
    y, X, a, _ = two_way_instance(200, 9)
    fit = ols(y, X)
    v, _ = cluster2_vcov(fit.resid, X, a, a)
    np.testing.assert_allclose(v, cluster_vcov(fit.resid, X, a), rtol=1e-12, atol=1e-15)


def test_degenerate_clusters():
    y, X, _, b = two_way_instance(50, 1)
    with pytest.raises(DegenerateClusters):
        cluster2_vcov(y, X, np.zeros(50), b)


def test_repaired_variance_is_psd():
    y, X, a, b = two_way_instance(60, 3, n_a=3, n_b=3)
    v, _ = cluster2_vcov(ols(y, X).resid, X, a, b)
    assert np.linalg.eigvalsh(v).min() >= -1e-12 * np.abs(v).max()
    assert np.allclose(v, v.T)


# --------------------------------------------------------------------------
# pipeline


def test_fe_invariance(corpus, shocks):
    spec = RegressionSpec(outcome="imports")
    base = run_spec(corpus, shocks, spec)
    bumped = corpus.imports.copy()
    rng = np.random.default_rng(0)
    years = np.sort(bumped["year"].unique())
    bumped["quantity"] *= np.exp(rng.normal(size=years.max() + 1))[bumped["year"]]
    shifted = Corpus(bumped, corpus.exports, corpus.countries, corpus.classifications, corpus.employment)
    # a year-specific scale shifts log quantities by a year constant; lags change too, so compare with no lags
    spec0 = RegressionSpec(outcome="imports", outcome_lags=0)
    a = run_spec(corpus, shocks, spec0).coefficient()
    b = run_spec(shifted, shocks, spec0).coefficient()
    assert b == pytest.approx(a, abs=1e-8)
    assert base.converged and base.n_obs > 0


def test_zero_noise_fixture_recovers_import_elasticity():
    corpus = read_corpus(FIXTURES / "zero_noise")
    shocks = build_shocks(corpus.imports, variants=["SupplierFirm"])
    res = run_spec(corpus, shocks, RegressionSpec(outcome="imports"))
    assert res.coefficient() == pytest.approx(-0.3, abs=1e-6)


def test_result_reporting(corpus, shocks, tmp_path):
    res = run_spec(corpus, shocks, RegressionSpec(outcome="exports", partitions=("income=advanced",)))
    lo, hi = res.conf_int()
    assert lo < res.coefficient() < hi
    table = res.table()
    assert list(table.columns[:4]) == ["name", "estimate", "se", "t"]
    paths = res.write(tmp_path)
    assert {p.name for p in paths} == {"results.txt", "results.csv"}
    text = (tmp_path / "results.txt").read_text()
    assert "shock" in text and "income=advanced" in text


# --------------------------------------------------------------------------
# partitions


def test_class_partition_complements():
    c = tiny_corpus([(0, "F", "p", "A", 1.0, 1.0), (0, "F", "q", "A", 1.0, 1.0), (0, "F", "r", "B", 1.0, 1.0)])
    diff, bad = partition(c, "class:rauch_lib=differentiated")
    non, bad2 = partition(c, "class:rauch_lib=non-differentiated")
    assert bad == bad2 == 1
    assert len(diff.exports) + len(non.exports) == 2
    assert set(diff.exports["product_hs6"]) == {"p"}


def test_income_partition_counts(corpus):
    adv, _ = partition(corpus, "income=advanced")
    em, _ = partition(corpus, "income=emerging")
    groups = corpus.countries.set_index("country")["income_group"]
    assert len(adv.exports) == int((corpus.exports["dest_country"].map(groups) == "advanced").sum())
    assert len(adv.exports) + len(em.exports) == len(corpus.exports)
    assert len(adv.imports) + len(em.imports) == len(corpus.imports)


def test_size_partition_splits_firm_years(corpus):
    above, _ = partition(corpus, "size=above")
    below, _ = partition(corpus, "size=below")
    assert len(above.exports) + len(below.exports) == len(corpus.exports)
    assert len(above.exports) > 0 and len(below.exports) > 0


def test_missing_lookup():
    c = tiny_corpus([(0, "F", "p", "A", 1.0, 1.0)])
    with pytest.raises(MissingLookup):
        partition(c, "size=above")
    with pytest.raises(MissingLookup):
        partition(c, "class:bernini=differentiated")


@pytest.mark.parametrize("text", ["colour=red", "size=huge", "income"])
def test_bad_partition_rules(text):
    with pytest.raises(SpecError):
        PartitionRule.parse(text)
