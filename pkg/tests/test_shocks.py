import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from supplierlab.datagen import WorldConfig, generate_corpus
from supplierlab.errors import NoBaseYear
from supplierlab.shocks import (
    SHOCK_COLUMNS,
    ShockVariant,
    build_shocks,
    firm_shock,
    lagged_shares,
    price_shifts,
    shift_share,
    shock_stats,
    unit_values,
)

COLS = ["year", "firm_id", "supplier_id", "product_hs6", "source_country", "value_usd", "quantity"]


def imports(rows):
    return pd.DataFrame(rows, columns=COLS)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(WorldConfig(n_firms=60, n_years=8, seed=3))


# --------------------------------------------------------------------------
# building blocks


def test_unit_value_single_record():
    uv = unit_values(imports([(0, "A", "S", "p", "X", 10.0, 2.0)]), "SupplierAverage")
    assert uv["price"].tolist() == [5.0]


def test_unit_value_pools_records():
    df = imports([(0, "A", "S", "p", "X", 10.0, 2.0), (0, "B", "S", "p", "X", 20.0, 2.0)])
    assert unit_values(df, "SupplierAverage")["price"].tolist() == [7.5]


def test_leave_one_out_single_buyer_has_no_price():
    df = imports([(0, "A", "S", "p", "X", 10.0, 2.0), (1, "A", "S", "p", "X", 12.0, 2.0)])
    assert unit_values(df, "SupplierLeaveOneOut").empty


def test_leave_one_out_excludes_own_flows():
    df = imports([(0, "A", "S", "p", "X", 10.0, 2.0), (0, "B", "S", "p", "X", 30.0, 2.0)])
    uv = unit_values(df, "SupplierLeaveOneOut").set_index("firm_id")["price"]
    assert uv["A"] == 15.0 and uv["B"] == 5.0


def test_rest_of_world_prices_replace_customs():
    df = imports([(0, "A", "S", "p", "X", 10.0, 2.0)])
    row = pd.DataFrame({"product_hs6": ["p"], "source_country": ["X"], "year": [0], "price": [3.0]})
    assert unit_values(df, "CountryProduct", row)["price"].tolist() == [3.0]


def test_price_shift_examples():
    prices = pd.DataFrame({"k": ["a", "a", "b", "b", "c"], "year": [0, 1, 0, 1, 1],
                           "price": [100.0, 110.0, 5.0, 5.0, 7.0]})
    out = price_shifts(prices).set_index("k")["shift"]
    assert out["a"] == pytest.approx(0.09531, abs=1e-5)
    assert out["b"] == 0.0
    assert "c" not in out.index


def test_lagged_share_examples():
    df = imports([(0, "A", "S1", "p", "X", 30.0, 1.0), (0, "A", "S2", "p", "X", 70.0, 1.0),
                  (1, "A", "S1", "p", "X", 1.0, 1.0)])
    w = lagged_shares(df, "A", 1, "SupplierFirm")
    assert sorted(w.tolist()) == pytest.approx([0.3, 0.7], abs=1e-15)
    single = imports([(0, "A", "S1", "p", "X", 30.0, 1.0)])
    assert lagged_shares(single, "A", 1, "SupplierFirm").tolist() == [1.0]


def test_missing_base_year_raises():
    df = imports([(0, "A", "S1", "p", "X", 30.0, 1.0), (2, "A", "S1", "p", "X", 30.0, 1.0)])
    with pytest.raises(NoBaseYear):
        lagged_shares(df, "A", 2, "SupplierFirm")
    with pytest.raises(NoBaseYear):
        firm_shock(df, "A", 0, "SupplierFirm")


def test_fixed_base_uses_first_year():
    df = imports([(0, "A", "S1", "p", "X", 30.0, 1.0), (0, "A", "S2", "p", "X", 70.0, 1.0),
                  (2, "A", "S1", "p", "X", 30.0, 1.0)])
    w = lagged_shares(df, "A", 2, "SupplierFirm", base="fixed")
    assert sorted(w.tolist()) == pytest.approx([0.3, 0.7])


@pytest.mark.parametrize("w, x, value, imputed", [
    ([1.0], [0.1], 0.1, 0.0),
    ([0.5, 0.5], [0.2, 0.0], 0.1, 0.0),
    ([0.6, 0.4], [0.05, np.nan], 0.03, 0.4),
])
def test_shift_share_examples(w, x, value, imputed):
    v, imp = shift_share(w, x)
    assert v == pytest.approx(value, abs=1e-15)
    assert imp == pytest.approx(imputed, abs=1e-15)


def test_firm_shock_two_year_example():
    df = imports([(0, "A", "S1", "p", "X", 60.0, 60.0), (0, "A", "S2", "p", "X", 40.0, 40.0),
                  (1, "A", "S1", "p", "X", 70.0, 70.0 / math.exp(0.05)), (1, "A", "S3", "p", "X", 5.0, 1.0)])
    s = firm_shock(df, "A", 1, "SupplierFirm")
    assert s.value == pytest.approx(0.03, abs=1e-12)
    assert s.imputed_share == pytest.approx(0.4, abs=1e-15)
    assert s.n_links == 2


# --------------------------------------------------------------------------
# algebra


@given(st.integers(0, 2**32 - 1), st.floats(-3.0, 3.0), st.floats(-1.0, 1.0))
def test_linearity_and_translation(seed, a, delta):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    w = rng.dirichlet(np.ones(n))
    x = rng.normal(0, 0.2, n)
    x[rng.random(n) < 0.3] = np.nan
    v, imp = shift_share(w, x)
    assert shift_share(w, a * x)[0] == pytest.approx(a * v, abs=1e-12)
    assert shift_share(w, x + delta)[0] == pytest.approx(v + delta * (1 - imp), abs=1e-12)


def test_weights_sum_to_one(corpus):
    imp = corpus.imports
    firm_years = imp[["firm_id", "year"]].drop_duplicates().to_numpy()
    for firm, year in firm_years[:200]:
        w = lagged_shares(imp, firm, int(year) + 1, "SupplierFirm")
        assert math.fsum(w.tolist()) == pytest.approx(1.0, abs=1e-12)


def test_weights_ignore_current_year_data():
    df = imports([(0, "A", "S1", "p", "X", 30.0, 1.0), (0, "A", "S2", "p", "X", 70.0, 1.0),
                  (1, "A", "S1", "p", "X", 50.0, 1.0)])
    w0 = lagged_shares(df, "A", 1, "SupplierFirm")
    df.loc[df.year == 1, ["value_usd", "quantity"]] = [999.0, 3.0]
    assert lagged_shares(df, "A", 1, "SupplierFirm").equals(w0)


def test_single_buyer_keys_make_firm_and_average_coincide():
    rng = np.random.default_rng(0)
    rows = []
    for year in range(4):
        for firm, sup in [("A", "S1"), ("A", "S2"), ("B", "S3")]:
            rows.append((year, firm, sup, "p", "X", rng.uniform(10, 20), rng.uniform(1, 2)))
    s = build_shocks(imports(rows), variants=["SupplierFirm", "SupplierAverage"])
    a = s.loc[s.variant == "SupplierFirm", "value"].to_numpy()
    b = s.loc[s.variant == "SupplierAverage", "value"].to_numpy()
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_single_buyer_leave_one_out_is_imputed_zero():
    df = imports([(0, "A", "S1", "p", "X", 70.0, 7.0), (0, "A", "S2", "p", "X", 30.0, 3.0), (0, "B", "S2", "p", "X", 10.0, 1.0),
                  (1, "A", "S1", "p", "X", 80.0, 7.0), (1, "A", "S2", "p", "X", 30.0, 3.0), (1, "B", "S2", "p", "X", 12.0, 1.0)])
    s = build_shocks(df, variants=["SupplierLeaveOneOut"]).set_index("firm_id")
    assert s.loc["A", "imputed_share"] == pytest.approx(0.7, abs=1e-15)
    assert s.loc["A", "value"] == pytest.approx(0.3 * math.log(1.2), abs=1e-12)


# --------------------------------------------------------------------------
# full table


def test_build_shocks_agrees_with_firm_shock(corpus):
    table = build_shocks(corpus.imports).set_index(["firm_id", "year", "variant"])
    sample = table.reset_index().sample(40, random_state=1)
    for firm, year, variant in sample[["firm_id", "year", "variant"]].itertuples(index=False):
        one = firm_shock(corpus.imports, firm, int(year), variant)
        row = table.loc[(firm, year, variant)]
        assert row["value"] == pytest.approx(one.value, abs=1e-12)
        assert row["imputed_share"] == pytest.approx(one.imputed_share, abs=1e-12)
        assert row["n_links"] == one.n_links


def test_fixed_base_table_agrees_with_firm_shock(corpus):
    table = build_shocks(corpus.imports, variants=["SupplierFirm"], base="fixed").set_index(["firm_id", "year"])
    for (firm, year), row in table.head(20).iterrows():
        one = firm_shock(corpus.imports, firm, int(year), "SupplierFirm", base="fixed")
        assert row["value"] == pytest.approx(one.value, abs=1e-12)


def test_build_shocks_schema_and_ranges(corpus):
    table = build_shocks(corpus.imports)
    assert list(table.columns) == SHOCK_COLUMNS
    assert np.isfinite(table["value"]).all()
    assert table["imputed_share"].between(0, 1).all()
    assert set(table["variant"]) == {v.value for v in ShockVariant}


def test_build_shocks_row_order_invariant(corpus):
    a = build_shocks(corpus.imports)
    b = build_shocks(corpus.imports.sample(frac=1.0, random_state=5))
    pd.testing.assert_frame_equal(a, b)


def test_empty_imports_give_empty_table():
    assert list(build_shocks(imports([])).columns) == SHOCK_COLUMNS


def test_generated_shocks_recover_true_shocks(corpus):
    table = build_shocks(corpus.imports, variants=["SupplierFirm"])
    merged = table.merge(corpus.true_shocks, on=["firm_id", "year"])
    assert len(merged) > 0
    assert np.corrcoef(merged["value"], merged["shock"])[0, 1] > 0.9


# --------------------------------------------------------------------------
# descriptives


def test_stats_examples():
    shocks = pd.DataFrame({"firm_id": ["a", "b"], "year": [1, 1], "variant": ["SupplierFirm"] * 2, "value": [0.1, 0.3],
                           "n_links": [1, 1], "imputed_share": [0.0, 0.0]})
    summary, corr = shock_stats(shocks)
    assert summary.loc["SupplierFirm", "mean"] == pytest.approx(0.2)
    assert summary.loc["SupplierFirm", "p50"] == pytest.approx(0.2)
    assert corr.loc["SupplierFirm", "SupplierFirm"] == pytest.approx(1.0)


def test_stats_drop_zero_row_and_pattern(corpus):
    summary, corr = shock_stats(build_shocks(corpus.imports))
    assert "SupplierLeaveOneOut-NoZeros" in summary.index
    assert set(summary.columns) >= {"mean", "p5", "p25", "p50", "p75", "p95", "sd"}
    firm_avg = corr.loc["SupplierFirm", "SupplierAverage"]
    assert firm_avg > corr.loc["SupplierFirm", "CountryProduct"]
    assert firm_avg > corr.loc["SupplierAverage", "CountryProduct"]


def test_stats_reject_empty_table():
    with pytest.raises(ValueError):
        shock_stats(pd.DataFrame(columns=SHOCK_COLUMNS))
