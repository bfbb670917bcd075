"""Firm-level import-cost shocks built as shift-share averages of unit-value growth.

For firm ``i`` in year ``t``::

    shock_it = sum_k s_ik,t-1 * dlog p_k,t

with ``s`` the firm's import-value shares over keys ``k`` in the base year and
``dlog p`` the log change of a unit value. The key, and which flows feed the
unit value, depend on the variant. Missing shifts count as zero; their weight
is reported as ``imputed_share``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import NoBaseYear

FIRM, SUPPLIER, PRODUCT, SOURCE = "firm_id", "supplier_id", "product_hs6", "source_country"
SHOCK_COLUMNS = ["firm_id", "year", "variant", "value", "n_links", "imputed_share"]


class ShockVariant(str, enum.Enum):
    SupplierFirm = "SupplierFirm"
    SupplierAverage = "SupplierAverage"
    SupplierLeaveOneOut = "SupplierLeaveOneOut"
    CountryProduct = "CountryProduct"

    @property
    def key(self) -> list[str]:
        """Columns of the exposure key shared by weights and shifts."""
        if self is ShockVariant.CountryProduct:
            return [PRODUCT, SOURCE]
        return [SUPPLIER, PRODUCT, SOURCE]

    @property
    def firm_specific_price(self) -> bool:
        return self in (ShockVariant.SupplierFirm, ShockVariant.SupplierLeaveOneOut)


ALL_VARIANTS = tuple(ShockVariant)


@dataclass(frozen=True)
class FirmShock:
    firm_id: str
    year: int
    variant: ShockVariant
    value: float
    n_links: int
    imputed_share: float


def _variant(v) -> ShockVariant:
    return v if isinstance(v, ShockVariant) else ShockVariant(v)


def shift_share(weights, shifts) -> tuple[float, float]:
    """Weighted sum of shifts with ``nan`` shifts imputed as zero.

    Returns ``(value, imputed_share)``. Compensated summation keeps the result
    independent of the order of the keys.
    """
    w = np.asarray(weights, dtype=float)
    x = np.asarray(shifts, dtype=float)
    missing = np.isnan(x)
    value = math.fsum((w * np.where(missing, 0.0, x)).tolist())
    return value, math.fsum(w[missing].tolist())


# --------------------------------------------------------------------------
# unit values and shifts


def _flows(imports: pd.DataFrame, cols: list[str]) -> pd.DataFrame:
    return imports.groupby(cols + ["year"], sort=True, observed=True)[["value_usd", "quantity"]].sum().reset_index()


def unit_values(imports: pd.DataFrame, variant, rest_of_world: pd.DataFrame | None = None) -> pd.DataFrame:
    """Unit value (total value / total quantity) per key and year.

    The table is keyed by ``firm_id`` as well for the firm-specific variants.
    For the leave-one-out variant the price seen by firm ``i`` aggregates
    every other buyer's flows; when ``i`` is the only buyer no row is emitted.
    ``rest_of_world`` (columns product_hs6, source_country, year, price)
    replaces customs unit values for the country-product variant.
    """
    variant = _variant(variant)
    key = variant.key
    if variant is ShockVariant.CountryProduct and rest_of_world is not None:
        return rest_of_world[key + ["year", "price"]].copy()
    if variant is ShockVariant.SupplierFirm:
        flows = _flows(imports, [FIRM] + key)
    elif variant is ShockVariant.SupplierLeaveOneOut:
        own = _flows(imports, [FIRM] + key)
        total = _flows(imports, key)
        buyers = own.groupby(key + ["year"], observed=True)[FIRM].nunique().rename("n_buyers").reset_index()
        total = total.merge(buyers, on=key + ["year"])
        # every firm that ever buys the key needs its view in every year the key trades
        pairs = own[[FIRM] + key].drop_duplicates()
        flows = pairs.merge(total, on=key).merge(
            own.rename(columns={"value_usd": "own_value", "quantity": "own_qty"}),
            on=[FIRM] + key + ["year"],
            how="left",
        )
        present = flows["own_value"].notna()
        others = flows["n_buyers"] - present.astype(int)
        flows["value_usd"] = flows["value_usd"] - flows["own_value"].fillna(0.0)
        flows["quantity"] = flows["quantity"] - flows["own_qty"].fillna(0.0)
        flows = flows.loc[others > 0, [FIRM] + key + ["year", "value_usd", "quantity"]]
    else:
        flows = _flows(imports, key)
    out = flows.drop(columns=["value_usd", "quantity"])
    out["price"] = flows["value_usd"].to_numpy() / flows["quantity"].to_numpy()
    return out.reset_index(drop=True)


def price_shifts(prices: pd.DataFrame) -> pd.DataFrame:
    """Log change of ``price`` between consecutive years within each key.

    A key-year without a price in the previous year gets no row.
    """
    ids = [c for c in prices.columns if c not in ("year", "price")]
    prev = prices.assign(year=prices["year"] + 1).rename(columns={"price": "price_prev"})
    out = prices.merge(prev, on=ids + ["year"], how="inner")
    out["shift"] = np.log(out["price"]) - np.log(out["price_prev"])
    return out[ids + ["year", "shift"]].sort_values(ids + ["year"]).reset_index(drop=True)


# --------------------------------------------------------------------------
# shares


def lagged_shares(imports: pd.DataFrame, firm, year: int, variant, base: str = "lagged") -> pd.Series:
    """Firm's import-value shares over keys in the base year.

    ``base="lagged"`` uses ``year - 1``; ``base="fixed"`` uses the firm's
    first import year (which must precede ``year``).
    """
    variant = _variant(variant)
    own = imports.loc[imports[FIRM] == firm]
    base_year = _base_year(own["year"], year, base)
    if base_year is None:
        raise NoBaseYear(f"firm {firm!r} has no imports in the base year for {year}")
    rows = own.loc[own["year"] == base_year]
    by_key = rows.groupby(variant.key, observed=True)["value_usd"].sum()
    return by_key / math.fsum(by_key.tolist())


def _base_year(years: pd.Series, year: int, base: str):
    if base == "lagged":
        return year - 1 if (years == year - 1).any() else None
    if base == "fixed":
        first = years.min() if len(years) else None
        return first if first is not None and first < year else None
    raise ValueError(f"unknown base {base!r}")


def firm_shock(imports: pd.DataFrame, firm, year: int, variant, base: str = "lagged", rest_of_world=None) -> FirmShock:
    """Shock of one firm-year, assembled from the building blocks above."""
    variant = _variant(variant)
    weights = lagged_shares(imports, firm, year, variant, base)
    shifts = price_shifts(unit_values(imports, variant, rest_of_world))
    if variant.firm_specific_price:
        shifts = shifts.loc[shifts[FIRM] == firm].drop(columns=FIRM)
    shifts = shifts.loc[shifts["year"] == year].set_index(variant.key)["shift"]
    aligned = shifts.reindex(weights.index)
    value, imputed = shift_share(weights.to_numpy(), aligned.to_numpy())
    return FirmShock(firm, year, variant, value, len(weights), imputed)


# --------------------------------------------------------------------------
# all firm-years at once


def build_shocks(
    imports: pd.DataFrame,
    variants=ALL_VARIANTS,
    base: str = "lagged",
    rest_of_world: pd.DataFrame | None = None,
) -> pd.DataFrame:
    """Shock table for every firm-year with a base year, one row per variant.

    Columns follow ``shocks.csv``: firm_id, year, variant, value, n_links,
    imputed_share.
    """
    if imports.empty:
        return pd.DataFrame(columns=SHOCK_COLUMNS)
    last_year = int(imports["year"].max())
    frames = []
    for v in map(_variant, variants):
        key = v.key
        links = _flows(imports, [FIRM] + key)
        tot = links.groupby([FIRM, "year"])["value_usd"].transform("sum")
        links["weight"] = links["value_usd"] / tot
        if base == "lagged":
            w = links[[FIRM] + key + ["year", "weight"]].assign(year=links["year"] + 1)
            w = w.loc[w["year"] <= last_year]
        elif base == "fixed":
            first = links.groupby(FIRM)["year"].transform("min")
            w0 = links.loc[links["year"] == first, [FIRM] + key + ["year", "weight"]]
            years = pd.DataFrame({"year": np.arange(int(imports["year"].min()) + 1, last_year + 1)})
            w = w0.drop(columns="year").merge(w0[[FIRM, "year"]].drop_duplicates().rename(columns={"year": "y0"}), on=FIRM)
            w = w.merge(years, how="cross")
            w = w.loc[w["year"] > w["y0"]].drop(columns="y0")
        else:
            raise ValueError(f"unknown base {base!r}")

        shifts = price_shifts(unit_values(imports, v, rest_of_world))
        on = ([FIRM] if v.firm_specific_price else []) + key + ["year"]
        merged = w.merge(shifts, on=on, how="left")
        merged["missing"] = merged["shift"].isna()
        merged["contrib"] = merged["weight"] * merged["shift"].fillna(0.0)
        merged["imp_w"] = merged["weight"].where(merged["missing"], 0.0)
        # pandas groupby sums are Kahan-compensated
        agg = merged.groupby([FIRM, "year"], sort=True).agg(
            value=("contrib", "sum"), n_links=("weight", "size"), imputed_share=("imp_w", "sum")
        )
        agg = agg.reset_index()
        agg["imputed_share"] = agg["imputed_share"].clip(0.0, 1.0)
        agg.insert(2, "variant", v.value)
        frames.append(agg)
    out = pd.concat(frames, ignore_index=True)[SHOCK_COLUMNS]
    out["year"] = out["year"].astype(int)
    out["n_links"] = out["n_links"].astype(int)
    return out


# --------------------------------------------------------------------------
# descriptives

_QUANTILES = {"p5": 0.05, "p25": 0.25, "p50": 0.50, "p75": 0.75, "p95": 0.95}


def _describe(values: pd.Series) -> dict:
    row = {"n": int(values.size), "mean": values.mean()}
    for name, q in _QUANTILES.items():
        row[name] = values.quantile(q)
    row["sd"] = values.std(ddof=1)
    return row


def shock_stats(shocks: pd.DataFrame, drop_zeros_loo: bool = True) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Summary table per variant and the cross-variant correlation matrix.

    Correlations use the firm-years where every variant is present. With
    ``drop_zeros_loo`` an extra row describes the leave-one-out shock without
    its exact zeros.
    """
    if shocks.empty:
        raise ValueError("shock table is empty")
    rows = {}
    for v, grp in shocks.groupby("variant", sort=False):
        rows[v] = _describe(grp["value"])
    loo = ShockVariant.SupplierLeaveOneOut.value
    if drop_zeros_loo and loo in rows:
        vals = shocks.loc[shocks["variant"] == loo, "value"]
        rows[f"{loo}-NoZeros"] = _describe(vals[vals != 0])
    summary = pd.DataFrame.from_dict(rows, orient="index")
    summary.index.name = "variant"
    wide = shocks.pivot_table(index=["firm_id", "year"], columns="variant", values="value", aggfunc="first").dropna()
    order = [v.value for v in ALL_VARIANTS if v.value in wide.columns]
    corr = wide[order].corr()
    return summary, corr
