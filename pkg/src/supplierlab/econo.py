"""Panel regressions of trade outcomes on firm cost shocks.

Outcomes live on trade cells: (firm, product, source) for imports and
(firm, product, destination) for exports. The regressions absorb cell and
year fixed effects by alternating projections, estimate by pivoted QR and
report two-way cluster-robust standard errors.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg

from .datagen import Corpus
from .errors import DegenerateClusters, MissingLookup, NoConvergence, RankDeficient, SpecError
from .shocks import ShockVariant

OUTCOMES = ("imports", "exports", "survival")
FE_DIMS = ("cell", "year", "firm", "country")
CLUSTER_DIMS = ("firm", "country", "cell", "year")
Z95 = 1.959963984540054


# --------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class PartitionRule:
    """Sample restriction.

    ``kind`` is ``class`` (``value`` a product class, optionally prefixed with
    ``non-``; ``scheme`` picks the classification), ``income`` (``advanced`` or
    ``emerging`` for the partner country) or ``size`` (``above`` or ``below``
    the year-sector mean employment).
    """

    kind: str
    value: str
    scheme: str = "rauch_lib"

    def __post_init__(self):
        if self.kind not in ("class", "income", "size"):
            raise SpecError(f"unknown partition kind {self.kind!r}")
        if self.kind == "size" and self.value not in ("above", "below"):
            raise SpecError("size partition takes 'above' or 'below'")

    @classmethod
    def parse(cls, text: str) -> "PartitionRule":
        """``class:rauch_lib=differentiated``, ``income=advanced``, ``size=above``."""
        head, sep, value = text.partition("=")
        if not sep:
            raise SpecError(f"partition rule {text!r} lacks '='")
        kind, _, scheme = head.partition(":")
        kind, value = kind.strip(), value.strip()
        return cls(kind, value, scheme.strip() or "rauch_lib") if kind == "class" else cls(kind, value)

    def __str__(self) -> str:
        if self.kind == "class":
            return f"class:{self.scheme}={self.value}"
        return f"{self.kind}={self.value}"


def partition_mask(rows: pd.DataFrame, corpus: Corpus, rule: PartitionRule) -> tuple[np.ndarray, int]:
    """Rows kept by ``rule`` and the number excluded for lack of a lookup entry.

    ``rows`` needs product_hs6 (class), country (income) or firm_id and year
    (size).
    """
    if rule.kind == "class":
        cls = corpus.classifications
        if cls is None or not (cls["scheme"] == rule.scheme).any():
            raise MissingLookup(f"no classification for scheme {rule.scheme!r}")
        table = cls.loc[cls["scheme"] == rule.scheme].drop_duplicates("product_hs6").set_index("product_hs6")["class"]
        got = rows["product_hs6"].map(table)
        target = rule.value[4:] if rule.value.startswith("non-") else rule.value
        hit = (got == target) if not rule.value.startswith("non-") else (got != target)
    elif rule.kind == "income":
        c = corpus.countries
        if c is None or c.empty:
            raise MissingLookup("countries table is empty")
        got = rows["country"].map(c.drop_duplicates("country").set_index("country")["income_group"])
        hit = got == rule.value
    else:
        emp = corpus.employment
        if emp is None:
            raise MissingLookup("firm-size partition needs an employment table")
        e = emp.copy()
        e["mean"] = e.groupby(["year", "sector"])["employment"].transform("mean")
        e["group"] = np.where(e["employment"] > e["mean"], "above", "below")
        got = rows.merge(e[["firm_id", "year", "group"]].drop_duplicates(["firm_id", "year"]),
                         on=["firm_id", "year"], how="left")["group"].set_axis(rows.index)
        hit = got == rule.value
    known = got.notna().to_numpy()
    return (hit.to_numpy() & known), int((~known).sum())


def partition(corpus: Corpus, rule) -> tuple[Corpus, int]:
    """Subset of the trade flows satisfying ``rule``.

    Returns the reduced corpus and the count of flows dropped because their
    product, country or firm-year is missing from the lookup table.
    """
    rule = rule if isinstance(rule, PartitionRule) else PartitionRule.parse(rule)
    imp = corpus.imports.rename(columns={"source_country": "country"})
    exp = corpus.exports.rename(columns={"dest_country": "country"})
    keep_i, bad_i = partition_mask(imp, corpus, rule)
    keep_e, bad_e = partition_mask(exp, corpus, rule)
    sub = dataclasses.replace(
        corpus,
        imports=corpus.imports.loc[keep_i].reset_index(drop=True),
        exports=corpus.exports.loc[keep_e].reset_index(drop=True),
    )
    return sub, bad_i + bad_e


# --------------------------------------------------------------------------
# specification and panel


@dataclass(frozen=True)
class RegressionSpec:
    outcome: str = "exports"
    horizon: int = 0
    variant: str = "SupplierFirm"
    outcome_lags: int = 2
    shock_lags: int = 0
    fixed_effects: tuple = ("cell", "year")
    cluster: tuple = ("firm", "country")
    partitions: tuple = ()
    extra_controls: tuple = ()
    extra_control_lags: int = 0
    tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        for name in ("fixed_effects", "cluster", "extra_controls"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.outcome not in OUTCOMES:
            raise SpecError(f"outcome must be one of {OUTCOMES}, got {self.outcome!r}")
        for name in ("horizon", "outcome_lags", "shock_lags", "extra_control_lags"):
            if getattr(self, name) < 0:
                raise SpecError(f"{name} must be >= 0")
        if not self.cluster:
            raise SpecError("at least one cluster dimension is required")
        if not 1 <= len(self.cluster) <= 2:
            raise SpecError("one or two cluster dimensions are supported")
        for c in self.cluster:
            if c not in CLUSTER_DIMS:
                raise SpecError(f"unknown cluster dimension {c!r}")
        if not self.fixed_effects:
            raise SpecError("at least one fixed-effect dimension is required")
        for f in self.fixed_effects:
            if f not in FE_DIMS:
                raise SpecError(f"unknown fixed effect {f!r}")
        if self.variant not in {v.value for v in ShockVariant}:
            raise SpecError(f"unknown shock variant {self.variant!r}")
        object.__setattr__(self, "partitions", tuple(
            p if isinstance(p, PartitionRule) else PartitionRule.parse(p) for p in self.partitions))

    @classmethod
    def from_mapping(cls, values: dict) -> "RegressionSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise SpecError(f"unknown spec keys: {sorted(unknown)}")
        kw = {}
        for k, v in values.items():
            if k in ("fixed_effects", "cluster", "partitions", "extra_controls") and isinstance(v, str):
                v = tuple(s.strip() for s in v.split(",") if s.strip())
            elif k in ("horizon", "outcome_lags", "shock_lags", "extra_control_lags", "max_iter"):
                v = int(v)
            elif k == "tol":
                v = float(v)
            kw[k] = v
        return cls(**kw)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["partitions"] = [str(p) for p in self.partitions]
        d["fixed_effects"] = list(self.fixed_effects)
        d["cluster"] = list(self.cluster)
        d["extra_controls"] = list(self.extra_controls)
        return d


@dataclass
class Panel:
    y: np.ndarray
    X: np.ndarray
    names: list[str]
    fe: dict
    clusters: dict
    rows: pd.DataFrame          # firm_id, product_hs6, country, year per observation


def _cell_table(corpus: Corpus, outcome: str) -> pd.DataFrame:
    if outcome == "imports":
        flows, country = corpus.imports, "source_country"
    else:
        flows, country = corpus.exports, "dest_country"
    return (flows.rename(columns={country: "country"})
            .groupby(["firm_id", "product_hs6", "country", "year"], sort=True)["quantity"].sum().reset_index())


def build_panel(corpus: Corpus, shocks: pd.DataFrame, spec: RegressionSpec, covariates: pd.DataFrame | None = None) -> Panel:
    """Regression sample for ``spec``.

    Observation (cell, t) needs the cell active in t. Intensive outcomes are
    log quantity in t + horizon and require the cell active in every year from
    t to t + horizon; survival is 1 when the cell is active in t + horizon and
    needs t + horizon inside the sample period. Outcome lags are log quantity
    in t-1, t-2, ... (the cell must be active then); shock lags use the firm
    shock in earlier years. Rows missing any required value are dropped.
    """
    cells = _cell_table(corpus, spec.outcome)
    if cells.empty:
        raise SpecError("no trade flows for this outcome")
    y0, y1 = int(cells["year"].min()), int(cells["year"].max())
    n_years = y1 - y0 + 1
    if spec.horizon + max(spec.outcome_lags, spec.shock_lags, spec.extra_control_lags) >= n_years:
        raise SpecError(
            f"horizon {spec.horizon} with {spec.outcome_lags} outcome / {spec.shock_lags} shock lags "
            f"needs more than the {n_years} years in the data")

    keys = cells[["firm_id", "product_hs6", "country"]].drop_duplicates().reset_index(drop=True)
    keys["cell"] = np.arange(len(keys))
    cells = cells.merge(keys, on=["firm_id", "product_hs6", "country"])
    logq = np.full((len(keys), n_years), np.nan)
    logq[cells["cell"].to_numpy(), cells["year"].to_numpy() - y0] = np.log(cells["quantity"].to_numpy())
    active = ~np.isnan(logq)

    sh = shocks.loc[shocks["variant"] == ShockVariant(spec.variant).value]
    firms = pd.Index(keys["firm_id"].unique())
    firm_of_cell = firms.get_indexer(keys["firm_id"])
    shock = np.full((len(firms), n_years), np.nan)
    fi = firms.get_indexer(sh["firm_id"])
    yi = sh["year"].to_numpy().astype(int) - y0
    ok = (fi >= 0) & (yi >= 0) & (yi < n_years)
    shock[fi[ok], yi[ok]] = sh["value"].to_numpy()[ok]

    h = spec.horizon
    cols, names = [], []
    ci, ti = np.nonzero(active)
    keep = np.ones(len(ci), dtype=bool)
    keep &= ti + h < n_years
    tj = np.minimum(ti + h, n_years - 1)
    if spec.outcome == "survival":
        y = active[ci, tj].astype(float)
    else:
        for s in range(1, h + 1):
            keep &= active[ci, np.minimum(ti + s, n_years - 1)]
        y = logq[ci, tj]

    s_now = shock[firm_of_cell[ci], ti]
    cols.append(s_now)
    names.append("shock")
    for L in range(1, spec.shock_lags + 1):
        cols.append(np.where(ti - L >= 0, shock[firm_of_cell[ci], np.maximum(ti - L, 0)], np.nan))
        names.append(f"shock_l{L}")
    for L in range(1, spec.outcome_lags + 1):
        cols.append(np.where(ti - L >= 0, logq[ci, np.maximum(ti - L, 0)], np.nan))
        names.append(f"logq_l{L}")

    rows = pd.DataFrame({
        "firm_id": keys["firm_id"].to_numpy()[ci],
        "product_hs6": keys["product_hs6"].to_numpy()[ci],
        "country": keys["country"].to_numpy()[ci],
        "year": ti + y0,
        "cell": ci,
    })
    if spec.extra_controls:
        if covariates is None:
            raise MissingLookup("extra controls requested without a covariates table")
        missing = [c for c in spec.extra_controls if c not in covariates.columns]
        if missing:
            raise MissingLookup(f"covariates lack {missing}")
        cov = covariates.set_index(["country", "year"])
        for name in spec.extra_controls:
            for L in range(spec.extra_control_lags + 1):
                idx = pd.MultiIndex.from_arrays([rows["country"], rows["year"] - L])
                cols.append(cov[name].reindex(idx).to_numpy(dtype=float))
                names.append(name if L == 0 else f"{name}_l{L}")

    X = np.column_stack(cols)
    keep &= np.isfinite(y) & np.isfinite(X).all(axis=1)
    rows = rows.loc[keep].reset_index(drop=True)
    y, X = y[keep], X[keep]
    return Panel(y, X, names, _labels(rows, spec.fixed_effects), _labels(rows, spec.cluster), rows)


def _labels(rows: pd.DataFrame, dims) -> dict:
    out = {}
    for d in dims:
        col = {"firm": "firm_id"}.get(d, d)
        out[d] = pd.factorize(rows[col], sort=True)[0]
    return out


def _subset(panel: Panel, mask: np.ndarray) -> Panel:
    return Panel(panel.y[mask], panel.X[mask], panel.names,
                 {k: pd.factorize(v[mask], sort=True)[0] for k, v in panel.fe.items()},
                 {k: pd.factorize(v[mask], sort=True)[0] for k, v in panel.clusters.items()},
                 panel.rows.loc[mask].reset_index(drop=True))


def drop_singletons(groups) -> np.ndarray:
    """Mask of observations kept after repeatedly removing singleton FE groups."""
    groups = [np.asarray(g) for g in groups]
    keep = np.ones(len(groups[0]), dtype=bool)
    while True:
        bad = np.zeros_like(keep)
        for g in groups:
            counts = np.bincount(g[keep], minlength=g.max() + 1 if len(g) else 0)
            bad |= keep & (counts[g] == 1)
        if not bad.any():
            return keep
        keep &= ~bad


# --------------------------------------------------------------------------
# estimation


def demean_hdfe(matrix, groups, tol: float = 1e-10, max_iter: int = 10_000, raise_on_fail: bool = True):
    """Residualise the columns of ``matrix`` on several sets of group dummies.

    Alternates group-mean subtraction across the dimensions in ``groups``
    (integer codes, one array per dimension) until the largest change in a
    sweep is at most ``tol``. Returns ``(demeaned, iterations, converged)``.
    A single dimension is exact after one sweep.
    """
    if not groups:
        raise ValueError("need at least one fixed-effect dimension")
    x = np.array(matrix, dtype=float, copy=True)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    codes = [pd.factorize(np.asarray(g))[0] for g in groups]
    sizes = [np.bincount(c).astype(float) for c in codes]

    def sweep(arr):
        change = 0.0
        for c, n in zip(codes, sizes):
            for j in range(arr.shape[1]):
                means = np.bincount(c, weights=arr[:, j], minlength=len(n)) / n
                step = means[c]
                arr[:, j] -= step
                change = max(change, float(np.max(np.abs(step))) if len(step) else 0.0)
        return change

    if len(codes) == 1:
        sweep(x)
        return (x[:, 0] if squeeze else x), 1, True
    change = np.inf
    it = 0
    while it < max_iter:
        it += 1
        change = sweep(x)
        if change <= tol:
            return (x[:, 0] if squeeze else x), it, True
    if raise_on_fail:
        raise NoConvergence(f"demeaning did not converge in {max_iter} sweeps (last change {change:.3g})", it, change)
    return (x[:, 0] if squeeze else x), it, False


@dataclass
class OLSFit:
    coef: np.ndarray
    resid: np.ndarray
    rank: int


def ols(y, X, names=None, rcond: float | None = None) -> OLSFit:
    """Least squares by column-pivoted QR.

    Raises ``RankDeficient`` naming the columns the pivoting leaves beyond the
    numerical rank.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n < k:
        raise RankDeficient(names)
    q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rcond = rcond if rcond is not None else max(n, k) * np.finfo(float).eps * 1e3
    rank = int(np.sum(diag > rcond * diag[0])) if k and diag[0] > 0 else 0
    if rank < k:
        bad = [names[j] for j in piv[rank:]]
        raise RankDeficient(bad)
    b = linalg.solve_triangular(r, q.T @ y)
    coef = np.empty(k)
    coef[piv] = b
    return OLSFit(coef, y - X @ coef, rank)


def _cluster_meat(scores: np.ndarray, codes: np.ndarray) -> tuple[np.ndarray, int]:
    g = pd.factorize(codes)[0]
    n_g = int(g.max()) + 1 if len(g) else 0
    sums = np.column_stack([np.bincount(g, weights=scores[:, j], minlength=n_g) for j in range(scores.shape[1])])
    return sums.T @ sums, n_g


def _pair_codes(a, b) -> np.ndarray:
    return pd.factorize(pd.MultiIndex.from_arrays([np.asarray(a), np.asarray(b)]))[0]


def cluster_vcov(resid, X, clusters) -> np.ndarray:
    """One-way cluster-robust sandwich with factor G/(G-1) * (N-1)/(N-K)."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    e = np.asarray(resid, dtype=float)
    n, k = X.shape
    bread = linalg.inv(X.T @ X)
    meat, g = _cluster_meat(X * e[:, None], np.asarray(clusters))
    if g < 2:
        raise DegenerateClusters(f"need at least 2 clusters, got {g}")
    factor = g / (g - 1) * (n - 1) / (n - k)
    return factor * bread @ meat @ bread


def cluster2_vcov(resid, X, cluster_a, cluster_b) -> tuple[np.ndarray, bool]:
    """Two-way cluster-robust variance ``V_A + V_B - V_AB``.

    Each term carries its own small-sample factor. Negative eigenvalues of
    the sum are set to zero; the flag reports whether that happened.
    """
    a, b = np.asarray(cluster_a), np.asarray(cluster_b)
    for name, c in (("first", a), ("second", b)):
        if len(np.unique(c)) < 2:
            raise DegenerateClusters(f"{name} cluster dimension has fewer than 2 clusters")
    v = cluster_vcov(resid, X, a) + cluster_vcov(resid, X, b) - cluster_vcov(resid, X, _pair_codes(a, b))
    v = (v + v.T) / 2
    w, vec = np.linalg.eigh(v)
    if w.min() < 0:
        return (vec * np.clip(w, 0, None)) @ vec.T, True
    return v, False


def hc1_vcov(resid, X) -> np.ndarray:
    """Heteroskedasticity-robust sandwich with factor N/(N-K)."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    e = np.asarray(resid, dtype=float)
    n, k = X.shape
    bread = linalg.inv(X.T @ X)
    s = X * e[:, None]
    return n / (n - k) * bread @ (s.T @ s) @ bread


# --------------------------------------------------------------------------
# pipeline


@dataclass
class RegressionResult:
    names: list[str]
    coef: np.ndarray
    vcov: np.ndarray
    n_obs: int
    fe_groups: dict
    n_singletons: int
    iterations: int
    converged: bool
    psd_repaired: bool
    n_clusters: dict
    spec: RegressionSpec
    n_excluded: int = 0
    sanity_flag: bool = False
    hc1_se: np.ndarray | None = field(default=None, repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0, None))

    def coefficient(self, name: str = "shock") -> float:
        return float(self.coef[self.names.index(name)])

    def std_error(self, name: str = "shock") -> float:
        return float(self.se[self.names.index(name)])

    def conf_int(self, name: str = "shock", z: float = Z95) -> tuple[float, float]:
        b, s = self.coefficient(name), self.std_error(name)
        return b - z * s, b + z * s

    def table(self) -> pd.DataFrame:
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.coef / se
        return pd.DataFrame({"name": self.names, "estimate": self.coef, "se": se, "t": t})

    def to_text(self) -> str:
        lines = ["[spec]"]
        lines += [f"{k} = {json.dumps(v)}" for k, v in self.spec.as_dict().items()]
        lines.append("[coefficients]")
        lines.append(f"{'name':<16}{'estimate':>16}{'se':>16}{'t':>10}")
        for r in self.table().itertuples(index=False):
            lines.append(f"{r.name:<16}{r.estimate:>16.8g}{r.se:>16.8g}{r.t:>10.3f}")
        lines.append("[diagnostics]")
        lines.append(f"n_obs = {self.n_obs}")
        lines.append(f"singletons_dropped = {self.n_singletons}")
        lines.append(f"excluded_by_partition_lookup = {self.n_excluded}")
        for k, v in self.fe_groups.items():
            lines.append(f"fe_groups.{k} = {v}")
        for k, v in self.n_clusters.items():
            lines.append(f"clusters.{k} = {v}")
        lines.append(f"demean_iterations = {self.iterations}")
        lines.append(f"converged = {str(self.converged).lower()}")
        lines.append(f"vcov_psd_repaired = {str(self.psd_repaired).lower()}")
        lines.append(f"sanity_flag = {str(self.sanity_flag).lower()}")
        return "\n".join(lines) + "\n"

    def write(self, directory, stem: str = "results") -> list[Path]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        txt, csv = out / f"{stem}.txt", out / f"{stem}.csv"
        txt.write_text(self.to_text(), encoding="utf-8")
        self.table().to_csv(csv, index=False, lineterminator="\n")
        return [txt, csv]


def run_spec(corpus: Corpus, shocks: pd.DataFrame, spec: RegressionSpec, covariates: pd.DataFrame | None = None) -> RegressionResult:
    """Build the panel, apply partitions, absorb fixed effects, estimate, cluster."""
    panel = build_panel(corpus, shocks, spec, covariates)
    n_excluded = 0
    if spec.partitions:
        mask = np.ones(len(panel.y), dtype=bool)
        for rule in spec.partitions:
            m, bad = partition_mask(panel.rows, corpus, rule)
            mask &= m
            n_excluded += bad
        panel = _subset(panel, mask)
    if len(panel.y) == 0:
        raise SpecError("empty regression sample")

    keep = drop_singletons(list(panel.fe.values()))
    n_single = int((~keep).sum())
    if n_single:
        panel = _subset(panel, keep)
    if len(panel.y) <= len(panel.names):
        raise SpecError("too few observations after dropping singletons")

    data = np.column_stack([panel.y, panel.X])
    dm, iters, conv = demean_hdfe(data, list(panel.fe.values()), spec.tol, spec.max_iter, raise_on_fail=False)
    fit = ols(dm[:, 0], dm[:, 1:], panel.names)
    Xd = dm[:, 1:]
    dims = list(spec.cluster)
    if len(dims) == 2:
        vcov, repaired = cluster2_vcov(fit.resid, Xd, panel.clusters[dims[0]], panel.clusters[dims[1]])
    else:
        vcov, repaired = cluster_vcov(fit.resid, Xd, panel.clusters[dims[0]]), False

    sanity = False
    if spec.outcome == "survival":
        j = panel.names.index("shock")
        lo, hi = np.quantile(panel.X[:, j], [0.05, 0.95])
        p = panel.y.mean() + fit.coef[j] * (np.array([lo, hi]) - panel.X[:, j].mean())
        sanity = bool(np.any(p < -0.5) or np.any(p > 1.5))

    return RegressionResult(
        names=panel.names,
        coef=fit.coef,
        vcov=vcov,
        n_obs=len(panel.y),
        fe_groups={k: int(v.max()) + 1 for k, v in panel.fe.items()},
        n_singletons=n_single,
        iterations=iters,
        converged=conv,
        psd_repaired=repaired,
        n_clusters={k: int(v.max()) + 1 for k, v in panel.clusters.items()},
        spec=spec,
        n_excluded=n_excluded,
        sanity_flag=sanity,
        hc1_se=np.sqrt(np.diag(hc1_vcov(fit.resid, Xd))),
    )
