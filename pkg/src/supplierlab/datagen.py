"""Synthetic customs corpus with a known data-generating process.

Imports: suppliers sell products from one source country at key-level prices
that follow log random walks. Each firm buys through a few (supplier, product,
source) links with Dirichlet value shares. Link quantities respond to the
firm's realised shift-share shock with a fixed semi-elasticity.

Exports: the firm's imported-input cost index moves one-for-one with its
shock; export quantities, prices and entry come from the closed-form line
optimum, so the export semi-elasticity on each destination is the model's
cost elasticity.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError
from .model import Destination, ModelParams, cost_elasticity, line_arrays, marginal_cost

IMPORT_COLUMNS = ["year", "firm_id", "supplier_id", "product_hs6", "source_country", "value_usd", "quantity"]
EXPORT_COLUMNS = ["year", "firm_id", "product_hs6", "dest_country", "value_usd", "quantity"]
COUNTRY_COLUMNS = ["country", "income_group"]
CLASS_COLUMNS = ["product_hs6", "scheme", "class"]
EMPLOYMENT_COLUMNS = ["firm_id", "year", "sector", "employment"]
NAME_COLUMNS = ["firm_id", "supplier_raw", "value_usd", "supplier_id"]
SCHEMES = ("rauch_lib", "rauch_con", "bernini")
CLASSES = ("differentiated", "reference", "homogeneous")

_STR = {"firm_id": str, "supplier_id": str, "product_hs6": str, "source_country": str,
        "dest_country": str, "country": str, "income_group": str, "scheme": str, "class": str,
        "sector": str, "supplier_raw": str}


@dataclass(frozen=True)
class TradeRecord:
    year: int
    firm_id: str
    counterparty: str
    product: str
    country: str
    value: float
    quantity: float
    direction: str

    def __post_init__(self):
        if not (self.value > 0 and self.quantity > 0 and math.isfinite(self.value / self.quantity)):
            raise ValueError(f"invalid trade record {self}")
        if self.direction not in ("import", "export"):
            raise ValueError(f"direction must be import or export, got {self.direction!r}")


@dataclass(frozen=True)
class WorldConfig:
    n_firms: int = 150
    n_suppliers: int = 120
    n_import_products: int = 30
    n_sources: int = 12
    n_export_products: int = 20
    n_destinations: int = 40
    n_years: int = 20
    links_min: int = 1
    links_max: int = 4
    export_products_max: int = 2
    dest_prob: float = 0.3
    z_log_sd: float = 0.3
    xi_log_sd: float = 0.3
    cost_log_sd: float = 0.2
    price_sd: float = 0.15
    link_price_sd: float = 0.05
    dirichlet_alpha: float = 1.0
    import_elasticity: float = -0.3
    cost_index: str = "relative"
    rho: float = 2.0
    alpha: float = 0.5
    wage: float = 1.0
    quality_cost: float = 1.0
    zeta_advanced: float = 0.6
    zeta_emerging: float = 0.1
    share_advanced: float = 0.5
    income_log_sd: float = 0.5
    income_scale: float = 1e6
    cell_demand_log_sd: float = 0.5
    fixed_cost_share: float = 0.3
    noise_sd: float = 0.1
    firm_noise_sd: float = 0.05
    attrition: float = 0.0
    name_variants: int = 2
    p_drop_char: float = 0.4
    p_suffix: float = 0.4
    p_country: float = 0.4
    seed: int = 0

    def __post_init__(self):
        counts = ("n_firms", "n_suppliers", "n_import_products", "n_sources", "n_export_products",
                  "n_destinations", "n_years", "links_min", "export_products_max")
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.links_max < self.links_min:
            raise ConfigError("links_max must be >= links_min")
        for name in ("z_log_sd", "xi_log_sd", "cost_log_sd", "price_sd", "link_price_sd", "income_log_sd",
                     "cell_demand_log_sd", "noise_sd", "firm_noise_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("dest_prob", "share_advanced", "attrition", "p_drop_char", "p_suffix", "p_country"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.dirichlet_alpha <= 0:
            raise ConfigError("dirichlet_alpha must be > 0")
        if self.fixed_cost_share < 0:
            raise ConfigError("fixed_cost_share must be >= 0")
        if self.cost_index not in ("relative", "cumulative"):
            raise ConfigError("cost_index must be 'relative' or 'cumulative'")
        if self.income_scale <= 0:
            raise ConfigError("income_scale must be > 0")
        if not (self.rho > 1 and 0 < self.alpha < 1):
            raise ConfigError("need rho > 1 and 0 < alpha < 1")
        for name in ("zeta_advanced", "zeta_emerging"):
            z = getattr(self, name)
            if not (z >= 0 and (self.rho - 1) * z < 1):
                raise ConfigError(f"{name} must satisfy 0 <= (rho - 1) * zeta < 1")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def model_params(self, destinations=()) -> ModelParams:
        return ModelParams(self.rho, self.alpha, self.wage, self.quality_cost, 0.9, tuple(destinations))

    def true_export_elasticity(self, income_group: str) -> float:
        """Semi-elasticity of export quantities to the cost shock on a destination group."""
        zeta = self.zeta_advanced if income_group == "advanced" else self.zeta_emerging
        return cost_elasticity(self.model_params(), Destination("x", zeta))


@dataclass
class World:
    config: WorldConfig
    params: ModelParams
    keys: pd.DataFrame          # supplier_id, product_hs6, source_country
    log_prices: np.ndarray      # (n_keys, n_years)
    firms: pd.DataFrame         # firm_id, z, xi, c0, sector
    links: pd.DataFrame         # firm index, key index, share, log_q0
    link_log_prices: np.ndarray  # (n_links, n_years): key price plus firm-specific deviation
    cells: pd.DataFrame         # firm index, product_hs6, destination index, demand
    countries: pd.DataFrame
    classifications: pd.DataFrame
    supplier_names: list[str]

    @property
    def price_shifts(self) -> np.ndarray:
        return np.diff(self.log_prices, axis=1)


@dataclass
class Corpus:
    imports: pd.DataFrame
    exports: pd.DataFrame
    countries: pd.DataFrame
    classifications: pd.DataFrame
    employment: pd.DataFrame | None = None
    names: pd.DataFrame | None = None
    true_shocks: pd.DataFrame | None = None

    def records(self) -> list[TradeRecord]:
        out = [
            TradeRecord(int(r.year), r.firm_id, r.supplier_id, r.product_hs6, r.source_country,
                        float(r.value_usd), float(r.quantity), "import")
            for r in self.imports.itertuples(index=False)
        ]
        out += [
            TradeRecord(int(r.year), r.firm_id, "", r.product_hs6, r.dest_country,
                        float(r.value_usd), float(r.quantity), "export")
            for r in self.exports.itertuples(index=False)
        ]
        return out


def records_to_frames(records) -> tuple[pd.DataFrame, pd.DataFrame]:
    imp = [(r.year, r.firm_id, r.counterparty, r.product, r.country, r.value, r.quantity)
           for r in records if r.direction == "import"]
    exp = [(r.year, r.firm_id, r.product, r.country, r.value, r.quantity)
           for r in records if r.direction == "export"]
    return pd.DataFrame(imp, columns=IMPORT_COLUMNS), pd.DataFrame(exp, columns=EXPORT_COLUMNS)


# --------------------------------------------------------------------------
# random streams


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


_WORLD, _FIRM, _NAMES = 0, 1, 2


def _labels(prefix: str, n: int, width: int | None = None) -> list[str]:
    width = width or max(2, len(str(n)))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(n)]


# --------------------------------------------------------------------------
# names

_SYLLABLES = ("KOR", "VAN", "TEX", "LUM", "BRA", "DEL", "MAR", "SIN", "TOR", "PEL", "GAR", "NOV", "RIX",
              "SOL", "TAN", "VER", "ZEN", "QUI", "HOL", "FEN", "MEC", "DOR", "KAL", "BEX", "JUN", "WOL",
              "PAX", "ORI", "LEV", "CAS", "MIN", "TRA", "YUK", "ARN", "OST", "ELB", "FIR", "GUS", "HAN")
_INDUSTRY = ("INDUSTRIES", "CHEMICALS", "MOTORS", "TEXTILES", "ELECTRONICS", "FOODS", "STEEL",
             "PLASTICS", "MACHINERY", "PHARMA", "SYSTEMS", "PAPER")
CORRUPT_SUFFIXES = ("S.A.", "LLC", "LTD.", "GMBH", "INC.", "CO., LTD", "S.R.L.", "CORP.", "PLC", "B.V.")
CORRUPT_COUNTRIES = ("(GERMANY)", "USA", "CHINA", "BRASIL", "ITALIA", "- FRANCE", "JAPAN", "U.K.")


def company_names(n: int, rng: np.random.Generator, min_core: int = 8) -> list[str]:
    """Distinct company-like names with a core of at least ``min_core`` letters."""
    out: list[str] = []
    seen = set()
    while len(out) < n:
        k = int(rng.integers(3, 5))
        core = "".join(_SYLLABLES[i] for i in rng.integers(0, len(_SYLLABLES), size=k))
        if len(core) < min_core or core in seen:
            continue
        seen.add(core)
        name = core.title()
        if rng.random() < 0.5:
            name += " " + _INDUSTRY[int(rng.integers(0, len(_INDUSTRY)))].title()
        out.append(name)
    return out


def corrupt_name(name: str, rng: np.random.Generator, p_drop: float, p_suffix: float, p_country: float) -> str:
    """One dirty variant of ``name``; at least one corruption is always applied."""
    while True:
        ops = rng.random(3) < np.array([p_drop, p_suffix, p_country])
        if ops.any() or (p_drop + p_suffix + p_country) == 0:
            break
    words = name.split(" ")
    if ops[0]:
        core = words[0]
        i = int(rng.integers(0, len(core)))
        words[0] = core[:i] + core[i + 1:]
    out = " ".join(words)
    if ops[1]:
        out += ", " + CORRUPT_SUFFIXES[int(rng.integers(0, len(CORRUPT_SUFFIXES)))]
    if ops[2]:
        out += " " + CORRUPT_COUNTRIES[int(rng.integers(0, len(CORRUPT_COUNTRIES)))]
    if rng.random() < 0.5:
        out = out.upper()
    return out


def synthetic_name_corpus(
    n_names: int = 1000,
    n_firms: int = 50,
    variants_per_source: int = 2,
    seed: int = 0,
    p_drop: float = 0.4,
    p_suffix: float = 0.4,
    p_country: float = 0.4,
) -> pd.DataFrame:
    """Raw supplier names grouped by importer, with the clean source of each.

    Columns: firm_id, supplier_raw, value_usd, source_name, is_variant.
    ``n_names`` counts every row, originals and variants.
    """
    rng = _stream(seed, _NAMES)
    per_source = 1 + variants_per_source
    n_sources = max(1, n_names // per_source)
    sources = company_names(n_sources, rng)
    firm_of = rng.integers(0, n_firms, size=n_sources)
    firms = _labels("F", n_firms)
    rows = []
    for src, fi in zip(sources, firm_of):
        value = float(np.round(rng.lognormal(10, 1), 2))
        rows.append((firms[fi], src, value, src, False))
        for _ in range(variants_per_source):
            raw = corrupt_name(src, rng, p_drop, p_suffix, p_country)
            rows.append((firms[fi], raw, float(np.round(rng.lognormal(8, 1), 2)), src, True))
    while len(rows) < n_names:
        src = sources[len(rows) % n_sources]
        fi = firm_of[len(rows) % n_sources]
        rows.append((firms[fi], corrupt_name(src, rng, p_drop, p_suffix, p_country), 1.0, src, True))
    return pd.DataFrame(rows[:n_names], columns=["firm_id", "supplier_raw", "value_usd", "source_name", "is_variant"])


# --------------------------------------------------------------------------
# world


def generate_world(config: WorldConfig) -> World:
    """Draw the time-invariant structure and the key-level price paths.

    Deterministic in ``config.seed``; firm-level draws come from one stream per
    firm so the world does not depend on iteration order.
    """
    if not isinstance(config, WorldConfig):
        raise ConfigError("generate_world expects a WorldConfig")
    cfg = config
    rng = _stream(cfg.seed, _WORLD)

    sources = _labels("S", cfg.n_sources)
    dests = _labels("D", cfg.n_destinations)
    imp_products = [f"{100000 + i:06d}" for i in range(cfg.n_import_products)]
    exp_products = [f"{800000 + i:06d}" for i in range(cfg.n_export_products)]
    suppliers = _labels("SUP", cfg.n_suppliers, width=max(4, len(str(cfg.n_suppliers))))

    # keys: each supplier sells 1-3 products from its home country
    key_rows = []
    home = rng.integers(0, cfg.n_sources, size=cfg.n_suppliers)
    for s, h in zip(suppliers, home):
        n_prod = int(rng.integers(1, 4))
        for p in rng.choice(cfg.n_import_products, size=min(n_prod, cfg.n_import_products), replace=False):
            key_rows.append((s, imp_products[p], sources[h]))
    keys = pd.DataFrame(key_rows, columns=["supplier_id", "product_hs6", "source_country"])
    n_keys = len(keys)
    innov = rng.normal(0.0, cfg.price_sd, size=(n_keys, cfg.n_years - 1)) if cfg.price_sd > 0 else np.zeros((n_keys, cfg.n_years - 1))
    log_p0 = rng.normal(0.0, 0.5, size=n_keys)
    log_prices = log_p0[:, None] + np.concatenate([np.zeros((n_keys, 1)), np.cumsum(innov, axis=1)], axis=1)

    # destinations and lookup tables
    advanced = rng.random(cfg.n_destinations) < cfg.share_advanced
    if cfg.n_destinations >= 2:
        advanced[0], advanced[1] = True, False
    incomes = cfg.income_scale * rng.lognormal(0.0, cfg.income_log_sd, size=cfg.n_destinations)
    src_groups = np.where(rng.random(cfg.n_sources) < 0.5, "advanced", "emerging")
    countries = pd.DataFrame(
        {"country": sources + dests,
         "income_group": list(src_groups) + ["advanced" if a else "emerging" for a in advanced]}
    )
    cls_rows = []
    for p in imp_products + exp_products:
        base = CLASSES[int(rng.integers(0, 3))]
        for scheme in SCHEMES:
            c = base if rng.random() < 0.8 else CLASSES[int(rng.integers(0, 3))]
            cls_rows.append((p, scheme, c))
    classifications = pd.DataFrame(cls_rows, columns=CLASS_COLUMNS)
    supplier_names = company_names(cfg.n_suppliers, rng)

    # firms, links and export cells from per-firm streams
    firm_ids = _labels("F", cfg.n_firms, width=max(4, len(str(cfg.n_firms))))
    firm_rows, link_rows, cell_rows, link_dev = [], [], [], []
    for i, fid in enumerate(firm_ids):
        fr = _stream(cfg.seed, _FIRM, i)
        z = fr.lognormal(0.0, cfg.z_log_sd) if cfg.z_log_sd > 0 else 1.0
        xi = fr.lognormal(0.0, cfg.xi_log_sd) if cfg.xi_log_sd > 0 else 1.0
        c0 = fr.lognormal(0.0, cfg.cost_log_sd) if cfg.cost_log_sd > 0 else 1.0
        sector = f"{int(fr.integers(1, 6)):02d}"
        firm_rows.append((fid, z, xi, c0, sector))
        n_links = int(fr.integers(cfg.links_min, cfg.links_max + 1))
        chosen = fr.choice(n_keys, size=min(n_links, n_keys), replace=False)
        shares = fr.dirichlet(np.full(len(chosen), cfg.dirichlet_alpha)) if len(chosen) > 1 else np.ones(1)
        spend = fr.lognormal(10.0, 1.0)
        dev = np.zeros((len(chosen), cfg.n_years))
        if cfg.link_price_sd > 0:
            dev[:, 1:] = np.cumsum(fr.normal(0.0, cfg.link_price_sd, size=(len(chosen), cfg.n_years - 1)), axis=1)
        link_dev.append(dev)
        for k, s in zip(chosen, shares):
            link_rows.append((i, int(k), float(s), math.log(s * spend) - log_prices[k, 0]))
        n_prod = int(fr.integers(1, cfg.export_products_max + 1))
        for p in fr.choice(cfg.n_export_products, size=min(n_prod, cfg.n_export_products), replace=False):
            mask = fr.random(cfg.n_destinations) < cfg.dest_prob
            if not mask.any():
                mask[int(fr.integers(0, cfg.n_destinations))] = True
            for d in np.flatnonzero(mask):
                demand = fr.lognormal(0.0, cfg.cell_demand_log_sd) if cfg.cell_demand_log_sd > 0 else 1.0
                cell_rows.append((i, exp_products[p], int(d), demand))
    firms = pd.DataFrame(firm_rows, columns=["firm_id", "z", "xi", "c0", "sector"])
    links = pd.DataFrame(link_rows, columns=["firm", "key", "share", "log_q0"])
    cells = pd.DataFrame(cell_rows, columns=["firm", "product_hs6", "dest", "demand"])

    # fixed costs: a share of the median baseline gross profit on each destination
    destinations = []
    free_params = cfg.model_params()
    cost0 = marginal_cost(free_params, firms["z"].to_numpy(), firms["c0"].to_numpy())
    for d in range(cfg.n_destinations):
        zeta = cfg.zeta_advanced if advanced[d] else cfg.zeta_emerging
        dest = Destination(dests[d], zeta, income=float(incomes[d]), income_group="advanced" if advanced[d] else "emerging")
        sel = cells["dest"].to_numpy() == d
        fixed = 0.0
        if sel.any() and cfg.fixed_cost_share > 0:
            fi = cells["firm"].to_numpy()[sel]
            gross = line_arrays(free_params, dest, firms["xi"].to_numpy()[fi], cost0[fi], cells["demand"].to_numpy()[sel])[3]
            fixed = cfg.fixed_cost_share * float(np.median(gross))
        destinations.append(Destination(dest.id, zeta, dest.income, 1.0, fixed, dest.income_group))
    params = cfg.model_params(destinations)

    link_log_prices = log_prices[links["key"].to_numpy()] + np.concatenate(link_dev)
    return World(cfg, params, keys, log_prices, firms, links, link_log_prices, cells, countries, classifications,
                 supplier_names)


# --------------------------------------------------------------------------
# transactions


def generate_transactions(world: World) -> Corpus:
    """Realise import and export flows year by year.

    The firm shock in year ``t`` weights the log price changes of its links by
    the firm's realised import-value shares in ``t - 1``; link quantities move
    by ``import_elasticity * shock``. The firm cost index is the base cost times
    the one-period price relative (``cost_index="relative"``) or the chained
    index (``"cumulative"``). A link active in ``t - 1`` drops out in ``t`` with probability
    ``attrition`` and comes back the year after.
    """
    cfg = world.config
    n_years = cfg.n_years
    firms, links, cells = world.firms, world.links, world.cells
    n_firms, n_links, n_cells = len(firms), len(links), len(cells)
    lf = links["firm"].to_numpy()
    lk = links["key"].to_numpy()
    log_q0 = links["log_q0"].to_numpy()
    lp = world.link_log_prices
    dlp = np.diff(lp, axis=1)

    # per-firm streams for the flow-level randomness
    att_u = np.empty((n_links, n_years))
    imp_noise = np.zeros((n_links, n_years))
    exp_noise = np.zeros((n_cells, n_years))
    firm_noise = np.zeros((n_firms, n_years))
    by_firm_links = np.argsort(lf, kind="stable")
    cf = cells["firm"].to_numpy()
    by_firm_cells = np.argsort(cf, kind="stable")
    link_bounds = np.searchsorted(lf[by_firm_links], np.arange(n_firms + 1))
    cell_bounds = np.searchsorted(cf[by_firm_cells], np.arange(n_firms + 1))
    for i in range(n_firms):
        fr = _stream(cfg.seed, _FIRM, i, 1)
        li = by_firm_links[link_bounds[i]:link_bounds[i + 1]]
        ci = by_firm_cells[cell_bounds[i]:cell_bounds[i + 1]]
        att_u[li] = fr.random((len(li), n_years))
        if cfg.noise_sd > 0:
            imp_noise[li] = fr.normal(0.0, cfg.noise_sd, size=(len(li), n_years))
            exp_noise[ci] = fr.normal(0.0, cfg.noise_sd, size=(len(ci), n_years))
        if cfg.firm_noise_sd > 0:
            firm_noise[i] = fr.normal(0.0, cfg.firm_noise_sd, size=n_years)

    active = np.ones((n_links, n_years), dtype=bool)
    for t in range(1, n_years):
        dropped = active[:, t - 1] & (att_u[:, t] < cfg.attrition)
        active[:, t] = ~dropped

    shock = np.zeros((n_firms, n_years))
    log_q = np.empty((n_links, n_years))
    log_q[:, 0] = log_q0 + imp_noise[:, 0]
    for t in range(1, n_years):
        value_prev = np.where(active[:, t - 1], np.exp(log_q[:, t - 1] + lp[:, t - 1]), 0.0)
        tot = np.bincount(lf, weights=value_prev, minlength=n_firms)
        share = np.divide(value_prev, tot[lf], out=np.zeros(n_links), where=tot[lf] > 0)
        shock[:, t] = np.bincount(lf, weights=share * dlp[:, t - 1], minlength=n_firms)
        log_q[:, t] = log_q0 + cfg.import_elasticity * shock[lf, t] + imp_noise[:, t]

    keys = world.keys
    firm_ids = firms["firm_id"].to_numpy()
    li, ti = np.nonzero(active)
    imports = pd.DataFrame(
        {
            "year": ti.astype(int),
            "firm_id": firm_ids[lf[li]],
            "supplier_id": keys["supplier_id"].to_numpy()[lk[li]],
            "product_hs6": keys["product_hs6"].to_numpy()[lk[li]],
            "source_country": keys["source_country"].to_numpy()[lk[li]],
            "value_usd": np.exp(log_q[li, ti] + lp[li, ti]),
            "quantity": np.exp(log_q[li, ti]),
        }
    )

    # exports from the closed form at the shocked cost index
    # relative: index = base cost times the one-period share-weighted price relative
    # cumulative: the chained index, a random walk in the shocks
    moves = np.cumsum(shock, axis=1) if cfg.cost_index == "cumulative" else shock
    log_c = np.log(firms["c0"].to_numpy())[:, None] + moves
    z = firms["z"].to_numpy()
    xi = firms["xi"].to_numpy()
    dests = world.params.destinations
    cd = cells["dest"].to_numpy()
    demand = cells["demand"].to_numpy()
    q = np.zeros((n_cells, n_years))
    price = np.zeros((n_cells, n_years))
    for d_idx, dest in enumerate(dests):
        sel = np.flatnonzero(cd == d_idx)
        if not len(sel):
            continue
        fi = cf[sel]
        cost = marginal_cost(world.params, z[fi, None], np.exp(log_c[fi]))
        _, x, p, _, _ = line_arrays(world.params, dest, xi[fi, None], cost, demand[sel, None])
        q[sel], price[sel] = x, p
    ci, ti = np.nonzero(q > 0)
    meas = q[ci, ti] * np.exp(exp_noise[ci, ti] + firm_noise[cf[ci], ti])
    exports = pd.DataFrame(
        {
            "year": ti.astype(int),
            "firm_id": firm_ids[cf[ci]],
            "product_hs6": cells["product_hs6"].to_numpy()[ci],
            "dest_country": np.array([d.id for d in dests], dtype=object)[cd[ci]],
            "value_usd": price[ci, ti] * meas,
            "quantity": meas,
        }
    )
    imports = imports.sort_values(IMPORT_COLUMNS[:5], kind="stable").reset_index(drop=True)
    exports = exports.sort_values(EXPORT_COLUMNS[:4], kind="stable").reset_index(drop=True)

    employment = pd.DataFrame(
        {
            "firm_id": np.repeat(firm_ids, n_years),
            "year": np.tile(np.arange(n_years), n_firms),
            "sector": np.repeat(firms["sector"].to_numpy(), n_years),
            "employment": np.round(np.repeat(50 * z**3 * xi, n_years) * np.exp(0.1 * np.tile(np.arange(n_years), n_firms) / n_years), 1),
        }
    )
    true_shocks = pd.DataFrame(
        {"firm_id": np.repeat(firm_ids, n_years), "year": np.tile(np.arange(n_years), n_firms), "shock": shock.ravel()}
    )
    names = _name_rows(world, imports)
    return Corpus(imports, exports, world.countries.copy(), world.classifications.copy(), employment, names, true_shocks)


def _name_rows(world: World, imports: pd.DataFrame) -> pd.DataFrame:
    cfg = world.config
    if imports.empty:
        return pd.DataFrame(columns=NAME_COLUMNS)
    rng = _stream(cfg.seed, _NAMES)
    by_sup = dict(zip(_labels("SUP", cfg.n_suppliers, width=max(4, len(str(cfg.n_suppliers)))), world.supplier_names))
    spend = imports.groupby(["firm_id", "supplier_id"], sort=True)["value_usd"].sum()
    rows = []
    for (fid, sid), val in spend.items():
        clean = by_sup[sid]
        rows.append((fid, clean, float(val), sid))
        for _ in range(cfg.name_variants):
            rows.append((fid, corrupt_name(clean, rng, cfg.p_drop_char, cfg.p_suffix, cfg.p_country), float(val) * 0.1, sid))
    return pd.DataFrame(rows, columns=NAME_COLUMNS)


def generate_corpus(config: WorldConfig) -> Corpus:
    return generate_transactions(generate_world(config))


# --------------------------------------------------------------------------
# files


def write_corpus(corpus, directory) -> list[Path]:
    """Write the customs CSV files; returns the paths written.

    ``corpus`` may also be a list of ``TradeRecord`` (lookup files are then
    written with headers only).
    """
    if not isinstance(corpus, Corpus):
        imp, exp = records_to_frames(corpus)
        corpus = Corpus(imp, exp, pd.DataFrame(columns=COUNTRY_COLUMNS), pd.DataFrame(columns=CLASS_COLUMNS))
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    tables = [
        ("imports.csv", corpus.imports, IMPORT_COLUMNS),
        ("exports.csv", corpus.exports, EXPORT_COLUMNS),
        ("countries.csv", corpus.countries, COUNTRY_COLUMNS),
        ("classifications.csv", corpus.classifications, CLASS_COLUMNS),
    ]
    if corpus.employment is not None:
        tables.append(("employment.csv", corpus.employment, EMPLOYMENT_COLUMNS))
    if corpus.names is not None:
        tables.append(("names.csv", corpus.names, NAME_COLUMNS))
    written = []
    for name, frame, cols in tables:
        path = out / name
        frame.reindex(columns=cols).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        written.append(path)
    return written


def _read(path: Path, cols: list[str]) -> pd.DataFrame:
    dtypes = {c: _STR[c] for c in cols if c in _STR}
    frame = pd.read_csv(path, dtype=dtypes, keep_default_na=False, na_values=[""], float_precision="round_trip",
                        encoding="utf-8")
    missing = [c for c in cols if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} lacks columns {missing}")
    return frame[cols]


def read_corpus(directory) -> Corpus:
    d = Path(directory)
    imports = _read(d / "imports.csv", IMPORT_COLUMNS)
    exports = _read(d / "exports.csv", EXPORT_COLUMNS)
    for frame in (imports, exports):
        frame["year"] = frame["year"].astype(int)
        frame["value_usd"] = frame["value_usd"].astype(float)
        frame["quantity"] = frame["quantity"].astype(float)
    countries = _read(d / "countries.csv", COUNTRY_COLUMNS)
    classifications = _read(d / "classifications.csv", CLASS_COLUMNS)
    employment = _read(d / "employment.csv", EMPLOYMENT_COLUMNS) if (d / "employment.csv").exists() else None
    names = _read(d / "names.csv", NAME_COLUMNS) if (d / "names.csv").exists() else None
    return Corpus(imports, exports, countries, classifications, employment, names)


def config_dict(config: WorldConfig) -> dict:
    return asdict(config)


def cpu_count() -> int:
    return os.cpu_count() or 1
