"""Search for foreign suppliers and the resulting supplier-efficiency dynamics."""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ConfigError, DomainError, NonMonotoneGain
from .model import Firm, ModelParams, line_arrays, marginal_cost, validate_params

NEVER_SEARCHES = math.inf

SCOPE_CATEGORIES = ("none", "P-only", "R-only", "both")


@dataclass(frozen=True)
class SupplierMarket:
    """Distribution of supplier efficiencies on ``[c_low, c_high]`` plus search cost.

    ``family`` is ``"uniform"`` or ``"truncated-lognormal"``; the latter uses
    ``log_mean``/``log_sd`` of the untruncated normal in logs.
    """

    c_low: float = 0.5
    c_high: float = 2.0
    search_cost: float = 1.0
    family: str = "uniform"
    log_mean: float = 0.0
    log_sd: float = 0.5

    def __post_init__(self):
        if not 0 < self.c_low < self.c_high:
            raise ConfigError(f"need 0 < c_low < c_high, got {self.c_low}, {self.c_high}")
        if not self.search_cost >= 0:
            raise ConfigError("search_cost must be >= 0")
        if self.family not in ("uniform", "truncated-lognormal"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.family == "truncated-lognormal" and not self.log_sd > 0:
            raise ConfigError("log_sd must be > 0")

    def _lognorm(self):
        dist = stats.lognorm(s=self.log_sd, scale=math.exp(self.log_mean))
        lo, hi = dist.cdf(self.c_low), dist.cdf(self.c_high)
        return dist, lo, hi - lo

    def pdf(self, c):
        c = np.asarray(c, dtype=float)
        inside = (c >= self.c_low) & (c <= self.c_high)
        if self.family == "uniform":
            dens = np.full(c.shape, 1.0 / (self.c_high - self.c_low))
        else:
            dist, _, mass = self._lognorm()
            dens = dist.pdf(c) / mass
        return np.where(inside, dens, 0.0)

    def cdf(self, c):
        c = np.clip(np.asarray(c, dtype=float), self.c_low, self.c_high)
        if self.family == "uniform":
            return (c - self.c_low) / (self.c_high - self.c_low)
        dist, lo, mass = self._lognorm()
        return (dist.cdf(c) - lo) / mass

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            return self.c_low + u * (self.c_high - self.c_low)
        dist, lo, mass = self._lognorm()
        return np.clip(dist.ppf(lo + u * mass), self.c_low, self.c_high)


@dataclass(frozen=True)
class SimConfig:
    n_firms: int = 1000
    horizon: int = 200
    seed: int = 0
    grid_z: int = 100
    grid_xi: int = 100
    z_range: tuple[float, float] = (0.3, 3.0)
    xi_range: tuple[float, float] = (0.3, 3.0)

    def __post_init__(self):
        if self.n_firms < 1 or self.horizon < 1:
            raise ConfigError("n_firms and horizon must be >= 1")


@dataclass(frozen=True)
class SearchEvent:
    searched: bool
    draw: float
    switched: bool
    cost_paid: float


def _check_support(market: SupplierMarket, c):
    c = np.asarray(c, dtype=float)
    tol = 1e-12 * market.c_high
    if np.any(c < market.c_low - tol) or np.any(c > market.c_high + tol):
        raise DomainError(f"supplier efficiency outside [{market.c_low}, {market.c_high}]")


def match_probability(market: SupplierMarket, c_tilde: float) -> float:
    """Probability that a fresh draw beats ``c_tilde``."""
    _check_support(market, c_tilde)
    return float(market.cdf(c_tilde))


# --------------------------------------------------------------------------
# per-period profit across all lines


def profit_arrays(params: ModelParams, z, xi, c):
    """Total per-period profit, summed over every destination with optimal entry."""
    cost = marginal_cost(params, z, c)
    total = 0.0
    for d in params.destinations:
        total = total + line_arrays(params, d, xi, cost)[3]
    return total


def total_profit(params: ModelParams, firm: Firm, c: float) -> float:
    validate_params(params)
    return float(profit_arrays(params, firm.z, firm.xi, c))


def _power_terms(params: ModelParams, z, xi):
    """Per-line profit as ``gross * c**power - fixed`` on the interior.

    Gross line profit is an exact power function of supplier efficiency, so
    one closed-form evaluation at ``c = 1`` pins it down. Returns
    ``gross`` with a trailing destination axis, plus ``power`` and ``fixed``.
    """
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rho, alpha = params.rho, params.alpha
    cost_ref = marginal_cost(params, z, 1.0)
    gross = [line_arrays(params, replace(d, fixed_cost=0.0), xi, cost_ref)[3] for d in params.destinations]
    shape = np.broadcast(z, xi).shape
    gross = np.stack([np.broadcast_to(g, shape) for g in gross], axis=-1) if gross else np.empty(shape + (0,))
    power = np.array([(1 - alpha) * (rho - 1) / ((rho - 1) * d.zeta - 1) for d in params.destinations])
    fixed = np.array([d.fixed_cost for d in params.destinations])
    return gross, power, fixed


def _profit_from_terms(gross, power, fixed, c):
    """Total profit at ``c``; ``gross`` must broadcast against ``c[..., None]``."""
    line = gross * np.exp(np.log(np.asarray(c))[..., None] * power) - fixed
    return np.where(line >= 0, line, 0.0).sum(axis=-1)


def _entry_cutoffs(gross, power, fixed):
    """Efficiency at which each line's profit hits zero; ``nan`` without a fixed cost."""
    with np.errstate(divide="ignore"):
        cut = (fixed / gross) ** (1.0 / power)
    return np.where(fixed > 0, cut, np.nan)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _gain_from_terms(market, gross, power, fixed, c_tilde, n_nodes):
    nodes, weights = _gauss_legendre(n_nodes)
    lo = market.c_low
    c_tilde = np.asarray(c_tilde, dtype=float)
    cuts = _entry_cutoffs(gross, power, fixed)
    cuts = np.where(np.isnan(cuts), lo, np.clip(cuts, lo, c_tilde[..., None]))
    edges = np.concatenate([np.full(c_tilde.shape + (1,), lo), np.sort(cuts, axis=-1), c_tilde[..., None]], axis=-1)
    a, b = edges[..., :-1], edges[..., 1:]
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[..., None] + half[..., None] * nodes
    base = _profit_from_terms(gross, power, fixed, c_tilde)
    vals = _profit_from_terms(gross[..., None, None, :], power, fixed, pts) - base[..., None, None]
    integrand = vals * market.pdf(pts)
    return np.sum(np.sum(integrand * weights, axis=-1) * half, axis=-1)


def gain_arrays(params: ModelParams, market: SupplierMarket, z, xi, c_tilde, n_nodes: int = 64):
    """Per-period expected gain from one search, vectorised over firms.

    Composite Gauss-Legendre with ``n_nodes`` per panel on ``[c_low, c_tilde]``;
    panels split at the entry cutoffs, where total profit has kinks.
    """
    z, xi, c_tilde = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (z, xi, c_tilde)))
    gross, power, fixed = _power_terms(params, z, xi)
    return _gain_from_terms(market, gross, power, fixed, c_tilde, n_nodes)


def expected_gain(params: ModelParams, market: SupplierMarket, firm: Firm, c_tilde: float, n_nodes: int = 64) -> float:
    """``integral_{c_low}^{c_tilde} [pi(c) - pi(c_tilde)] g(c) dc``."""
    validate_params(params)
    _check_support(market, c_tilde)
    return float(gain_arrays(params, market, firm.z, firm.xi, c_tilde, n_nodes))


def should_search(params: ModelParams, market: SupplierMarket, firm: Firm, c_tilde: float | None = None) -> bool:
    c = firm.c_current if c_tilde is None else c_tilde
    gain = expected_gain(params, market, firm, c)
    return gain / (1 - params.discount) >= market.search_cost


def search_thresholds(
    params: ModelParams,
    market: SupplierMarket,
    z,
    xi,
    tol: float = 1e-10,
    n_scan: int = 16,
    n_nodes: int = 64,
    max_iter: int = 200,
):
    """Indifference efficiency for each firm, ``inf`` where the firm never searches.

    Returns ``(threshold, residual)``. Bisection runs on
    ``gain(c) / (1 - beta) - F`` after a scan confirms the gain is
    non-decreasing in ``c``.
    """
    validate_params(params)
    z, xi = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(xi, dtype=float))
    gross, power, fixed = _power_terms(params, z.ravel(), xi.ravel())
    thr = np.empty(z.size)
    resid = np.empty(z.size)
    for s in range(0, z.size, _BLOCK):
        blk = slice(s, s + _BLOCK)
        thr[blk], resid[blk] = _threshold_block(
            market, gross[blk], power, fixed, 1.0 / (1 - params.discount), tol, n_scan, n_nodes, max_iter
        )
    return thr.reshape(z.shape), resid.reshape(z.shape)


_BLOCK = 256


def _threshold_block(market, gross, power, fixed, scale, tol, n_scan, n_nodes, max_iter):
    fee = market.search_cost
    n = gross.shape[0]
    grid = np.linspace(market.c_low, market.c_high, n_scan)
    scan = _gain_from_terms(market, gross[:, None, :], power, fixed, np.broadcast_to(grid, (n, n_scan)), n_nodes) * scale
    slack = 1e-9 * (np.abs(scan).max(axis=-1, keepdims=True) + 1e-300)
    if np.any(np.diff(scan, axis=-1) < -slack):
        raise NonMonotoneGain("expected gain decreases in current supplier efficiency")

    top = scan[:, -1] - fee
    never = top < 0
    lo = np.full(n, market.c_low)
    hi = np.full(n, market.c_high)
    resid_lo = scan[:, 0] - fee
    resid_hi = top
    thr = np.where(never, NEVER_SEARCHES, np.where(resid_lo >= 0, market.c_low, np.nan))
    resid = np.where(never, np.nan, np.where(resid_lo >= 0, resid_lo, np.nan))
    open_ = ~(never | (resid_lo >= 0))
    for _ in range(max_iter):
        if not open_.any():
            break
        mid = 0.5 * (lo + hi)
        r = np.full(n, np.nan)
        r[open_] = _gain_from_terms(market, gross[open_], power, fixed, mid[open_], n_nodes) * scale - fee
        up = open_ & (r >= 0)
        dn = open_ & (r < 0)
        hi = np.where(up, mid, hi)
        resid_hi = np.where(up, r, resid_hi)
        lo = np.where(dn, mid, lo)
        close = open_ & (np.abs(r) <= tol)
        collapsed = open_ & ~close & (hi - lo <= 4 * np.finfo(float).eps * hi)
        thr = np.where(close, mid, np.where(collapsed, hi, thr))
        resid = np.where(close, r, np.where(collapsed, resid_hi, resid))
        open_ = open_ & ~close & ~collapsed
    if open_.any():
        thr = np.where(open_, hi, thr)
        resid = np.where(open_, resid_hi, resid)
    return thr, resid


def search_threshold(params: ModelParams, market: SupplierMarket, firm: Firm, tol: float = 1e-10, n_scan: int = 64) -> float:
    """Efficiency at which ``firm`` is indifferent about searching.

    Returns ``NEVER_SEARCHES`` (``inf``) when even a supplier at ``c_high``
    does not justify paying the search cost.
    """
    thr, _ = search_thresholds(params, market, firm.z, firm.xi, tol=tol, n_scan=n_scan)
    return float(thr)


def threshold_residual(params: ModelParams, market: SupplierMarket, firm: Firm, threshold: float) -> float:
    return expected_gain(params, market, firm, threshold) / (1 - params.discount) - market.search_cost


# --------------------------------------------------------------------------
# dynamics


def firm_rng(seed: int, firm_id) -> np.random.Generator:
    """Independent stream for one firm, keyed by the run seed and the firm id."""
    digest = hashlib.sha256(str(firm_id).encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


def step_period(params: ModelParams, market: SupplierMarket, firm: Firm, rng: np.random.Generator):
    """Advance one period: maybe search, pay ``F``, keep the better supplier.

    One uniform is consumed every period whether or not the firm searches, so
    a firm's stream stays aligned with the period index.
    """
    u = rng.random()
    if not should_search(params, market, firm):
        return firm, SearchEvent(False, math.nan, False, 0.0)
    draw = float(market.ppf(u))
    switched = draw < firm.c_current
    new = replace(firm, c_current=draw) if switched else firm
    return new, SearchEvent(True, draw, switched, market.search_cost)


def draw_firms(config: SimConfig) -> list[Firm]:
    """Log-uniform draws of (z, xi) over the configured ranges."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    lz = rng.uniform(*np.log(config.z_range), size=config.n_firms)
    lx = rng.uniform(*np.log(config.xi_range), size=config.n_firms)
    width = len(str(config.n_firms - 1))
    return [Firm(f"f{i:0{width}d}", float(np.exp(a)), float(np.exp(b))) for i, (a, b) in enumerate(zip(lz, lx))]


def _scope_labels(params: ModelParams, z, xi, c):
    cost = marginal_cost(params, z, c)
    code = np.zeros(np.shape(cost), dtype=np.int64)
    for bit, d in enumerate(params.destinations):
        code |= line_arrays(params, d, xi, cost)[4].astype(np.int64) << bit
    ids = [d.id for d in params.destinations]
    names = ["+".join(ids[b] for b in range(len(ids)) if m >> b & 1) for m in range(1 << len(ids))]
    return np.asarray(names, dtype=object)[code]


def simulate_panel(
    params: ModelParams,
    market: SupplierMarket,
    config: SimConfig,
    firms: list[Firm] | None = None,
    threads: int = 1,
) -> pd.DataFrame:
    """Simulate ``config.horizon`` periods of search for every firm.

    All firms start at ``c_high``. A firm searches in a period iff its current
    efficiency is at or above its search threshold, which is equivalent to the
    period-by-period search condition because the expected gain is monotone.
    Columns: firm_id, period, c, searched, switched, profit, scope. The search
    cost of a period equals ``searched * F`` and is not netted from profit.
    """
    validate_params(params)
    if firms is None:
        firms = draw_firms(config)
    z = np.array([f.z for f in firms])
    xi = np.array([f.xi for f in firms])
    n, horizon = len(firms), config.horizon

    if threads and threads > 1 and n > 1:
        chunks = np.array_split(np.arange(n), threads)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda idx: search_thresholds(params, market, z[idx], xi[idx])[0], chunks))
        thr = np.concatenate(parts)
    else:
        thr = search_thresholds(params, market, z, xi)[0]

    uniforms = np.stack([firm_rng(config.seed, f.id).random(horizon) for f in firms]) if n else np.empty((0, horizon))
    draws = market.ppf(uniforms)
    c = np.full(n, market.c_high)
    path = np.empty((n, horizon))
    searched = np.zeros((n, horizon), dtype=bool)
    switched = np.zeros((n, horizon), dtype=bool)
    for t in range(horizon):
        s = c >= thr
        better = s & (draws[:, t] < c)
        c = np.where(better, draws[:, t], c)
        path[:, t] = c
        searched[:, t] = s
        switched[:, t] = better

    zz = np.repeat(z, horizon)
    xx = np.repeat(xi, horizon)
    cc = path.ravel()
    return pd.DataFrame(
        {
            "firm_id": np.repeat([f.id for f in firms], horizon),
            "period": np.tile(np.arange(1, horizon + 1), n),
            "c": cc,
            "searched": searched.ravel(),
            "switched": switched.ravel(),
            "profit": profit_arrays(params, zz, xx, cc),
            "scope": _scope_labels(params, zz, xx, cc),
        }
    )


# --------------------------------------------------------------------------
# heatmaps


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.exp(np.linspace(math.log(lo), math.log(hi), n))


def scope_heatmap(params: ModelParams, z_grid, xi_grid, c_value: float, rich: str = "R", poor: str = "P") -> np.ndarray:
    """Export-scope category for every (z, xi) cell, rows indexed by z.

    Categories are indices into ``SCOPE_CATEGORIES``:
    0 none, 1 P-only, 2 R-only, 3 both. The domestic line is ignored.
    """
    validate_params(params)
    zg, xg = np.meshgrid(np.asarray(z_grid, float), np.asarray(xi_grid, float), indexing="ij")
    cost = marginal_cost(params, zg, c_value)
    in_p = line_arrays(params, params.destination(poor), xg, cost)[4]
    in_r = line_arrays(params, params.destination(rich), xg, cost)[4]
    return in_p.astype(int) + 2 * in_r.astype(int)


def heatmap_frame(z_grid, xi_grid, cells: np.ndarray, value_name: str = "category") -> pd.DataFrame:
    zg, xg = np.meshgrid(np.asarray(z_grid, float), np.asarray(xi_grid, float), indexing="ij")
    out = pd.DataFrame({"z": zg.ravel(), "xi": xg.ravel()})
    if value_name == "category":
        out[value_name] = np.asarray(SCOPE_CATEGORIES, dtype=object)[cells.ravel()]
    else:
        out[value_name] = cells.ravel()
    return out


def threshold_heatmap(params: ModelParams, market: SupplierMarket, z_grid, xi_grid) -> np.ndarray:
    """Search threshold on a (z, xi) grid; ``inf`` marks firms that never search."""
    zg, xg = np.meshgrid(np.asarray(z_grid, float), np.asarray(xi_grid, float), indexing="ij")
    return search_thresholds(params, market, zg.ravel(), xg.ravel())[0].reshape(zg.shape)
