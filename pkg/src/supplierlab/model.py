"""Static production-line problem of an exporter choosing quantity and quality.

Each destination ``d`` is served by its own constant-returns production line.
Demand is CES with a quality shifter, so after substituting the demand curve
the line profit reads::

    pi(x, lam) = A x**(1 - 1/rho) * lam**((rho - 1) zeta / rho)
                 - C x - (f / xi) lam - F_d,      A = y**(1/rho) * P

with marginal cost ``C`` coming from a Cobb-Douglas bundle of labour and an
imported input bought from the currently matched supplier.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InvalidParameter, Unbounded

INCOME_GROUPS = ("advanced", "emerging", "domestic")


@dataclass(frozen=True)
class Destination:
    id: str
    zeta: float
    income: float = 1.0
    price_index: float = 1.0
    fixed_cost: float = 0.0
    income_group: str = "advanced"


@dataclass(frozen=True)
class ModelParams:
    rho: float = 2.0
    alpha: float = 0.5
    wage: float = 1.0
    f: float = 1.0
    discount: float = 0.9
    destinations: tuple[Destination, ...] = field(default_factory=tuple)

    def destination(self, dest_id: str) -> Destination:
        for d in self.destinations:
            if d.id == dest_id:
                return d
        raise KeyError(dest_id)


@dataclass(frozen=True)
class Firm:
    id: str
    z: float
    xi: float
    c_current: float = 1.0


@dataclass(frozen=True)
class LineSolution:
    quality: float
    quantity: float
    price: float
    profit: float
    active: bool

    @classmethod
    def inactive(cls) -> "LineSolution":
        return cls(0.0, 0.0, 0.0, 0.0, False)


def validate_params(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged if every structural restriction holds.

    The quality exponent must satisfy ``(rho - 1) * zeta < 1`` on every
    destination. This is the Hessian-determinant condition and it is stricter
    than ``zeta < rho / (rho - 1)``; between the two bounds the objective has no
    maximum.
    """
    bad = []
    if not params.rho > 1:
        bad.append(("rho", params.rho, "rho > 1"))
    if not 0 < params.alpha < 1:
        bad.append(("alpha", params.alpha, "0 < alpha < 1"))
    if not params.wage > 0:
        bad.append(("wage", params.wage, "wage > 0"))
    if not params.f > 0:
        bad.append(("f", params.f, "f > 0"))
    if not 0 < params.discount < 1:
        bad.append(("discount", params.discount, "0 < discount < 1"))
    for d in params.destinations:
        tag = f"destinations[{d.id}]"
        if not d.zeta >= 0:
            bad.append((f"{tag}.zeta", d.zeta, "zeta >= 0"))
        elif params.rho > 1 and not (params.rho - 1) * d.zeta < 1:
            bad.append((f"{tag}.zeta", d.zeta, "(rho - 1) * zeta < 1"))
        if not d.income > 0:
            bad.append((f"{tag}.income", d.income, "income > 0"))
        if not d.price_index > 0:
            bad.append((f"{tag}.price_index", d.price_index, "price_index > 0"))
        if not d.fixed_cost >= 0:
            bad.append((f"{tag}.fixed_cost", d.fixed_cost, "fixed_cost >= 0"))
        if d.income_group not in INCOME_GROUPS:
            bad.append((f"{tag}.income_group", d.income_group, f"one of {INCOME_GROUPS}"))
        if d.income_group == "domestic" and d.fixed_cost != 0:
            bad.append((f"{tag}.fixed_cost", d.fixed_cost, "domestic fixed_cost == 0"))
    if bad:
        raise InvalidParameter(*bad[0], violations=bad)
    return params


def marginal_cost(params: ModelParams, z, c):
    """Unit cost of the Cobb-Douglas labour/imported-input bundle.

    Works elementwise on arrays.
    """
    z_arr = np.asarray(z, dtype=float)
    c_arr = np.asarray(c, dtype=float)
    if np.any(~(z_arr > 0)) or np.any(~(c_arr > 0)):
        raise DomainError("marginal cost needs z > 0 and c > 0")
    a = params.alpha
    out = params.wage**a * c_arr ** (1 - a) / (z_arr * a**a * (1 - a) ** (1 - a))
    return float(out) if out.ndim == 0 else out


def _demand_shifter(dest: Destination, rho: float) -> float:
    return dest.income ** (1.0 / rho) * dest.price_index


def line_arrays(params: ModelParams, dest: Destination, xi, cost, demand_scale=1.0):
    """Closed-form optimum of one line, broadcast over arrays.

    ``cost`` is the marginal cost ``C``; ``demand_scale`` multiplies the
    destination income (used for cell-level demand shifters). Returns
    ``(quality, quantity, price, profit, active)`` with inactive entries zeroed.
    """
    rho = params.rho
    k = (rho - 1.0) * dest.zeta
    xi = np.asarray(xi, dtype=float)
    cost = np.asarray(cost, dtype=float)
    income = dest.income * np.asarray(demand_scale, dtype=float)
    log_a = np.log(income) / rho + math.log(dest.price_index)
    log_psi = math.log((rho - 1.0) / rho) + log_a
    log_c = np.log(cost)
    if dest.zeta == 0:
        log_x = rho * (log_psi - log_c)
        lam = np.zeros(np.broadcast(xi, log_c, log_a).shape)
        x = np.exp(log_x) + 0 * lam
        price = np.exp(-log_x / rho + log_a) + 0 * lam
        gross = (price - cost) * x
    else:
        log_lam = (np.log(xi * dest.zeta / params.f) + rho * log_psi + (1.0 - rho) * log_c) / (1.0 - k)
        lam = np.exp(log_lam)
        log_x = math.log(params.f / dest.zeta) - np.log(xi) + log_lam - log_c
        x = np.exp(log_x)
        price = np.exp(-log_x / rho + log_a + k / rho * log_lam)
        gross = (price - cost) * x - params.f / xi * lam
    profit = gross - dest.fixed_cost
    active = profit >= 0
    zero = np.zeros_like(profit)
    return (
        np.where(active, lam, zero),
        np.where(active, x, zero),
        np.where(active, price, zero),
        np.where(active, profit, zero),
        active,
    )


def solve_line(params: ModelParams, dest: Destination, firm: Firm, c: float | None = None) -> LineSolution:
    """Optimal quality, quantity, price and profit of ``firm`` on line ``dest``.

    ``c`` overrides the firm's current supplier efficiency.
    """
    validate_params(params)
    cost = marginal_cost(params, firm.z, firm.c_current if c is None else c)
    lam, x, p, pi, active = line_arrays(params, dest, firm.xi, cost)
    if not bool(active):
        return LineSolution.inactive()
    return LineSolution(float(lam), float(x), float(p), float(pi), True)


def cost_elasticity(params: ModelParams, dest: Destination) -> float:
    """d log x* / d log c on an interior line."""
    validate_params(params)
    rho = params.rho
    return ((rho - 1) / ((rho - 1) * dest.zeta - 1) - 1) * (1 - params.alpha)


def export_scope(params: ModelParams, firm: Firm, c: float | None = None) -> frozenset[str]:
    return frozenset(d.id for d in params.destinations if solve_line(params, d, firm, c).active)


# --------------------------------------------------------------------------
# brute-force oracle


def _objective(params, dest, xi, cost, x, lam):
    rho = params.rho
    k = (rho - 1) * dest.zeta
    a = _demand_shifter(dest, rho)
    with np.errstate(over="ignore", invalid="ignore"):
        return a * x ** (1 - 1 / rho) * lam ** (k / rho) - cost * x - params.f / xi * lam


_CSTEP = 1e-20


def _line_root(slope, t0, step, other):
    """Zero of a decreasing 1-D slope near ``t0`` (a concave line maximum)."""
    lo, hi = t0 - step, t0 + step
    while slope(lo, other) < 0:
        lo -= step
    while slope(hi, other) > 0:
        hi += step
    return brentq(slope, lo, hi, args=(other,), xtol=1e-15, rtol=4 * np.finfo(float).eps)


def brute_force_profit_max(
    params: ModelParams,
    dest: Destination,
    firm: Firm,
    c: float | None = None,
    n_grid: int = 401,
    span_decades: float = 4.0,
    tol: float = 1e-10,
    max_recenter: int = 8,
    max_sweeps: int = 100_000,
) -> LineSolution:
    """Maximise the substituted line profit by search, without using the FOCs.

    A log-spaced ``n_grid`` x ``n_grid`` grid spanning ``span_decades`` orders
    of magnitude either side of the starting point is searched, re-centred while
    the maximum sits on the grid edge, then polished by coordinate ascent in
    log coordinates. ``lam = 0`` is always a candidate. Raises ``Unbounded``
    when the maximiser keeps running off the grid.

    Only bounds (rho > 1 and so on) are checked here, so the oracle also runs
    on parameter sets that ``validate_params`` rejects.
    """
    rho = params.rho
    if not rho > 1 or not 0 < params.alpha < 1:
        raise DomainError("oracle needs rho > 1 and 0 < alpha < 1")
    cost = marginal_cost(params, firm.z, firm.c_current if c is None else c)
    xi = firm.xi
    fc = dest.fixed_cost

    # starting point: the stationary point when it exists, else CES quantity
    psi = (rho - 1) / rho * _demand_shifter(dest, rho)
    if dest.zeta > 0 and (rho - 1) * dest.zeta != 1:
        k = (rho - 1) * dest.zeta
        v0 = (math.log(xi * dest.zeta / params.f) + rho * math.log(psi) + (1 - rho) * math.log(cost)) / (1 - k)
        u0 = math.log(params.f / (xi * dest.zeta)) + v0 - math.log(cost)
    else:
        v0 = 0.0
        u0 = rho * (math.log(psi) - math.log(cost))

    half = span_decades * math.log(10.0)
    offsets = np.linspace(-half, half, n_grid)
    for _ in range(max_recenter + 1):
        us = u0 + offsets
        vs = v0 + offsets
        vals = _objective(params, dest, xi, cost, np.exp(us)[:, None], np.exp(vs)[None, :])
        if not np.all(np.isfinite(vals)):
            raise Unbounded("objective overflows while searching")
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        # with zeta == 0 a minimal lam is expected: the lam = 0 corner wins
        low_lam_ok = dest.zeta == 0 and j == 0
        on_edge = i in (0, n_grid - 1) or j == n_grid - 1 or (j == 0 and not low_lam_ok)
        u0, v0 = float(us[i]), float(vs[j])
        if not on_edge:
            break
    else:
        raise Unbounded("maximiser keeps leaving the search grid")
    best = float(vals[i, j])

    # corner lam = 0: revenue vanishes unless zeta == 0
    corner_x = _objective(params, dest, xi, cost, np.exp(us), 0.0)
    ic = int(np.argmax(corner_x))
    corner = dest.zeta == 0 and corner_x[ic] >= best
    if corner:
        u0, best = float(us[ic]), float(corner_x[ic])

    step = float(offsets[1] - offsets[0])
    a = _demand_shifter(dest, rho)
    ex = 1 - 1 / rho
    el = (rho - 1) * dest.zeta / rho
    qcost = params.f / xi

    # Slopes of the objective in log coordinates by complex-step
    # differentiation: exact to rounding, no analytic derivative involved.
    def slope_u(u, v):
        x = cmath.exp(complex(u, _CSTEP))
        lam = 0.0 if corner else math.exp(v)
        return (a * x**ex * lam**el - cost * x).imag / _CSTEP

    def slope_v(v, u):
        lam = cmath.exp(complex(v, _CSTEP))
        return (a * math.exp(u) ** ex * lam**el - qcost * lam).imag / _CSTEP

    u, v = u0, v0
    for _ in range(max_sweeps):
        u_new = _line_root(slope_u, u, step, v)
        du, u = abs(u_new - u), u_new
        dv = 0.0
        if not corner:
            v_new = _line_root(slope_v, v, step, u)
            dv, v = abs(v_new - v), v_new
        if max(du, dv) <= tol:
            break
    lam = 0.0 if corner else math.exp(v)
    x = math.exp(u)
    gross = float(_objective(params, dest, xi, cost, x, lam))
    profit = gross - fc
    if profit < 0:
        return LineSolution.inactive()
    price = _demand_shifter(dest, rho) * x ** (-1 / rho) * (lam ** ((rho - 1) * dest.zeta / rho) if not corner else 1.0)
    return LineSolution(lam, x, price, profit, True)


def with_fixed_costs(params: ModelParams, fixed_costs: Sequence[float]) -> ModelParams:
    dests = tuple(replace(d, fixed_cost=fc) for d, fc in zip(params.destinations, fixed_costs))
    return replace(params, destinations=dests)
