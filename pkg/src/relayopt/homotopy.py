"""Condensation (homotopy) method for the cumulative-variable problem.

Every posynomial denominator ``1 + s`` of the cumulative problem is replaced by
its tangent monomial ``f(s, s_hat) = c(s_hat) s^a(s_hat)`` at the current
iterate.  Since ``f <= 1 + s`` the resulting GP is an inner approximation that
is exact at the expansion point, so each solve can only improve the sum-rate.

Variables of the GP: ``P{k}`` cumulative powers (layer k, 0-based, ``k <= M``),
``b{p}`` cumulative weighted betas (decompression position p) and ``g{i}`` the
per-relay slack ``gamma_i <= 1 - beta_i``.

The relation ``gamma_i = 1 - beta_i`` is relaxed to ``g_i gamma_i +
bbar_{p(i)} <= g_i + bbar_{p(i)-1}``; a ratio form with ``g_i gamma_i`` also in
the denominator would pin every beta increment to zero.  Only the posynomial
constraints carrying a backhaul budget get the relative margin ``opts.margin``,
so that degenerate instances (zero backhaul, pinned layers) keep a strict
interior; allocations are always re-evaluated exactly.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .gp_core import GPProblem, GPStatus, Monomial, Posynomial, PosynomialProduct, solve_gp, to_convex_form
from .model import (
    CumulativePoint,
    InfeasibleCumulativePoint,
    NetworkConfig,
    Permutation,
    RelayOptError,
    allocation_from_cumulative,
    cf_betas,
    sum_rate,
)

STRATEGIES = ("cf", "df", "blend", "random")
# relative slack on backhaul budgets; log2(1 + MARGIN) bits stays well inside the 1e-6 check
MARGIN = 1e-7


class NonpositiveExpansionPoint(RelayOptError, ValueError):
    pass


class InfeasibleExpansionPoint(RelayOptError, ValueError):
    pass


@dataclass(frozen=True)
class MonomialApprox:
    """Tangent monomial lower bound of ``1 + s`` at ``s_hat``."""

    s_hat: float

    @property
    def exponent(self):
        return self.s_hat / (1.0 + self.s_hat)

    @property
    def coefficient(self):
        return float(np.exp(np.log1p(self.s_hat) - self.exponent * np.log(self.s_hat)))

    def __call__(self, s):
        return self.coefficient * np.asarray(s, dtype=float) ** self.exponent

    def of(self, mono):
        """The bound as a monomial in the GP variables, given ``s`` as a monomial."""
        return self.coefficient * mono ** self.exponent


def monomial_lower_bound(s_hat):
    if not s_hat > 0:
        raise NonpositiveExpansionPoint(f"expansion point must be positive, got {s_hat}")
    return MonomialApprox(float(s_hat))


@dataclass(frozen=True)
class HomotopyOptions:
    max_outer_iterations: int = 100
    rtol: float = 1e-6
    floor: float = 1e-9
    starts: int = 4
    margin: float = MARGIN
    gp_tol: float = 1e-9
    gp_max_iter: int = 200
    seed: int = 0
    extrapolate: bool = True

    def __post_init__(self):
        for name in ("max_outer_iterations", "rtol", "floor", "starts", "gp_tol", "gp_max_iter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass
class HomotopyTrace:
    rates: list = field(default_factory=list)
    status: str = "running"
    gp_iterations: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.gp_iterations)


# -- GP construction -------------------------------------------------------

class _Vars:
    """GP variables, with structurally-zero ones represented as ``None``."""

    def __init__(self, m, df_only):
        self.m = m
        self.P = [Monomial.var(f"P{k}") for k in range(m + 1)]
        if df_only:
            self.P[m] = None
        # B[p + 1] is bbar_p; B[0] is the empty-prefix sentinel
        self.B = [None] + [None if df_only else Monomial.var(f"b{p}") for p in range(m)]
        self.G = [Monomial(1.0) if df_only else Monomial.var(f"g{i}") for i in range(m)]


def _mul(a, b):
    if a is None or b is None:
        return None
    return a * b


def _one_plus(s):
    return Posynomial([Monomial(1.0)]) if s is None else Monomial(1.0) + s


def point_dict(pt, df_only=False):
    m = len(pt.gamma)
    d = {f"P{k}": float(v) for k, v in enumerate(pt.cum_powers)}
    if df_only:
        del d[f"P{m}"]
    else:
        d.update({f"b{p}": float(v) for p, v in enumerate(pt.cum_betas)})
        d.update({f"g{i}": float(v) for i, v in enumerate(pt.gamma)})
    return d


def point_from_dict(cfg, d, df_only=False):
    m = cfg.num_relays
    if df_only:
        pbar = [d[f"P{k}"] for k in range(m)] + [0.0]
        return CumulativePoint(pbar, np.zeros(m), np.ones(m))
    return CumulativePoint([d[f"P{k}"] for k in range(m + 1)],
                           [d[f"b{p}"] for p in range(m)],
                           [d[f"g{i}"] for i in range(m)])


def _condensed_parts(cfg, perm, df_only, floor, margin, cond):
    """Objective, constraints and labels, with ``cond(s)`` standing for the
    monomial that replaces each denominator ``1 + s``."""
    m = cfg.num_relays
    g, C = [float(x) for x in cfg.gains], [float(x) for x in cfg.backhaul]
    inv = perm.inverse
    order = perm.order
    v = _Vars(m, df_only)
    P, B, G = v.P, v.B, v.G
    slack = 1.0 + margin
    top = _mul(P[m], B[m])
    labels, cons = [], []

    obj_den = cond(top)
    for i in range(m):
        obj_den = obj_den * cond(g[i] * P[i])
    objective = PosynomialProduct([_one_plus(_mul(g[i], P[i + 1]) if P[i + 1] is not None else None)
                                   for i in range(m)] + [obj_den ** -1])

    for k in range(m):
        facs = [_one_plus(top)]
        den = (2.0 ** sum(C[k:])) * slack * cond(_mul(P[k], B[m]))
        for i in range(k, m):
            facs.append(_one_plus(g[i] * P[i]))
            facs.append(_one_plus(_mul(P[0], B[inv[i] + 1])))
            nxt = None if P[i + 1] is None else g[i] * P[i + 1]
            den = den * G[i] * cond(nxt) * cond(_mul(P[0], B[inv[i]]))
        labels.append("decoding")
        cons.append(PosynomialProduct(facs + [den ** -1]))

    if not df_only:
        for i in range(m):
            den = (2.0 ** float(C[i])) * slack * G[i] * cond(_mul(P[0], B[inv[i]]))
            labels.append("backhaul")
            cons.append(PosynomialProduct([_one_plus(P[0] * B[inv[i] + 1]), den ** -1]))

    labels.append("power")
    cons.append(P[0] / cfg.power)

    for k in range(m):
        if P[k + 1] is not None:
            labels.append("monotone")
            cons.append(P[k + 1] / P[k])
    if not df_only:
        for p in range(m):
            labels.append("monotone")
            cons.append(B[p] / B[p + 1] if B[p] is not None else floor / B[p + 1])
        for p in range(m):
            gi = g[order[p]]
            prev = B[p]
            den = gi * (cond(prev / gi) if prev is not None else Monomial(1.0))
            labels.append("beta_range")
            cons.append(B[p + 1] / den)
        for i in range(m):
            prev = B[inv[i]]
            den = g[i] * (cond(prev / g[i]) if prev is not None else Monomial(1.0))
            labels.append("gamma")
            cons.append((g[i] * G[i] + B[inv[i] + 1]) / den)
    return objective, cons, labels


def _variable_names(m, df_only):
    names = [f"P{k}" for k in range(m if df_only else m + 1)]
    if not df_only:
        names += [f"b{p}" for p in range(m)] + [f"g{i}" for i in range(m)]
    return tuple(sorted(names))


def build_gp_subproblem(cfg, perm, current, df_only=False, floor=1e-9, margin=MARGIN, check=True):
    """Condensed GP around ``current``.

    Constraint families (labels): ``decoding`` (M), ``backhaul`` (M), ``power``
    (1), ``monotone`` (2M), ``beta_range`` (M), ``gamma`` (M).  In ``df_only``
    mode the betas are fixed to zero, gamma to one and the top layer is empty.
    """
    here = {k: max(val, floor) for k, val in point_dict(current, df_only).items()}

    def cond(s):
        if s is None:
            return Monomial(1.0)
        return monomial_lower_bound(s(here)).of(s)

    objective, cons, labels = _condensed_parts(cfg, perm, df_only, floor, margin, cond)
    names = _variable_names(cfg.num_relays, df_only)
    gp = GPProblem(objective, cons, {n: (floor, None) for n in names}, labels, names)
    if check:
        worst = max(c(here) for c in cons)
        if worst > 1.0 + 1e-6:
            raise InfeasibleExpansionPoint(f"expansion point violates constraints by {worst - 1.0:.3g}")
    return gp


class CondensedTemplate:
    """Log-domain arrays of the condensed GP for one instance and order.

    The term structure never changes between outer iterations; only the
    tangent exponents and coefficients do.  Each condensed monomial is kept as
    a placeholder column ``h_j`` standing for ``c_j s_j^{a_j}``, which
    :meth:`convex` folds back into the real columns for a given expansion
    point.  The result equals ``to_convex_form(build_gp_subproblem(...))``.
    """

    def __init__(self, cfg, perm, df_only=False, floor=1e-9, margin=MARGIN):
        self.df_only = df_only
        self.floor = floor
        monos = []

        def cond(s):
            if s is None:
                return Monomial(1.0)
            monos.append(s)
            return Monomial.var(f"~h{len(monos) - 1:05d}")

        objective, cons, labels = _condensed_parts(cfg, perm, df_only, floor, margin, cond)
        self.labels = tuple(labels)
        self.variables = _variable_names(cfg.num_relays, df_only)
        hats = tuple(f"~h{j:05d}" for j in range(len(monos)))
        gp = GPProblem(objective, cons, {n: (floor, None) for n in self.variables}, labels,
                       self.variables + hats)
        base = to_convex_form(gp)
        n = len(self.variables)
        # GPProblem sorts names: "~" sorts after every real name and the padding keeps hats in order
        assert base.variables[:n] == self.variables
        self.base = base
        self.A_real = base.A[:, :n]
        self.A_hat = base.A[:, n:]
        index = {v: i for i, v in enumerate(self.variables)}
        self.S = np.zeros((len(monos), n))
        self.log_coef = np.array([np.log(s.coef) for s in monos])
        for j, s in enumerate(monos):
            for v, a in s.exps.items():
                self.S[j, index[v]] = a

    def log_point(self, pt):
        d = point_dict(pt, self.df_only)
        return np.log(np.array([max(d[v], self.floor) for v in self.variables]))

    def convex(self, pt):
        """Condensed GP at ``pt`` in log-domain form."""
        y = self.log_point(pt)
        s_hat = np.exp(self.S @ y + self.log_coef)
        a = s_hat / (1.0 + s_hat)
        log_c = np.log1p(s_hat) - a * np.log(s_hat)
        A = self.A_real + self.A_hat @ (a[:, None] * self.S)
        b = self.base.b + self.A_hat @ (log_c + a * self.log_coef)
        return self.base.with_coefficients(self.variables, A, b), y

    def violation(self, pt):
        """Largest constraint value minus one at ``pt`` (condensed equals exact there)."""
        cp, y = self.convex(pt)
        return float(np.expm1(np.max(cp.values(y)[1:])))


@functools.lru_cache(maxsize=64)
def _cached_template(key, gains, backhaul, power, order, df_only, floor, margin):
    cfg = NetworkConfig(np.array(gains), np.array(backhaul), power)
    return CondensedTemplate(cfg, Permutation(order), df_only, floor, margin)


def template_for(cfg, perm, df_only=False, floor=1e-9, margin=MARGIN):
    """Cached :class:`CondensedTemplate` (instances are immutable, so this is safe)."""
    g, c = tuple(cfg.gains.tolist()), tuple(cfg.backhaul.tolist())
    return _cached_template(None, g, c, cfg.power, perm.order, bool(df_only), float(floor), float(margin))


def cgp_violation(cfg, perm, pt, df_only=False, floor=1e-9, margin=MARGIN):
    """Largest constraint value minus one (tangency makes condensed = exact here)."""
    return template_for(cfg, perm, df_only, floor, margin).violation(pt)


# -- starting points ---------------------------------------------------------

def lift(cfg, perm, layer_powers, beta, floor=1e-9, df_only=False):
    """Cumulative point for given powers and betas, with every variable at or above ``floor``."""
    m = cfg.num_relays
    p = np.maximum(np.asarray(layer_powers, dtype=float), floor)
    if df_only:
        p[m] = 0.0
    p *= min(1.0, cfg.power / p.sum())
    pbar = np.cumsum(p[::-1])[::-1]
    if df_only:
        return CumulativePoint(pbar, np.zeros(m), np.ones(m))
    inc = np.maximum((cfg.gains * np.asarray(beta, dtype=float))[list(perm.order)], floor)
    bbar = np.cumsum(inc)
    gamma = np.empty(m)
    gamma[list(perm.order)] = 1.0 - inc / cfg.gains[list(perm.order)]
    return CumulativePoint(pbar, bbar, gamma)


def make_feasible(cfg, perm, layer_powers, beta, opts, df_only=False):
    """Lift and shrink powers and betas geometrically until the point is feasible."""
    p = np.asarray(layer_powers, dtype=float)
    b = np.asarray(beta, dtype=float)
    for j in range(48):
        tau = 0.5 ** j
        pt = lift(cfg, perm, tau * p, tau * b, opts.floor, df_only)
        if cgp_violation(cfg, perm, pt, df_only, opts.floor, opts.margin) <= 0.0:
            return pt
    return lift(cfg, perm, np.zeros_like(p), np.zeros_like(b), opts.floor, df_only)


def initial_point(cfg, perm, strategy="cf", opts=None, seed=None):
    """Feasible start: ``cf`` (closed-form compression, all power on the CF
    layer), ``df`` (betas at the floor, equal DF layers), ``blend`` (equal
    layers, half the backhaul for compression) or ``random`` (seeded)."""
    opts = opts or HomotopyOptions()
    m = cfg.num_relays
    P = cfg.power
    if strategy == "cf":
        powers = np.zeros(m + 1)
        powers[m] = P
        beta = cf_betas(cfg, perm)
    elif strategy == "df":
        powers = np.append(np.full(m, P / m), 0.0)
        beta = np.zeros(m)
    elif strategy == "blend":
        powers = np.full(m + 1, P / (m + 1))
        beta = cf_betas(cfg, perm, cfg.backhaul / 2.0)
    elif strategy == "random":
        rng = np.random.default_rng(opts.seed if seed is None else seed)
        powers = rng.dirichlet(np.ones(m + 1)) * P
        beta = rng.uniform(0.0, 1.0, m) * cf_betas(cfg, perm)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return make_feasible(cfg, perm, powers, beta, opts)


# -- outer loop --------------------------------------------------------------

def recovered_rate(cfg, perm, pt, opts):
    try:
        return sum_rate(cfg, allocation_from_cumulative(cfg, perm, pt, zero_tol=10 * opts.floor))
    except InfeasibleCumulativePoint:
        return -np.inf


def homotopy_step(cfg, perm, pt, opts, df_only=False):
    """One condensed-GP update; returns ``(new_point, GPSolution)``."""
    cp, y = template_for(cfg, perm, df_only, opts.floor, opts.margin).convex(pt)
    worst = float(np.expm1(np.max(cp.values(y)[1:])))
    if worst > 1e-6:
        raise InfeasibleExpansionPoint(f"expansion point violates constraints by {worst:.3g}")
    x0 = dict(zip(cp.variables, np.exp(y)))
    sol = solve_gp(cp, tol=opts.gp_tol, max_iter=opts.gp_max_iter, x0=x0)
    return point_from_dict(cfg, sol.point, df_only), sol


EXTRAPOLATION_FACTORS = (16.0, 4.0, 1.0)


def _extrapolate(cfg, perm, prev, new, new_rate, opts, df_only):
    """Try continuing the last step further in log space.

    Near a floor-pinned optimum the condensed GP only shrinks the vanishing
    variables by a small factor per iteration; following the same log-domain
    direction for longer recovers most of that progress.  A candidate is taken
    only if it is feasible for the exact constraints and raises the sum-rate.
    """
    tpl = template_for(cfg, perm, df_only, opts.floor, opts.margin)
    y0, y1 = tpl.log_point(prev), tpl.log_point(new)
    lo = np.log(opts.floor)
    for k in EXTRAPOLATION_FACTORS:
        y = np.maximum(y1 + k * (y1 - y0), lo)
        cand = point_from_dict(cfg, dict(zip(tpl.variables, np.exp(y))), df_only)
        if tpl.violation(cand) > 0.0:
            continue
        rate = recovered_rate(cfg, perm, cand, opts)
        if rate > new_rate:
            return cand, rate
    return new, new_rate


def run_homotopy(cfg, perm, init, opts=None, df_only=False, callback=None):
    """Iterate condensed GPs from ``init`` until the sum-rate stalls.

    An update is accepted only if the exactly evaluated sum-rate does not
    decrease, so the returned trace is monotone; stopping happens when the gain
    of one outer iteration is below ``rtol * max(rate, 1)``.  ``callback(pt,
    rate)`` sees the start and every accepted iterate.
    """
    opts = opts or HomotopyOptions()
    pt = init
    rate = recovered_rate(cfg, perm, pt, opts)
    trace = HomotopyTrace([rate])
    if callback is not None:
        callback(pt, rate)
    for _ in range(opts.max_outer_iterations):
        new, sol = homotopy_step(cfg, perm, pt, opts, df_only)
        trace.gp_iterations.append(sol.iterations)
        if sol.status in (GPStatus.INFEASIBLE, GPStatus.UNBOUNDED):
            trace.status = f"gp_{sol.status.value}"
            break
        new_rate = recovered_rate(cfg, perm, new, opts)
        if not new_rate >= rate:
            trace.status = "converged"
            break
        step_gain = new_rate - rate
        if opts.extrapolate and step_gain > opts.rtol * max(abs(new_rate), 1.0):
            new, new_rate = _extrapolate(cfg, perm, pt, new, new_rate, opts, df_only)
        pt, rate = new, new_rate
        trace.rates.append(rate)
        if callback is not None:
            callback(pt, rate)
        if step_gain <= opts.rtol * max(abs(rate), 1.0):
            trace.status = "converged"
            break
    else:
        trace.status = "max_iterations"
    return pt, trace
