"""Relaying schemes: hybrid multi-layer DF/CF, pure CF, multi- and single-layer DF."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .homotopy import (
    STRATEGIES,
    HomotopyOptions,
    initial_point,
    make_feasible,
    run_homotopy,
)
from .model import (
    Allocation,
    Permutation,
    TooManyRelays,
    allocation_from_cumulative,
    cf_betas,
    cutset_bound,
    sum_rate,
)

SCHEMES = ("hybrid", "cf", "df-ml", "df-sl", "cutset")
MAX_PERMUTATION_RELAYS = 8
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Solution:
    scheme: str
    sum_rate: float
    allocation: Allocation | None = None
    permutation: Permutation | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def iterations(self):
        trace = self.diagnostics.get("trace")
        return trace.iterations if trace is not None else 0


def recover_allocation(cfg, perm, pt, zero_tol=0.0):
    """Allocation for a cumulative point with the per-layer rate and backhaul
    constraints met with equality (decoding suffix constraints trimmed if needed)."""
    return allocation_from_cumulative(cfg, perm, pt, zero_tol)


def permutations_for(cfg, heuristic=False):
    m = cfg.num_relays
    if heuristic:
        return [Permutation.identity(m)]
    if m > MAX_PERMUTATION_RELAYS:
        raise TooManyRelays(
            f"exhaustive order search is limited to {MAX_PERMUTATION_RELAYS} relays "
            f"({math.factorial(m)} orders requested); use the gain-sorted heuristic")
    return Permutation.all(m)


def _best(solutions):
    best = None
    for s in solutions:
        if best is None or s.sum_rate > best.sum_rate + TIE_TOL:
            best = s
    return best


def solve_cf(cfg, perm=None, heuristic=False):
    """Pure compress-and-forward: all power on the top layer, closed-form betas.

    Without ``perm`` every decompression order is tried.
    """
    m = cfg.num_relays
    perms = [perm] if perm is not None else permutations_for(cfg, heuristic)
    out = []
    for pi in perms:
        beta = cf_betas(cfg, pi)
        powers = np.zeros(m + 1)
        powers[m] = cfg.power
        rate = float(np.log2(1.0 + cfg.power * np.dot(cfg.gains, beta)))
        alloc = Allocation(powers, beta, np.zeros(m), np.append(np.zeros(m), rate))
        out.append(Solution("cf", sum_rate(cfg, alloc), alloc, pi, {"closed_form": True}))
    return _best(out)


def solve_df_sl(cfg):
    """Single-layer DF: best layer i, decoded by relays i..M, limited by their backhaul."""
    m = cfg.num_relays
    g, C, P = cfg.gains, cfg.backhaul, cfg.power
    best_i, best = 0, -1.0
    for i in range(m):
        val = min(math.log2(1.0 + g[i] * P), float(np.sum(C[i:])))
        if val > best:
            best_i, best = i, val
    powers = np.zeros(m + 1)
    powers[best_i] = P
    rates = np.zeros(m + 1)
    rates[best_i] = best
    alloc = Allocation(powers, np.zeros(m), C.copy(), rates)
    return Solution("df-sl", sum_rate(cfg, alloc), alloc, Permutation.identity(m),
                    {"closed_form": True, "layer": best_i})


def _df_rate_batch(cfg, pbar):
    """Sum-rate of pure-DF power ladders ``pbar`` (shape ``(n, M+1)``)."""
    g, C = cfg.gains, cfg.backhaul
    caps = np.maximum(np.log2((1.0 + g * pbar[:, :-1]) / (1.0 + g * pbar[:, 1:])), 0.0)
    suffix_c = np.cumsum(C[::-1])[::-1]
    s = np.zeros(len(pbar))
    for k in range(cfg.num_relays - 1, -1, -1):
        s = np.minimum(suffix_c[k], s + caps[:, k])
    return s


def df_ladder_search(cfg, points=33, rounds=4):
    """Refined grid over the DF power ladder (full power, empty CF layer).

    The ladder is parameterised by ratios ``u_k = Pbar_{k+1} / Pbar_k`` for the
    ``M - 1`` free layers; each round zooms in on the incumbent.
    """
    m = cfg.num_relays
    dims = m - 1
    lo, hi = np.zeros(dims), np.ones(dims)
    best_u, best_rate = None, -np.inf
    for _ in range(rounds):
        axes = [np.linspace(lo[d], hi[d], points) for d in range(dims)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dims) if dims else np.zeros((1, 0))
        pbar = np.zeros((len(grid), m + 1))
        pbar[:, 0] = cfg.power
        for k in range(dims):
            pbar[:, k + 1] = pbar[:, k] * grid[:, k]
        rates = _df_rate_batch(cfg, pbar)
        j = int(np.argmax(rates))
        if rates[j] > best_rate:
            best_rate, best_u = float(rates[j]), grid[j]
        width = (hi - lo) / 4.0
        lo, hi = np.maximum(best_u - width, 0.0), np.minimum(best_u + width, 1.0)
    pbar = np.zeros(m + 1)
    pbar[0] = cfg.power
    for k in range(dims):
        pbar[k + 1] = pbar[k] * best_u[k]
    return np.append(pbar[:-1] - pbar[1:], 0.0), best_rate


def solve_df_ml(cfg, opts=None):
    """Multi-layer DF: condensation method with betas and the CF layer switched off.

    Starts from the best single layer, equal layers and a seeded random ladder;
    for ``M <= 3`` a refined ladder grid supplies one more start.
    """
    opts = opts or HomotopyOptions()
    m = cfg.num_relays
    perm = Permutation.identity(m)
    sl = solve_df_sl(cfg)
    rng = np.random.default_rng(opts.seed)
    starts = {
        "single-layer": sl.allocation.layer_powers,
        "equal": np.append(np.full(m, cfg.power / m), 0.0),
        "random": np.append(rng.dirichlet(np.ones(m)) * cfg.power, 0.0),
    }
    grid_rate = None
    if m <= 3:
        powers, grid_rate = df_ladder_search(cfg)
        starts["ladder-grid"] = powers
    out = [Solution("df-ml", sl.sum_rate, sl.allocation, perm, {"start": "single-layer-exact"})]
    zeros = np.zeros(m)
    for name, powers in starts.items():
        pt = make_feasible(cfg, perm, powers, zeros, opts, df_only=True)
        pt, trace = run_homotopy(cfg, perm, pt, opts, df_only=True)
        alloc = recover_allocation(cfg, perm, pt, zero_tol=10 * opts.floor)
        out.append(Solution("df-ml", sum_rate(cfg, alloc), alloc, perm,
                            {"trace": trace, "start": name, "ladder_grid_rate": grid_rate}))
    best = _best(out)
    best.diagnostics["ladder_grid_rate"] = grid_rate
    return best


def solve_hybrid(cfg, opts=None, perms=None, heuristic=False, df_ml=None):
    """Hybrid DF/CF multi-layer scheme, best over decompression orders and starts.

    Each order is started from the strategies in :data:`STRATEGIES` (the first
    ``opts.starts`` of them, extra seeded random starts beyond four).  The CF,
    multi-layer DF (``df_ml`` if already computed) and single-layer DF
    solutions remain candidates, so the result never falls below them.
    """
    opts = opts or HomotopyOptions()
    perms = [Permutation(p) if not isinstance(p, Permutation) else p for p in perms] \
        if perms is not None else permutations_for(cfg, heuristic)
    df = df_ml if df_ml is not None else solve_df_ml(cfg, opts)
    sl = solve_df_sl(cfg)
    names = list(STRATEGIES[:opts.starts]) + ["random"] * max(0, opts.starts - len(STRATEGIES))
    out = []
    runs = 0
    for perm in perms:
        starts = []
        for j, name in enumerate(names):
            seed = opts.seed + j if name == "random" else None
            starts.append((name, initial_point(cfg, perm, name, opts, seed=seed)))
        for name, pt in starts:
            pt, trace = run_homotopy(cfg, perm, pt, opts)
            runs += 1
            alloc = recover_allocation(cfg, perm, pt, zero_tol=10 * opts.floor)
            out.append(Solution("hybrid", sum_rate(cfg, alloc), alloc, perm, {"trace": trace, "start": name}))
    for base in [solve_cf(cfg, p) for p in perms] + [df, sl]:
        perm = base.permutation if base.scheme == "cf" else perms[0]
        out.append(Solution("hybrid", base.sum_rate, base.allocation, perm,
                            {"trace": base.diagnostics.get("trace"), "start": f"{base.scheme}-exact"}))
    best = _best(out)
    best.diagnostics["runs"] = runs
    return best


def solve_cutset(cfg):
    return Solution("cutset", cutset_bound(cfg), None, None, {"closed_form": True})


def solve_scheme(cfg, scheme, opts=None, heuristic=False, df_ml=None):
    if scheme == "hybrid":
        return solve_hybrid(cfg, opts, heuristic=heuristic, df_ml=df_ml)
    if scheme == "cf":
        return solve_cf(cfg, heuristic=heuristic)
    if scheme == "df-ml":
        return solve_df_ml(cfg, opts)
    if scheme == "df-sl":
        return solve_df_sl(cfg)
    if scheme == "cutset":
        return solve_cutset(cfg)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
