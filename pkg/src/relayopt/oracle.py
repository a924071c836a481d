"""Brute-force grid oracle over layer powers and compression coefficients.

Only powers and betas are gridded.  For each grid point the DF backhaul share
is whatever compression leaves over and the layer rates come from the exact
greedy assignment, so the remaining variables are optimal given the point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Allocation,
    Permutation,
    RelayOptError,
    allocation_from_powers,
    cf_betas,
    sum_rate,
)
from .schemes import Solution, TIE_TOL, permutations_for

MAX_EVALUATIONS = 10 ** 8
CHUNK = 1 << 21  # grid points evaluated per vectorised block


class GridTooLarge(RelayOptError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Grid with ``points_per_dimension`` subdivisions of each unit axis.

    Axis nodes are ``linspace(0, 1, n + 1)`` so grids with ``n`` and ``2n``
    subdivisions are nested.  Powers follow the cumulative-fraction ladder
    ``Pbar_1 = P``, ``Pbar_{k+1} = u_k * Pbar_k``; relay ``i`` gets
    ``beta_i = v_i * beta_i_max`` with ``beta_i_max`` the largest coefficient its
    backhaul can carry.  ``fixed_powers`` pins the layer powers (beta-only grid).
    """

    points_per_dimension: int = 50
    fixed_powers: tuple | None = None
    max_evaluations: int = MAX_EVALUATIONS

    def __post_init__(self):
        if int(self.points_per_dimension) < 2:
            raise ValueError("points_per_dimension must be at least 2")
        object.__setattr__(self, "points_per_dimension", int(self.points_per_dimension))
        if self.fixed_powers is not None:
            object.__setattr__(self, "fixed_powers", tuple(float(p) for p in self.fixed_powers))

    @property
    def nodes(self):
        return np.linspace(0.0, 1.0, self.points_per_dimension + 1)

    def size(self, m):
        per_axis = self.points_per_dimension + 1
        dims = m if self.fixed_powers is not None else 2 * m
        return per_axis ** dims

    def check(self, m):
        n = self.size(m)
        if n > self.max_evaluations:
            raise GridTooLarge(
                f"grid has {n:.3g} points for {m} relays, limit is {self.max_evaluations:.3g}; "
                f"lower points_per_dimension")


def inner_rate_assignment(caps, D):
    """Maximise the sum of layer rates under per-layer caps and suffix limits.

    Suffix sums are built backwards, ``S_k = min(D_k, S_{k+1} + cap_k)``, after
    ``D`` is replaced by its running minimum so the rates stay non-negative.
    Returns ``(R, total)``.
    """
    caps = np.asarray(caps, dtype=float)
    d = np.minimum.accumulate(np.maximum(np.asarray(D, dtype=float), 0.0))
    s = np.zeros(len(caps) + 1)
    for k in range(len(caps) - 1, -1, -1):
        s[k] = min(d[k], s[k + 1] + caps[k])
    return np.maximum(s[:-1] - s[1:], 0.0), float(s[0])


def _grid(axes_count, nodes):
    if axes_count == 0:
        return np.zeros((1, 0))
    mesh = np.meshgrid(*([nodes] * axes_count), indexing="ij")
    return np.stack(mesh, -1).reshape(-1, axes_count)


def _beta_table(cfg, perm, nodes):
    """Feasible beta grid for ``perm`` with each relay's leftover DF backhaul."""
    m = cfg.num_relays
    bmax = cf_betas(cfg, perm)
    beta = _grid(m, nodes) * bmax
    order = list(perm.order)
    inc = (cfg.gains * beta)[:, order]
    bbar = np.cumsum(inc, axis=1)
    prev = bbar - inc
    P = cfg.power
    with np.errstate(divide="ignore"):
        cost_pos = np.log2((1.0 + P * bbar) / (1.0 + P * prev)) - np.log2(1.0 - beta[:, order])
    cost = np.empty_like(beta)
    cost[:, order] = cost_pos
    cost = np.where(beta > 0, cost, 0.0)
    keep = np.all(cost <= cfg.backhaul + 1e-12, axis=1)
    df = np.clip(cfg.backhaul - cost[keep], 0.0, cfg.backhaul)
    return beta[keep], df, bbar[keep, -1] if m else np.zeros(int(keep.sum()))


def _power_table(cfg, spec, nodes):
    m = cfg.num_relays
    if spec.fixed_powers is not None:
        p = np.asarray(spec.fixed_powers, dtype=float)
        if p.shape != (m + 1,) or np.any(p < 0):
            raise ValueError(f"fixed_powers needs {m + 1} non-negative entries")
        return np.cumsum(p[::-1])[::-1][None, :]
    u = _grid(m, nodes)
    pbar = np.empty((len(u), m + 1))
    pbar[:, 0] = cfg.power
    for k in range(m):
        pbar[:, k + 1] = pbar[:, k] * u[:, k]
    return pbar


def grid_search(cfg, perm, spec=None):
    """Best grid point for a fixed decompression order; raises :class:`GridTooLarge`."""
    spec = spec or GridSpec()
    m = cfg.num_relays
    perm = perm if isinstance(perm, Permutation) else Permutation(perm)
    spec.check(m)
    nodes = spec.nodes
    beta, df, bm = _beta_table(cfg, perm, nodes)
    pbar = _power_table(cfg, spec, nodes)
    g = cfg.gains
    caps = np.maximum(np.log2((1.0 + g * pbar[:, :-1]) / (1.0 + g * pbar[:, 1:])), 0.0)
    suffix_df = np.cumsum(df[:, ::-1], axis=1)[:, ::-1]

    best_val, best_idx = -np.inf, (0, 0)
    rows = max(1, CHUNK // max(len(beta), 1))
    for lo in range(0, len(pbar), rows):
        pb = pbar[lo:lo + rows, :, None]               # (n_p, M+1, 1)
        top = pb[:, m, :] * bm                         # (n_p, n_b)
        s = np.zeros((pb.shape[0], len(bm)))
        d_run = None
        dks = []
        for k in range(m):
            dks.append(suffix_df[:, k] + np.log2((1.0 + pb[:, k, :] * bm) / (1.0 + top)))
        for k in range(m):
            dks[k] = np.maximum(dks[k], 0.0) if d_run is None else np.minimum(d_run, np.maximum(dks[k], 0.0))
            d_run = dks[k]
        for k in range(m - 1, -1, -1):
            s = np.minimum(dks[k], s + caps[lo:lo + rows, k, None])
        total = s + np.log2(1.0 + top)
        j = int(np.argmax(total))
        if total.flat[j] > best_val:
            best_val = float(total.flat[j])
            best_idx = (lo + j // total.shape[1], j % total.shape[1])

    ip, ib = best_idx
    powers = np.append(pbar[ip, :-1] - pbar[ip, 1:], pbar[ip, -1])
    alloc = allocation_from_powers(cfg, perm, powers, beta[ib])
    return Solution("oracle", sum_rate(cfg, alloc), alloc, perm,
                    {"grid_points": spec.size(m), "grid_value": best_val})


def oracle_search(cfg, spec=None, perms=None):
    """Best grid point over all decompression orders (first order wins ties)."""
    spec = spec or GridSpec()
    spec.check(cfg.num_relays)
    perms = perms if perms is not None else permutations_for(cfg)
    best = None
    for perm in perms:
        sol = grid_search(cfg, perm, spec)
        if best is None or sol.sum_rate > best.sum_rate + TIE_TOL:
            best = sol
    return best
