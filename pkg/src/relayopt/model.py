"""Network instance, decision variables and the exact rate arithmetic.

Relays are always held sorted by channel gain (weakest first).  Layer ``k``
(0-based, ``k < M``) is decoded by relays ``k..M-1``; layer ``M`` is the
compress-and-forward layer that only the destination decodes.  All rates are
in bits per channel use.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

BETA_MAX = 1.0 - 1e-12
FEAS_TOL = 1e-7
MAX_CUTSET_RELAYS = 20


class RelayOptError(Exception):
    pass


class BetaOutOfRange(RelayOptError, ValueError):
    pass


class TooManyRelays(RelayOptError, ValueError):
    pass


class InfeasibleCumulativePoint(RelayOptError, ValueError):
    pass


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Source, ``M`` out-of-band relays and their backhaul links.

    ``gains`` and ``backhaul`` are given in any relay order; they are sorted by
    gain on construction and ``order[i]`` keeps the caller's index of sorted
    relay ``i``.
    """

    gains: np.ndarray
    backhaul: np.ndarray
    power: float
    order: np.ndarray = field(init=False)

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=float))
        c = np.atleast_1d(np.asarray(self.backhaul, dtype=float))
        if g.ndim != 1 or g.size == 0:
            raise ValueError("need at least one relay")
        if c.shape != g.shape:
            raise ValueError("gains and backhaul must have the same length")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("channel gains must be positive")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("backhaul capacities must be non-negative")
        if not np.isfinite(self.power) or self.power <= 0:
            raise ValueError("power budget must be positive")
        order = np.argsort(g, kind="stable")
        for name, val in (("gains", g[order]), ("backhaul", c[order]), ("order", order)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "power", float(self.power))

    @classmethod
    def from_db(cls, gains_db, backhaul, power_db=0.0):
        return cls(db_to_linear(gains_db), backhaul, float(db_to_linear(power_db)))

    @property
    def num_relays(self):
        return self.gains.size


@dataclass(frozen=True)
class Permutation:
    """Wyner-Ziv decompression order: ``order[p]`` is the relay decoded p-th."""

    order: tuple

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"not a permutation of 0..{len(order) - 1}: {order}")
        object.__setattr__(self, "order", order)

    @property
    def inverse(self):
        inv = [0] * len(self.order)
        for p, i in enumerate(self.order):
            inv[i] = p
        return tuple(inv)

    @classmethod
    def identity(cls, m):
        return cls(tuple(range(m)))

    @classmethod
    def all(cls, m):
        return [cls(p) for p in itertools.permutations(range(m))]

    def __len__(self):
        return len(self.order)

    def __str__(self):
        return "-".join(str(i + 1) for i in self.order)


def _frozen(x):
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Allocation:
    layer_powers: np.ndarray  # P_1..P_{M+1}
    beta: np.ndarray  # per relay, 1 / (1 + sigma^2)
    df_split: np.ndarray  # backhaul devoted to decoded messages
    layer_rates: np.ndarray  # R_1..R_{M+1}

    def __post_init__(self):
        for name in ("layer_powers", "beta", "df_split", "layer_rates"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @classmethod
    def zeros(cls, m):
        return cls(np.zeros(m + 1), np.zeros(m), np.zeros(m), np.zeros(m + 1))

    @property
    def cum_powers(self):
        return np.cumsum(self.layer_powers[::-1])[::-1]

    @property
    def compression_noise(self):
        with np.errstate(divide="ignore"):
            return np.where(self.beta > 0, 1.0 / np.where(self.beta > 0, self.beta, 1.0) - 1.0, np.inf)


@dataclass(frozen=True)
class CumulativePoint:
    """Suffix-summed powers, prefix-summed weighted betas and the gamma slacks.

    ``cum_betas`` is indexed by decompression position, ``gamma`` by relay.
    """

    cum_powers: np.ndarray
    cum_betas: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("cum_powers", "cum_betas", "gamma"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class FeasibilityReport:
    slacks: dict
    tol: float

    @property
    def worst(self):
        return min((float(np.min(v)) for v in self.slacks.values() if np.size(v)), default=np.inf)

    @property
    def feasible(self):
        return self.worst >= -self.tol


def _prefix(bbar):
    # cumulative betas with the empty-prefix sentinel bbar_0 = 0 in front
    return np.concatenate(([0.0], bbar))


def cum_betas(cfg, perm, beta):
    beta = np.asarray(beta, dtype=float)
    return np.cumsum((cfg.gains * beta)[list(perm.order)])


def cumulative_from_allocation(alloc, cfg, perm):
    beta = np.asarray(alloc.beta)
    bbar = cum_betas(cfg, perm, beta)
    prev = _prefix(bbar)
    inv = np.array(perm.inverse)
    gamma = 1.0 - (bbar[inv] - prev[inv]) / cfg.gains
    return CumulativePoint(alloc.cum_powers, bbar, gamma)


def layer_rate_caps(cfg, alloc):
    pbar = alloc.cum_powers
    g = cfg.gains
    caps = np.log2((1.0 + g * pbar[:-1]) / (1.0 + g * pbar[1:]))
    return np.maximum(caps, 0.0)


def compression_costs(cfg, perm, alloc):
    beta = np.asarray(alloc.beta, dtype=float)
    if np.any(beta >= BETA_MAX) or np.any(beta < 0):
        raise BetaOutOfRange(f"beta must lie in [0, 1): {beta}")
    p1 = float(np.sum(alloc.layer_powers))
    prev = _prefix(cum_betas(cfg, perm, beta))
    inv = np.array(perm.inverse)
    wz = np.log2((1.0 + p1 * prev[inv + 1]) / (1.0 + p1 * prev[inv]))
    return np.where(beta > 0, wz - np.log2(1.0 - beta), 0.0)


def decoding_caps(cfg, alloc, perm=None):
    pbar = alloc.cum_powers
    bm = float(np.dot(cfg.gains, alloc.beta))
    suffix_df = np.cumsum(np.asarray(alloc.df_split)[::-1])[::-1]
    side = np.log2((1.0 + pbar[:-1] * bm) / (1.0 + alloc.layer_powers[-1] * bm))
    return suffix_df + side


def cf_layer_rate(cfg, alloc):
    return float(np.log2(1.0 + alloc.layer_powers[-1] * np.dot(cfg.gains, alloc.beta)))


def sum_rate(cfg, alloc):
    return float(np.sum(alloc.layer_rates[:-1])) + cf_layer_rate(cfg, alloc)


def check_feasibility(cfg, perm, alloc, tol=FEAS_TOL):
    """Slack (RHS - LHS) of every constraint of the per-order rate problem."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = np.asarray(alloc.layer_rates)
    beta = np.asarray(alloc.beta)
    suffix_r = np.cumsum(r[:-1][::-1])[::-1]
    slacks = {
        "rate": layer_rate_caps(cfg, alloc) - r[:-1],
        "backhaul": cfg.backhaul - alloc.df_split - compression_costs(cfg, perm, alloc),
        "decoding": decoding_caps(cfg, alloc, perm) - suffix_r,
        "power": np.array([cfg.power - float(np.sum(alloc.layer_powers))]),
        "cf_layer": np.array([cf_layer_rate(cfg, alloc) - r[-1]]),
        "bounds": np.concatenate([
            alloc.layer_powers, r, beta, alloc.df_split, cfg.backhaul - alloc.df_split,
        ]),
    }
    return FeasibilityReport(slacks, tol)


def cf_betas(cfg, perm, backhaul=None, power=None):
    """Closed-form compression coefficients when all power sits on the CF layer.

    Relays are visited in decompression order and each one's backhaul
    constraint is met with equality given the descriptions already decoded.
    """
    C = cfg.backhaul if backhaul is None else np.asarray(backhaul, dtype=float)
    P = cfg.power if power is None else power
    beta = np.zeros(cfg.num_relays)
    bbar = 0.0
    for i in perm.order:
        t = 2.0 ** C[i]
        beta[i] = (t - 1.0) * (1.0 + P * bbar) / (t * (1.0 + P * bbar) + P * cfg.gains[i])
        bbar += cfg.gains[i] * beta[i]
    return beta


def cutset_bound(cfg):
    """Exact minimum of the cut values over all 2^M relay subsets."""
    m = cfg.num_relays
    if m > MAX_CUTSET_RELAYS:
        raise TooManyRelays(f"cutset enumeration limited to {MAX_CUTSET_RELAYS} relays, got {m}")
    masks = np.array(list(itertools.product((0.0, 1.0), repeat=m)))
    cut = masks @ cfg.backhaul + np.log2(1.0 + cfg.power * ((1.0 - masks) @ cfg.gains))
    return float(np.min(cut))


def _greedy_suffix_rates(caps, dcaps):
    # maximal suffix sums S_k = min(D_k, S_{k+1} + cap_k), D made non-increasing first
    d = np.minimum.accumulate(np.maximum(dcaps, 0.0))
    s = np.zeros(len(caps) + 1)
    for k in range(len(caps) - 1, -1, -1):
        s[k] = min(d[k], s[k + 1] + caps[k])
    return np.maximum(s[:-1] - s[1:], 0.0)


def allocation_from_powers(cfg, perm, layer_powers, beta):
    """Best rates and backhaul split for fixed layer powers and betas.

    The DF share of each backhaul is whatever compression leaves over, layer
    rates start at their decodability caps and are then trimmed so every
    destination suffix constraint holds.
    """
    m = cfg.num_relays
    trial = Allocation(layer_powers, beta, np.zeros(m), np.zeros(m + 1))
    df = np.clip(cfg.backhaul - compression_costs(cfg, perm, trial), 0.0, cfg.backhaul)
    caps = layer_rate_caps(cfg, trial)
    trial = Allocation(layer_powers, beta, df, np.zeros(m + 1))
    r = _greedy_suffix_rates(caps, decoding_caps(cfg, trial, perm))
    rates = np.append(r, cf_layer_rate(cfg, trial))
    return Allocation(layer_powers, beta, df, rates)


def allocation_from_cumulative(cfg, perm, pt, zero_tol=0.0):
    """Map cumulative variables back to an allocation (equalities imposed).

    Powers and betas within ``zero_tol`` of zero are reported as exact zeros.
    """
    m = cfg.num_relays
    pbar = np.asarray(pt.cum_powers, dtype=float)
    bbar = np.asarray(pt.cum_betas, dtype=float)
    scale = max(cfg.power, 1.0)
    if pbar[0] > cfg.power * (1 + 1e-6) + 1e-12:
        raise InfeasibleCumulativePoint(f"total power {pbar[0]} exceeds budget {cfg.power}")
    powers = np.append(pbar[:-1] - pbar[1:], pbar[-1])
    inc = np.diff(_prefix(bbar))
    if np.min(powers) < -1e-6 * scale or np.min(inc) < -1e-6 * max(1.0, np.max(bbar, initial=0.0)):
        raise InfeasibleCumulativePoint("cumulative variables are not monotone")
    powers = np.where(powers <= zero_tol * scale, 0.0, powers)
    beta = np.zeros(m)
    beta[list(perm.order)] = inc / cfg.gains[list(perm.order)]
    beta = np.where(beta <= zero_tol, 0.0, beta)
    if np.any(beta >= BETA_MAX):
        raise InfeasibleCumulativePoint(f"recovered beta outside [0, 1): {beta}")
    if pbar[0] > cfg.power:
        powers = powers * (cfg.power / np.sum(powers))
    return allocation_from_powers(cfg, perm, powers, beta)
