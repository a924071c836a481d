"""Geometric programs and a log-domain primal-dual interior-point solver.

A GP is solved in the variables ``y = ln x``, where every posynomial becomes a
log-sum-exp of affine functions.  Products of posynomials are kept factored
(:class:`PosynomialProduct`) so that the log-domain form is a sum of
log-sum-exps rather than an exponentially large expansion.

Strict feasibility: when the supplied start point is not strictly inside every
constraint, a phase-I problem ``min s  s.t.  F_j(y) <= s`` (with ``s >= -1``)
is solved first; a non-negative phase-I optimum means the GP has no strictly
feasible point and is reported as infeasible.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


CENTER_MARGIN = 1e-3


class MissingVariable(KeyError):
    pass


class NonpositiveVariable(ValueError):
    pass


class GPStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Monomial:
    coef: float
    exps: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.coef > 0 and np.isfinite(self.coef)):
            raise ValueError(f"monomial coefficient must be positive, got {self.coef}")
        object.__setattr__(self, "coef", float(self.coef))
        object.__setattr__(self, "exps", {v: float(a) for v, a in self.exps.items() if a != 0})

    @classmethod
    def var(cls, name):
        return cls(1.0, {name: 1.0})

    @property
    def variables(self):
        return set(self.exps)

    def __mul__(self, other):
        if isinstance(other, Monomial):
            exps = dict(self.exps)
            for v, a in other.exps.items():
                exps[v] = exps.get(v, 0.0) + a
            return Monomial(self.coef * other.coef, exps)
        if isinstance(other, (Posynomial, PosynomialProduct)):
            return other * self
        return Monomial(self.coef * float(other), self.exps)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1
        return Monomial(self.coef / float(other), self.exps)

    def __rtruediv__(self, other):
        return Monomial(float(other), {}) * self ** -1

    def __pow__(self, a):
        return Monomial(self.coef ** a, {v: e * a for v, e in self.exps.items()})

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def __call__(self, point):
        return eval_monomial(self, point)


@dataclass(frozen=True)
class Posynomial:
    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("posynomial needs at least one term")
        object.__setattr__(self, "terms", terms)

    @property
    def variables(self):
        return set().union(*(t.variables for t in self.terms))

    def __add__(self, other):
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        return Posynomial(self.terms + (Monomial(float(other)),))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        if isinstance(other, PosynomialProduct):
            return other * self
        return Posynomial([t * other for t in self.terms])

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Posynomial([t / other for t in self.terms])

    def __call__(self, point):
        return eval_posynomial(self, point)


@dataclass(frozen=True)
class PosynomialProduct:
    """A posynomial kept as a product of posynomial factors."""

    factors: tuple

    def __post_init__(self):
        facs = tuple(f if isinstance(f, Posynomial) else Posynomial([f]) for f in self.factors)
        if not facs:
            raise ValueError("product needs at least one factor")
        object.__setattr__(self, "factors", facs)

    @property
    def variables(self):
        return set().union(*(f.variables for f in self.factors))

    def __mul__(self, other):
        if isinstance(other, PosynomialProduct):
            return PosynomialProduct(self.factors + other.factors)
        if isinstance(other, Posynomial):
            return PosynomialProduct(self.factors + (other,))
        if not isinstance(other, Monomial):
            other = Monomial(float(other))
        return PosynomialProduct(self.factors + (Posynomial([other]),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Monomial):
            other = Monomial(float(other))
        return self * other ** -1

    def expand(self):
        out = self.factors[0]
        for f in self.factors[1:]:
            out = out * f
        return out

    def __call__(self, point):
        return float(np.prod([eval_posynomial(f, point) for f in self.factors]))


def _as_factors(p):
    if isinstance(p, PosynomialProduct):
        return p.factors
    if isinstance(p, Monomial):
        return (Posynomial([p]),)
    return (p,)


def eval_monomial(m, point):
    val = m.coef
    for v, a in m.exps.items():
        if v not in point:
            raise MissingVariable(v)
        x = point[v]
        if not x > 0:
            raise NonpositiveVariable(f"{v} = {x}")
        val *= x ** a
    return float(val)


def eval_posynomial(p, point):
    if isinstance(p, PosynomialProduct):
        return p(point)
    if isinstance(p, Monomial):
        return eval_monomial(p, point)
    return float(sum(eval_monomial(t, point) for t in p.terms))


@dataclass(frozen=True)
class GPProblem:
    """Minimise ``objective`` subject to ``c(x) <= 1`` for every constraint.

    ``bounds`` maps a variable to ``(lo, hi)`` (either may be ``None``); they are
    enforced as the monomial constraints ``lo/x <= 1`` and ``x/hi <= 1``.
    """

    objective: object
    constraints: tuple = ()
    bounds: dict = field(default_factory=dict)
    labels: tuple = ()
    variables: tuple = None

    def __post_init__(self):
        cons = tuple(self.constraints)
        object.__setattr__(self, "constraints", cons)
        labels = tuple(self.labels) or tuple(f"c{j}" for j in range(len(cons)))
        if len(labels) != len(cons):
            raise ValueError("one label per constraint")
        object.__setattr__(self, "labels", labels)
        used = set(self.objective.variables).union(*(c.variables for c in cons))
        if self.variables is None:
            names = used | set(self.bounds)
        else:
            names = set(self.variables)
            missing = used - names
            if missing:
                raise MissingVariable(f"unregistered variables: {sorted(missing)}")
        object.__setattr__(self, "variables", tuple(sorted(names)))
        for v, (lo, hi) in self.bounds.items():
            if v not in names:
                raise MissingVariable(v)
            if (lo is not None and lo <= 0) or (hi is not None and hi <= 0) or (
                    lo is not None and hi is not None and lo > hi):
                raise ValueError(f"bad bounds for {v}: {(lo, hi)}")

    def all_constraints(self):
        out = list(self.constraints)
        for v in sorted(self.bounds):
            lo, hi = self.bounds[v]
            if lo is not None:
                out.append(Monomial(lo, {v: -1.0}))
            if hi is not None:
                out.append(Monomial(1.0 / hi, {v: 1.0}))
        return out


class ConvexProblem:
    """Log-domain form: functions ``F_j(y) = sum_f lse(A_f y + b_f)``.

    Function 0 is the objective; functions ``1..m`` are the constraints
    ``F_j(y) <= 0`` (user constraints first, then variable bounds).
    """

    def __init__(self, variables, functions):
        self.variables = tuple(variables)
        index = {v: i for i, v in enumerate(self.variables)}
        n = len(self.variables)
        rows, b, sizes, owner = [], [], [], []
        for j, factors in enumerate(functions):
            for fac in factors:
                for t in fac.terms:
                    row = np.zeros(n)
                    for v, a in t.exps.items():
                        row[index[v]] = a
                    rows.append(row)
                    b.append(np.log(t.coef))
                sizes.append(len(fac.terms))
                owner.append(j)
        self._set_arrays(np.array(rows).reshape(len(rows), n), np.array(b),
                         np.array(sizes, dtype=int), np.array(owner, dtype=int), len(functions))

    @classmethod
    def from_arrays(cls, variables, A, b, fsize, fowner, nfunc=None):
        obj = cls.__new__(cls)
        obj.variables = tuple(variables)
        obj._set_arrays(np.asarray(A, dtype=float), np.asarray(b, dtype=float),
                        np.asarray(fsize, dtype=int), np.asarray(fowner, dtype=int),
                        int(nfunc if nfunc is not None else np.max(fowner) + 1))
        return obj

    def with_coefficients(self, variables, A, b):
        """Same function/term structure with new exponent rows and offsets."""
        obj = ConvexProblem.__new__(ConvexProblem)
        obj.__dict__.update(self.__dict__)
        obj.variables = tuple(variables)
        obj.A, obj.b = np.asarray(A, dtype=float), np.asarray(b, dtype=float)
        return obj

    def _set_arrays(self, A, b, fsize, fowner, nfunc):
        self.A, self.b, self.fsize, self.fowner, self.nfunc = A, b, fsize, fowner, nfunc
        self.fstart = np.concatenate(([0], np.cumsum(fsize)[:-1])).astype(int)
        self.towner = np.repeat(fowner, fsize)
        self.tfactor = np.repeat(np.arange(len(fsize)), fsize)
        self.owner_matrix = np.zeros((nfunc, len(fsize)))
        self.owner_matrix[fowner, np.arange(len(fsize))] = 1.0

    @property
    def num_constraints(self):
        return self.nfunc - 1

    def values(self, y):
        z = self.A @ y + self.b
        zmax = np.maximum.reduceat(z, self.fstart)
        s = np.add.reduceat(np.exp(z - zmax[self.tfactor]), self.fstart)
        return self.owner_matrix @ (zmax + np.log(s))

    def evaluate(self, y):
        """Values, gradients and the per-factor pieces needed for Hessians."""
        z = self.A @ y + self.b
        zmax = np.maximum.reduceat(z, self.fstart)
        e = np.exp(z - zmax[self.tfactor])
        s = np.add.reduceat(e, self.fstart)
        vals = self.owner_matrix @ (zmax + np.log(s))
        w = e / s[self.tfactor]
        gf = np.add.reduceat(w[:, None] * self.A, self.fstart, axis=0)
        grads = self.owner_matrix @ gf
        return vals, grads, (w, gf)

    def hessian(self, weights, pieces):
        w, gf = pieces
        tw = weights[self.towner] * w
        fw = weights[self.fowner]
        return (self.A.T * tw) @ self.A - (gf.T * fw) @ gf


def to_convex_form(gp):
    functions = [_as_factors(gp.objective)] + [_as_factors(c) for c in gp.all_constraints()]
    return ConvexProblem(gp.variables, functions)


@dataclass(frozen=True)
class GPSolution:
    point: dict
    objective_value: float
    kkt_residual: float
    iterations: int
    status: GPStatus
    max_violation: float = 0.0

    @property
    def ok(self):
        return self.status == GPStatus.OPTIMAL


@dataclass
class _PDResult:
    y: np.ndarray
    lam: np.ndarray
    residual: float
    iterations: int
    status: GPStatus


def _primal_dual(cp, y, tol, max_iter, stop=None, mu=10.0, alpha=0.01, shrink=0.5, ybound=100.0):
    """Primal-dual interior-point iterations from a strictly feasible ``y``."""
    m = cp.num_constraints
    vals, grads, pieces = cp.evaluate(y)
    lam = -1.0 / vals[1:]
    weights = np.empty(m + 1)
    weights[0] = 1.0
    for it in range(1, max_iter + 1):
        u = -vals[1:]
        dc = grads[1:]
        eta = float(u @ lam)
        r_dual = grads[0] + lam @ dc
        res = max(float(np.abs(r_dual).max()) if r_dual.size else 0.0, eta)
        if res <= tol or (stop is not None and stop(y, vals)):
            return _PDResult(y, lam, res, it - 1, GPStatus.OPTIMAL)
        t = mu * max(m, 1) / max(eta, 1e-300)
        weights[1:] = lam
        hpd = cp.hessian(weights, pieces) + (dc.T * (lam / u)) @ dc
        rhs = -(grads[0] + (1.0 / (t * u)) @ dc)
        try:
            dy = np.linalg.solve(hpd, rhs)
        except np.linalg.LinAlgError:
            dy = np.linalg.lstsq(hpd, rhs, rcond=None)[0]
        r_cent = lam * u - 1.0 / t
        dlam = (lam * (dc @ dy) - r_cent) / u
        neg = dlam < 0
        step = min(1.0, float((-lam[neg] / dlam[neg]).min())) if neg.any() else 1.0
        step *= 0.99
        rnorm2 = float(r_dual @ r_dual + r_cent @ r_cent)
        while True:
            y_new = y + step * dy
            nv, ng, npieces = cp.evaluate(y_new)
            if (nv[1:] < 0).all():
                lam_new = lam + step * dlam
                rd = ng[0] + lam_new @ ng[1:]
                rc = lam_new * nv[1:] + 1.0 / t
                if float(rd @ rd + rc @ rc) <= ((1 - alpha * step) ** 2) * rnorm2:
                    break
            step *= shrink
            if step < 1e-14:
                status = GPStatus.UNBOUNDED if _recession_ray(cp, y, hpd, grads[0], ybound) \
                    else GPStatus.MAX_ITERATIONS
                return _PDResult(y, lam, res, it, status)
        y, lam, vals, grads, pieces = y_new, lam_new, nv, ng, npieces
        if np.abs(y).max() > ybound:
            return _PDResult(y, lam, np.inf, it, GPStatus.UNBOUNDED)
    r_dual = grads[0] + lam @ grads[1:]
    res = max(float(np.abs(r_dual).max()) if r_dual.size else 0.0, float(-vals[1:] @ lam))
    status = GPStatus.OPTIMAL if res <= tol else GPStatus.MAX_ITERATIONS
    return _PDResult(y, lam, res, max_iter, status)


def _recession_ray(cp, y, h, g0, ybound):
    """True if a regularised descent ray stays feasible while the objective falls without bound.

    A stalled line search on a problem with no KKT point usually means the
    Newton system is singular along a direction of recession; this probes it.
    """
    n = len(y)
    reg = 1e-8 * max(1.0, float(np.trace(h)) / max(n, 1))
    d = np.linalg.solve(h + reg * np.eye(n), -g0)
    norm = float(np.linalg.norm(d))
    if not norm > 0 or g0 @ d >= 0:
        return False
    d /= norm
    f_prev = cp.values(y)[0]
    for s in np.geomspace(1.0, 2.0 * ybound, 12):
        v = cp.values(y + s * d)
        if np.any(v[1:] >= 0) or v[0] >= f_prev:
            return False
        f_prev = v[0]
    return f_prev < cp.values(y)[0] - 1.0


def _unconstrained(cp, y, tol, max_iter, ybound=100.0):
    for it in range(1, max_iter + 1):
        vals, grads, pieces = cp.evaluate(y)
        g = grads[0]
        if np.max(np.abs(g), initial=0.0) <= tol:
            return _PDResult(y, np.zeros(0), float(np.max(np.abs(g), initial=0.0)), it - 1, GPStatus.OPTIMAL)
        h = cp.hessian(np.ones(1), pieces)
        dy = -np.linalg.lstsq(h, g, rcond=None)[0]
        if g @ dy >= 0:
            dy = -g
        step = 1.0
        while cp.values(y + step * dy)[0] > vals[0] + 0.01 * step * (g @ dy) and step > 1e-14:
            step *= 0.5
        y = y + step * dy
        if np.max(np.abs(y)) > ybound:
            return _PDResult(y, np.zeros(0), np.inf, it, GPStatus.UNBOUNDED)
    return _PDResult(y, np.zeros(0), np.inf, max_iter, GPStatus.MAX_ITERATIONS)


def _phase_one(cp, y0, tol, max_iter):
    """Find a strictly feasible y by minimising the largest constraint value."""
    n = len(cp.variables)
    s0 = float(np.max(cp.values(y0)[1:])) + 1.0
    keep = cp.towner > 0
    fkeep = cp.fowner > 0
    # the slack s is appended as the last coordinate: minimise s, F_j(y) - s <= 0, -s - 1 <= 0
    cons = np.hstack([cp.A[keep], -np.ones((int(keep.sum()), 1))])
    e_s = np.eye(1, n + 1, n)
    aux = ConvexProblem.from_arrays(
        cp.variables + ("__s",),
        np.vstack([e_s, cons, -e_s]),
        np.concatenate(([0.0], cp.b[keep], [-1.0])),
        np.concatenate(([1], cp.fsize[fkeep], [1])),
        np.concatenate(([0], cp.fowner[fkeep], [cp.nfunc])),
    )
    res = _primal_dual(aux, np.append(y0, s0), tol, max_iter, stop=lambda y, v: y[-1] < 0.0)
    y = res.y[:-1]
    return y, float(np.max(cp.values(y)[1:])), res.iterations


def solve_gp(gp, tol=1e-8, max_iter=200, x0=None):
    """Solve ``gp`` to a KKT-accurate point.

    ``x0`` is an optional warm start (a mapping variable -> positive value);
    missing variables start at 1.
    """
    cp = gp if isinstance(gp, ConvexProblem) else to_convex_form(gp)
    x0 = x0 or {}
    y = np.array([np.log(x0[v]) if v in x0 else 0.0 for v in cp.variables])
    iters = 0
    if cp.num_constraints == 0:
        res = _unconstrained(cp, y, tol, max_iter)
    else:
        vals = cp.values(y)
        # a start hugging the boundary makes the first multipliers huge; recentre it
        if np.max(vals[1:]) >= -CENTER_MARGIN:
            y, worst, iters = _phase_one(cp, y, tol, max_iter)
            if worst >= -1e-12:
                return GPSolution(_point(cp, y), float(np.exp(cp.values(y)[0])), np.inf, iters,
                                  GPStatus.INFEASIBLE, max(worst, 0.0))
        res = _primal_dual(cp, y, tol, max(max_iter - iters, 1))
    vals = cp.values(res.y)
    viol = max(float(np.max(vals[1:], initial=-np.inf)), 0.0)
    return GPSolution(_point(cp, res.y), float(np.exp(vals[0])), max(res.residual, viol),
                      iters + res.iterations, res.status, viol)


def _point(cp, y):
    return {v: float(np.exp(yi)) for v, yi in zip(cp.variables, y)}
