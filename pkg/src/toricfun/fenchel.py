"""Legendre-Fenchel transform ``fcheck(x) = inf_u(<x,u> - f(u))`` on the simplex.

The inner minimisation is solved with the structure of the potential:

* piecewise linear with only vertex slopes: barycentric formula (exact);
* piecewise linear, ``n = 1``: upper concave hull of ``(a_i, -c_i)`` (exact);
* piecewise linear, general: a small linear program;
* log-sum-exp and convex sums of them: damped Newton in ``u``;
* sums mixing one vertex-slope piecewise-linear term with smooth terms: the
  smooth problem is solved on every face of the kink arrangement and the
  smallest objective is kept;
* anything else: dense search followed by a local refinement.

On a face of the simplex the minimiser runs off to infinity; the limit is
obtained exactly by discarding the affine pieces whose slope leaves the face.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog, minimize, minimize_scalar

from .errors import AccuracyError, DomainError
from .metrics import (
    InvariantMetric,
    LogSumExpPotential,
    PiecewiseLinearPotential,
    Potential,
    ShiftedPotential,
    SumPotential,
)
from .simplex import cell_rule, cells, lattice_points

__all__ = [
    "FenchelGrid",
    "transform",
    "transform_points",
    "transform_grid",
    "integrate_over_simplex",
    "integrate_transform",
    "biconjugate",
    "FLAG_OK",
    "FLAG_BOUNDARY",
    "FLAG_UNCONVERGED",
]

FLAG_OK = 0
FLAG_BOUNDARY = 1
FLAG_UNCONVERGED = 2

_FACE_TOL = 1e-13


def _potential(f) -> Potential:
    return f.potential if isinstance(f, InvariantMetric) else f


def _check_points(x, n):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != n:
        raise DomainError(f"points must have {n} coordinates")
    if (x < -1e-12).any() or (x.sum(axis=1) > 1 + 1e-12).any():
        raise DomainError("points must lie in the standard simplex")
    return x


def _faces(x):
    zero = x <= _FACE_TOL
    top = 1.0 - x.sum(axis=1) <= _FACE_TOL
    return zero, top


# --------------------------------------------------------------------------
# damped Newton on an affine slice u = b0 + B w
# --------------------------------------------------------------------------

def _newton(smooth, lin, B, b0, max_iter=200, gtol=1e-12, escape=1e4):
    """Minimise ``<lin, u> - smooth(u)`` over ``u = b0 + B w`` for each row.

    ``smooth.derivatives`` returns value, gradient and Hessian of the concave
    part.  A row stops once the Newton decrement drops below rounding level
    or the gradient vanishes.  Rows whose iterate leaves the box ``|w| <= escape`` are stopped
    unconverged (the slice objective is unbounded there).  Returns
    ``(u, converged)``.
    """
    K, n = lin.shape
    d = B.shape[1]
    w = np.zeros((K, d))
    if d == 0:
        return np.broadcast_to(b0, (K, n)).copy(), np.ones(K, dtype=bool)

    def obj(w, rows):
        u = b0 + w @ B.T
        return np.einsum("kj,kj->k", lin[rows], u) - smooth(u), u

    active = np.ones(K, dtype=bool)
    conv = np.zeros(K, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        u = b0 + w[idx] @ B.T
        val, g, H = smooth.derivatives(u)
        lu = np.einsum("kj,kj->k", lin[idx], u)
        phi = lu - val
        # rounding level of phi, which cancels two terms of size |u|
        noise = 1e-15 * (1.0 + np.abs(lu) + np.abs(val))
        grad = (lin[idx] - g) @ B
        hess = -np.einsum("ji,kjl,lm->kim", B, H, B)
        gmax = np.abs(grad).max(axis=1)
        done = gmax <= gtol * (1.0 + np.abs(phi))
        conv[idx[done]] = True
        escaped = np.abs(w[idx]).max(axis=1) > escape
        active[idx[done | escaped]] = False
        done |= escaped
        keep = ~done
        if not keep.any():
            break
        idx, grad, hess, phi, noise = idx[keep], grad[keep], hess[keep], phi[keep], noise[keep]
        reg = 1e-14 * (1.0 + np.abs(np.trace(hess, axis1=1, axis2=2)))
        mat = hess + reg[:, None, None] * np.eye(d)
        try:
            step = -np.linalg.solve(mat, grad[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = -np.einsum("kij,kj->ki", np.linalg.pinv(mat), grad)
        step[~np.isfinite(step).all(axis=1)] = 0.0
        slope = np.einsum("ki,ki->k", grad, step)
        # Newton decrement: the value is within slope/2 of the minimum
        small = (slope <= 0) & (-slope <= 10.0 * noise)
        if small.any():
            conv[idx[small]] = True
            active[idx[small]] = False
            keep = ~small
            if not keep.any():
                continue
            idx, grad, hess, phi, noise, step, slope = (
                a[keep] for a in (idx, grad, hess, phi, noise, step, slope))
        bad = ~(slope < 0)
        step[bad] = -grad[bad]
        slope[bad] = -np.einsum("ki,ki->k", grad[bad], grad[bad])
        big = np.abs(step).max(axis=1)
        reach = np.maximum(4.0, 0.5 * np.abs(w[idx]).max(axis=1))
        cap = np.minimum(1.0, reach / np.maximum(big, 1e-300))
        step *= cap[:, None]
        slope *= cap
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(60):
            pi = np.flatnonzero(pending)
            if pi.size == 0:
                break
            trial, _ = obj(w[idx[pi]] + t[pi, None] * step[pi], idx[pi])
            ok = trial <= phi[pi] + 1e-4 * t[pi] * slope[pi] + noise[pi]
            pending[pi[ok]] = False
            t[pi[~ok]] *= 0.5
        # no descent found: we sit at the floating point minimum
        stalled = pending
        w[idx[~stalled]] += t[~stalled, None] * step[~stalled]
        conv[idx[stalled]] = -slope[stalled] <= 1e-10
        active[idx[stalled]] = False
    u = b0 + w @ B.T
    return u, conv


class _Smooth:
    """Concave smooth part ``sum coef * lse`` with value and derivatives."""

    def __init__(self, terms):
        self.terms = terms

    def __call__(self, u):
        return sum(c * p(u) for c, p in self.terms)

    def derivatives(self, u):
        v = g = H = 0.0
        for c, p in self.terms:
            pv, pg, pH = p.derivatives(u)
            v, g, H = v + c * pv, g + c * pg, H + c * pH
        return v, g, H

    def restrict(self, zero, top):
        return _Smooth([(c, p.restrict(zero, top)) for c, p in self.terms])


def _decompose(pot: Potential):
    """Split into ``(const, smooth terms, piecewise-linear terms)``."""
    if isinstance(pot, ShiftedPotential):
        const, sm, pl = _decompose(pot.base)
        return const + pot.shift, sm, pl
    if isinstance(pot, LogSumExpPotential):
        return 0.0, [(1.0, pot)], []
    if isinstance(pot, PiecewiseLinearPotential):
        return 0.0, [], [(1.0, pot)]
    if isinstance(pot, SumPotential):
        const, sm, pl = 0.0, [], []
        for c, p in pot.terms:
            k, s, q = _decompose(p)
            const += c * k
            sm += [(c * a, b) for a, b in s]
            pl += [(c * a, b) for a, b in q]
        return const, sm, pl
    return None


def _slice(n, pins, rows, rhs):
    """Affine parametrisation of ``{u : u_k = 0 (k in pins), rows @ u = rhs}``."""
    E = [np.eye(n)[k] for k in pins] + list(rows)
    r = [0.0] * len(pins) + list(rhs)
    if not E:
        return np.eye(n), np.zeros(n)
    E = np.asarray(E, dtype=float)
    b0 = np.linalg.lstsq(E, np.asarray(r, dtype=float), rcond=None)[0]
    return null_space(E), b0


def _face_pins(n, zero, top):
    pins = [k for k in range(n) if zero[k]]
    if top:
        free = [k for k in range(n) if not zero[k]]
        pins.append(free[0])
    return pins


def _smooth_transform(sm, x, zero, top):
    n = x.shape[1]
    sm = sm.restrict(zero, top)
    B, b0 = _slice(n, _face_pins(n, zero, top), [], [])
    u, conv = _newton(sm, x, B, b0)
    vals = np.einsum("kj,kj->k", x, u) - sm(u)
    return vals, conv


def _mixed_transform(sm, alpha, pl, x, zero, top):
    """Transform of ``smooth + alpha * pl`` with ``pl`` a vertex-slope minimum."""
    n = x.shape[1]
    sm = sm.restrict(zero, top)
    keep = pl.face_mask(zero, top)
    a, c = pl.a[keep], pl.c[keep]
    pins = _face_pins(n, zero, top)
    best = np.full(x.shape[0], np.inf)
    best_conv = np.zeros(x.shape[0], dtype=bool)
    for size in range(1, a.shape[0] + 1):
        for A in itertools.combinations(range(a.shape[0]), size):
            v0 = A[0]
            rows = [a[v] - a[v0] for v in A[1:]]
            rhs = [c[v0] - c[v] for v in A[1:]]
            B, b0 = _slice(n, pins, rows, rhs)
            u, conv = _newton(sm, x - alpha * a[v0], B, b0)
            true = np.einsum("kj,kj->k", x, u) - sm(u) - alpha * np.min(u @ a.T + c, axis=1)
            better = true < best
            best[better] = true[better]
            best_conv[better] = conv[better]
    return best, best_conv


def _pl_transform(pl: PiecewiseLinearPotential, x):
    n = x.shape[1]
    if pl.vertex_only:
        c = {tuple(float(v) for v in row): ci for row, ci in zip(pl.a_exact, pl.c)}
        c0 = c[(0.0,) * n]
        cv = np.array([c[tuple(float(k == j) for k in range(n))] for j in range(n)])
        return -((1.0 - x.sum(axis=1)) * c0 + x @ cv), np.ones(x.shape[0], dtype=bool)
    if n == 1:
        hx, hy = _upper_hull(pl.a[:, 0], -pl.c)
        return np.interp(x[:, 0], hx, hy), np.ones(x.shape[0], dtype=bool)
    vals = np.empty(x.shape[0])
    conv = np.ones(x.shape[0], dtype=bool)
    A_eq = np.vstack([pl.a.T, np.ones((1, pl.c.size))])
    for i, xi in enumerate(x):
        res = linprog(pl.c, A_eq=A_eq, b_eq=np.append(xi, 1.0), bounds=(0, None), method="highs")
        conv[i] = res.status == 0
        vals[i] = -res.fun if res.status == 0 else np.nan
    return vals, conv


def _upper_hull(xs, ys):
    order = np.lexsort((ys, xs))
    pts = []
    for px, py in zip(xs[order], ys[order]):
        if pts and pts[-1][0] == px:
            pts.pop()
        while len(pts) >= 2:
            (x1, y1), (x2, y2) = pts[-2], pts[-1]
            if (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1) >= 0:
                pts.pop()
            else:
                break
        pts.append((px, py))
    hx, hy = zip(*pts)
    return np.array(hx), np.array(hy)


def _generic_transform(pot: Potential, x, radius=60.0):
    n = x.shape[1]
    vals = np.empty(x.shape[0])
    conv = np.ones(x.shape[0], dtype=bool)
    if n == 1:
        grid = np.linspace(-radius, radius, 24001)
        fg = pot(grid[:, None])
        step = grid[1] - grid[0]
        # geometric extensions past both ends for minimisers far out in the tails
        reach = radius + np.geomspace(step, 1e4, 4000)
        tails = {0: -reach, grid.size - 1: reach}
        ftails = {k: pot(v[:, None]) for k, v in tails.items()}
        for i, xi in enumerate(x[:, 0]):
            phi = xi * grid - fg
            j = int(np.argmin(phi))
            s, lo, hi, best = grid, grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)], phi[j]
            if j in tails:
                s = tails[j]
                tphi = xi * s - ftails[j]
                k = int(np.argmin(tphi))
                if tphi[k] < best:
                    best = tphi[k]
                    if k == s.size - 1:
                        # still falling at |u| = 1e4: accept the limit once it is flat
                        vals[i] = best
                        conv[i] = abs(tphi[-1] - tphi[-2]) <= 1e-12 * (1.0 + abs(best))
                        continue
                    lo, hi = sorted((s[max(k - 1, 0)], s[k + 1]))
                else:
                    lo, hi = sorted((grid[j], s[0]))
            res = minimize_scalar(lambda v: xi * v - pot(np.array([[v]]))[0], bounds=(lo, hi),
                                  method="bounded", options={"xatol": 1e-12})
            vals[i] = min(res.fun, best)
        return vals, conv
    g = np.linspace(-radius / 3, radius / 3, 121)
    mesh = np.stack([m.ravel() for m in np.meshgrid(*([g] * n), indexing="ij")], -1)
    fg = pot(mesh)
    for i, xi in enumerate(x):
        j = int(np.argmin(mesh @ xi - fg))
        res = minimize(lambda u: float(u @ xi - pot(u[None, :])[0]), mesh[j], method="Nelder-Mead",
                       options={"xatol": 1e-11, "fatol": 1e-13, "maxiter": 20000})
        vals[i] = res.fun
        conv[i] = bool(res.success)
    return vals, conv


def transform_points(f, x) -> tuple[np.ndarray, np.ndarray]:
    """Fenchel transform at many points; returns ``(values, flags)``."""
    pot = _potential(f)
    x = _check_points(x, pot.n)
    zero, top = _faces(x)
    on_face = zero.any(axis=1) | top
    flags = np.where(on_face, FLAG_BOUNDARY, FLAG_OK).astype(np.int8)
    vals = np.empty(x.shape[0])
    conv = np.ones(x.shape[0], dtype=bool)
    parts = _decompose(pot)
    if parts is None:
        vals, conv = _generic_transform(pot, x)
        flags[~conv] = FLAG_UNCONVERGED
        return vals, flags
    const, sm, pl = parts
    if len(pl) > 1:
        raise DomainError("at most one piecewise-linear term is supported in a sum")
    if pl and sm and not pl[0][1].vertex_only:
        raise DomainError("mixed sums need a vertex-slope piecewise-linear term")
    if not sm:
        coef, p = pl[0]
        v, conv = _pl_transform(p, x / coef)
        vals = coef * v
    else:
        smooth = _Smooth(sm)
        keys = np.concatenate([zero, top[:, None]], axis=1)
        for key in np.unique(keys, axis=0):
            rows = np.flatnonzero((keys == key).all(axis=1))
            xz = x[rows].copy()
            z, t = key[:-1], bool(key[-1])
            xz[:, z] = 0.0
            if pl:
                v, c = _mixed_transform(smooth, pl[0][0], pl[0][1], xz, z, t)
            else:
                v, c = _smooth_transform(smooth, xz, z, t)
            vals[rows], conv[rows] = v, c
    vals = vals - const
    flags[~conv] = FLAG_UNCONVERGED
    return vals, flags


def transform(f, x, tol: float = 1e-9) -> float:
    """``inf_u(<x,u> - f(u))`` at one point of the simplex.

    Raises:
        AccuracyError: the inner minimisation did not converge.
    """
    vals, flags = transform_points(f, np.atleast_2d(x))
    if flags[0] == FLAG_UNCONVERGED:
        raise AccuracyError("Fenchel minimisation did not converge", float(vals[0]), tol)
    return float(vals[0])


# --------------------------------------------------------------------------
# grids and integration
# --------------------------------------------------------------------------

@dataclass
class FenchelGrid:
    """Values of a Fenchel transform on ``{x : M x integer} in Delta_n``.

    ``integral`` is computed at the nodes of the cell partition of degree
    ``degree`` (not from the lattice values) when a potential is available.
    """

    n: int
    M: int
    values: np.ndarray
    flags: np.ndarray
    tol: float = 1e-9
    degree: int | None = None
    integral: float | None = None
    integral_error: float | None = None
    cell_integrals: dict[tuple[int, ...], float] = field(default_factory=dict)

    @property
    def points(self) -> list[tuple[int, ...]]:
        return lattice_points(self.n, self.M)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float) / self.M

    def value(self, mu) -> float:
        return float(self.values[self._index()[tuple(mu)]])

    def _index(self):
        return {p: i for i, p in enumerate(self.points)}

    def interpolate(self, x) -> np.ndarray:
        """Piecewise-linear interpolation on the Freudenthal triangulation."""
        x = np.atleast_2d(np.asarray(x, dtype=float)) * self.M
        index = self._index()
        base = np.floor(x + 1e-12).astype(int)
        frac = np.clip(x - base, 0.0, 1.0)
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            order = np.argsort(-frac[i], kind="stable")
            corner = base[i].copy()
            fr = np.append(frac[i][order], 0.0)
            acc = (1.0 - fr[0]) * self.values[index[tuple(corner)]]
            for j, k in enumerate(order):
                if fr[j] == 0.0:
                    break
                corner[k] += 1
                acc += (fr[j] - fr[j + 1]) * self.values[index[tuple(corner)]]
            out[i] = acc
        return out

    def concavity_defect(self) -> float:
        """Largest violation of the midpoint test along grid lines."""
        index = self._index()
        worst = 0.0
        for p, i in index.items():
            for k in range(self.n):
                lo = list(p)
                hi = list(p)
                lo[k] -= 1
                hi[k] += 1
                a, b = index.get(tuple(lo)), index.get(tuple(hi))
                if a is not None and b is not None:
                    worst = max(worst, 0.5 * (self.values[a] + self.values[b]) - self.values[i])
        return float(worst)

    def to_dict(self) -> dict[str, Any]:
        d = {"n": self.n, "M": self.M, "values": [float(v) for v in self.values],
             "flags": [int(v) for v in self.flags], "tol": self.tol}
        if self.integral is not None:
            d.update(degree=self.degree, integral=self.integral, integral_error=self.integral_error,
                     cell_integrals=[[list(k), v] for k, v in sorted(self.cell_integrals.items())])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "FenchelGrid":
        cellints = {tuple(k): float(v) for k, v in d.get("cell_integrals", [])}
        return cls(int(d["n"]), int(d["M"]), np.asarray(d["values"], dtype=float),
                   np.asarray(d["flags"], dtype=np.int8), float(d.get("tol", 1e-9)), d.get("degree"),
                   d.get("integral"), d.get("integral_error"), cellints)

    @classmethod
    def from_json(cls, text: str) -> "FenchelGrid":
        return cls.from_dict(json.loads(text))


def _exact_pl_integral(pl: PiecewiseLinearPotential):
    """Exact integral of the transform of a piecewise-linear potential (n = 1)."""
    hx, hy = _upper_hull(pl.a[:, 0], -pl.c)
    return float(np.sum(0.5 * (hy[1:] + hy[:-1]) * np.diff(hx)))


def integrate_transform(f, degree: int, order: int = 31) -> tuple[float, float, dict]:
    """``int_{Delta_n} fcheck`` at the tanh-sinh nodes of the degree cells.

    Returns ``(integral, error estimate, per-cell integrals)``.  The error is
    the change against a rule with ten more nodes per direction.
    """
    pot = _potential(f)
    n = pot.n
    parts = _decompose(pot)
    if parts is not None and n == 1 and not parts[1] and len(parts[2]) == 1:
        const, _, ((coef, pl),) = parts
        if coef == 1.0 and not pl.vertex_only:
            return _exact_pl_integral(pl) - const, 0.0, {}
    per_cell: dict[tuple[int, ...], float] = {}
    totals = []
    for o in (order, order + 10):
        xs, ws, owners = [], [], []
        for c in cells(n, degree):
            if c.degenerate:
                continue
            x, _, _, w = cell_rule(c, o)
            xs.append(x)
            ws.append(w)
            owners.append((c.nu, x.shape[0]))
        X = np.concatenate(xs)
        vals, flags = transform_points(pot, X)
        if (flags == FLAG_UNCONVERGED).any():
            bad = int((flags == FLAG_UNCONVERGED).sum())
            raise AccuracyError(f"{bad} transform evaluations did not converge")
        pos = 0
        if o == order:
            for (nu, k), w in zip(owners, ws):
                per_cell[nu] = float(w @ vals[pos : pos + k])
                pos += k
        totals.append(float(np.concatenate(ws) @ vals))
    return totals[1], abs(totals[1] - totals[0]), per_cell


def transform_grid(f, M: int, tol: float = 1e-9, degree: int | None = None,
                   order: int = 31, integrate: bool = True) -> FenchelGrid:
    """Sample ``fcheck`` on the lattice of step ``1/M`` and integrate it.

    ``degree`` defaults to ``max(1, M // 16)``; unconverged points are flagged,
    not fatal.
    """
    pot = _potential(f)
    if M < 2:
        raise DomainError("grid resolution M must be >= 2")
    x = np.asarray(lattice_points(pot.n, M), dtype=float) / M
    vals, flags = transform_points(pot, x)
    grid = FenchelGrid(pot.n, M, vals, flags, tol, degree or max(1, M // 16))
    if integrate:
        grid.integral, grid.integral_error, grid.cell_integrals = integrate_transform(pot, grid.degree, order)
    return grid


def _grid_integral(grid: FenchelGrid, M: int, values) -> float:
    # integral of the Freudenthal interpolant: each simplex gets the mean of its vertices
    import math

    index = {p: i for i, p in enumerate(lattice_points(grid.n, M))}
    n = grid.n
    total = 0.0
    for base in lattice_points(n, M - 1) if M > 1 else [(0,) * n]:
        for perm in itertools.permutations(range(n)):
            corner = list(base)
            verts = [tuple(corner)]
            for k in perm:
                corner[k] += 1
                verts.append(tuple(corner))
            if all(v in index for v in verts):
                total += np.mean([values[index[v]] for v in verts])
    return total / (math.factorial(n) * M**n)


def integrate_over_simplex(grid: FenchelGrid) -> tuple[float, float]:
    """``int_{Delta_n} fcheck`` and an error estimate.

    Uses the cell-node integral stored on the grid when present; otherwise the
    lattice values are integrated through their piecewise-linear interpolant
    at ``M`` and ``M/2`` and Richardson-extrapolated.
    """
    if grid.integral is not None:
        return grid.integral, grid.integral_error or 0.0
    fine = _grid_integral(grid, grid.M, grid.values)
    if grid.M % 2:
        return fine, float("nan")
    index = {p: i for i, p in enumerate(grid.points)}
    coarse_vals = np.array([grid.values[index[tuple(2 * v for v in p)]]
                            for p in lattice_points(grid.n, grid.M // 2)])
    coarse = _grid_integral(grid, grid.M // 2, coarse_vals)
    return fine + (fine - coarse) / 3.0, abs(fine - coarse) / 3.0


def biconjugate(f, u, tol: float = 1e-9, resolution: int = 64) -> float:
    """``inf_{x in Delta_n}(<x,u> - fcheck(x))``.

    A lattice search at step ``1/resolution`` is refined by a local
    minimisation that evaluates the transform directly.
    """
    pot = _potential(f)
    n = pot.n
    u = np.asarray(u, dtype=float).reshape(n)
    pts = np.asarray(lattice_points(n, resolution), dtype=float) / resolution
    vals, _ = transform_points(pot, pts)
    obj = pts @ u - vals
    j = int(np.argmin(obj))
    best = float(obj[j])

    def g(y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, None)
        if y.sum() > 1.0:
            y = y / y.sum()
        v, fl = transform_points(pot, y[None, :])
        return float(y @ u - v[0])

    h = 1.0 / resolution
    if n == 1:
        lo, hi = max(0.0, pts[j, 0] - h), min(1.0, pts[j, 0] + h)
        res = minimize_scalar(lambda s: g([s]), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return min(best, float(res.fun))
    res = minimize(g, pts[j], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": tol * 1e-3, "initial_simplex": None})
    return min(best, float(res.fun))
