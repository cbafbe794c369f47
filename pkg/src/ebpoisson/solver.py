"""Minimum-distance fitting of finitely supported priors to count data.

The solver alternates support updates with convex weight optimization.
Candidate atoms come from the stationary points of the fit's first-order
gap function, which for Poisson mixtures are the roots of a polynomial with
one term per distinct observed count.  Weights are optimized over the
probability simplex by exponentiated-gradient steps with Armijo
backtracking, followed by an active-set Newton cleanup.  The final iterate
carries a first-order certificate that can be audited on any grid.

All functions are deterministic: identical inputs produce bit-identical
results.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sp_optimize
from scipy import special

from . import core
from .core import DiscretePrior, EmpiricalPMF
from .divergences import DistanceSpec

# Gradient-path floor.  Wider than the 1e-300 evaluation floor because the
# chi-squared derivatives square and cube the denominator; 1e-100 keeps every
# derivative finite in double precision.
_FLOOR = 1e-100

# Relative tolerance the final certificate is audited at, and the margin the
# fitting loop targets before declaring the first-order conditions met.
_CERT_TOL = 1e-6
_STOP_GAP = _CERT_TOL / 4.0


class SolverError(RuntimeError):
    """Solver failed to produce a usable iterate; carries the objective trace."""

    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


@dataclass(frozen=True)
class WeightOptConfig:
    """Inner weight-optimizer settings: step rule, budget, gradient tolerance."""

    max_iters: int = 500
    grad_tol: float = 1e-8
    init_step: float = 1.0
    active_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol <= 0 or self.init_step <= 0 or self.active_tol <= 0:
            raise ValueError("tolerances and step sizes must be positive")


@dataclass(frozen=True)
class SolverConfig:
    merge_tol: float = 0.01
    prune_tol: float = 0.001
    max_iters: int = 15
    init_grid_size: int = 1000
    objective_tol: float = 1e-8
    support_max: float | None = None
    root_tol: float = 1e-9
    weight_opt: WeightOptConfig = field(default_factory=WeightOptConfig)

    def __post_init__(self):
        if self.merge_tol <= 0 or self.root_tol <= 0 or self.objective_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.prune_tol < 1:
            raise ValueError("prune_tol must lie in (0, 1)")
        if self.max_iters < 1 or self.init_grid_size < 2:
            raise ValueError("max_iters must be >= 1 and init_grid_size >= 2")
        if self.support_max is not None and not self.support_max > 0:
            raise ValueError("support_max must be positive when given")


@dataclass(frozen=True)
class Certificate:
    """First-order optimality summary for a fitted prior.

    ``min_d`` is the smallest gap value over the audit grid (>= 0 at an exact
    optimum), ``max_abs_d_atoms`` the largest |gap| at the fitted atoms
    (== 0 at an exact optimum), and ``scale`` the natural magnitude the gap
    should be compared against.
    """

    min_d: float
    max_abs_d_atoms: float
    scale: float

    def passes(self, tol: float = 1e-6) -> bool:
        return (self.min_d >= -tol * self.scale
                and self.max_abs_d_atoms <= tol * self.scale)


@dataclass(frozen=True)
class FitResult:
    prior: DiscretePrior
    objective_trace: tuple
    certificate: Certificate
    iterations_used: int
    converged: bool

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def _pmf_matrix(ys, atoms) -> np.ndarray:
    return np.exp(core.log_pmf_matrix(ys, atoms))


def _objective(spec: DistanceSpec, ps, fmix) -> float:
    return spec.t_const + float(np.sum(spec.ell(ps, np.maximum(fmix, _FLOOR))))


def _gradient_parts(spec, ps, pmat, w):
    """Mixture pmf, per-count ell derivatives, weight gradient, and scale."""
    f = np.maximum(pmat @ w, _FLOOR)
    d = np.asarray(spec.ell_db(ps, f), dtype=float)
    g = pmat.T @ d
    scale = float(-np.dot(d, f))
    return f, d, g, scale


def _kkt_residual(w, g, active_tol):
    lam = float(np.dot(w, g))
    active = w > active_tol
    r_active = float(np.max(np.abs(g[active] - lam))) if active.any() else 0.0
    r_inactive = max(0.0, float(np.max(lam - g)))
    return max(r_active, r_inactive)


def _exp_grad(spec, ps, pmat, w0, cfg: WeightOptConfig):
    """Exponentiated-gradient descent on the simplex with Armijo backtracking.

    Bails out after a run of negligible decreases; the Newton cleanup is far
    more effective near the optimum than further multiplicative steps.
    """
    w = np.asarray(w0, dtype=float)
    w = w / w.sum()
    obj = _objective(spec, ps, pmat @ w)
    eta = cfg.init_step
    converged = False
    stall = 0
    for _ in range(cfg.max_iters):
        _, _, g, scale = _gradient_parts(spec, ps, pmat, w)
        if not np.all(np.isfinite(g)):
            break
        if _kkt_residual(w, g, cfg.active_tol) <= cfg.grad_tol * scale:
            converged = True
            break
        lam = float(np.dot(w, g))
        progress = float(np.dot(w, (g - lam) ** 2))
        step = eta
        accepted = False
        for _ in range(60):
            z = -step * (g - lam)
            z -= z.max()
            wn = w * np.exp(z)
            total = wn.sum()
            if total > 0 and np.isfinite(total):
                wn = wn / total
                obj_n = _objective(spec, ps, pmat @ wn)
                if math.isfinite(obj_n) and obj_n <= obj - 1e-4 * step * progress:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        stall = stall + 1 if obj - obj_n <= 1e-13 * max(1.0, abs(obj)) else 0
        w, obj = wn, obj_n
        if stall >= 5:
            break
        eta = min(step * 2.0, 1e8)
    return w, obj, converged


def _newton_polish(spec, ps, pmat, w, obj, cfg: WeightOptConfig):
    """Equality-constrained Newton steps on the active coordinates.

    Cleans up the tail of the exponentiated-gradient run; the simplex
    constraint enters through a single Lagrange multiplier.
    """
    w = w.copy()
    for _ in range(40):
        f, _, g, scale = _gradient_parts(spec, ps, pmat, w)
        resid = _kkt_residual(w, g, cfg.active_tol)
        if resid <= 0.1 * cfg.grad_tol * scale:
            break
        act = w > cfg.active_tol
        ka = int(act.sum())
        if ka < 2 or ka > 320:
            break
        pa = pmat[:, act]
        h = np.asarray(spec.ell_d2b(ps, f), dtype=float)
        if not np.all(np.isfinite(h)):
            break
        hess = pa.T @ (pa * h[:, None])
        reg = 1e-12 * max(np.trace(hess) / ka, 1.0)
        hess[np.diag_indices(ka)] += reg
        kkt = np.zeros((ka + 1, ka + 1))
        kkt[:ka, :ka] = hess
        kkt[:ka, ka] = 1.0
        kkt[ka, :ka] = 1.0
        rhs = np.concatenate([-g[act], [0.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            break
        direction = sol[:ka]
        if not np.all(np.isfinite(direction)):
            break
        t_max = 1.0
        neg = direction < 0
        if neg.any():
            t_max = min(1.0, float(np.min(-0.999 * w[act][neg] / direction[neg])))
        if t_max <= 0:
            break
        improved = False
        t = t_max
        for _ in range(30):
            wn = w.copy()
            wn[act] = w[act] + t * direction
            wn = np.maximum(wn, 0.0)
            total = wn.sum()
            if total > 0:
                wn /= total
                obj_n = _objective(spec, ps, pmat @ wn)
                if math.isfinite(obj_n) and obj_n <= obj:
                    improved = obj_n < obj
                    w, obj = wn, obj_n
                    break
            t *= 0.5
        if not improved:
            break
    return w, obj


def _optimize_weights_arrays(spec, ps, pmat, w0, cfg: WeightOptConfig):
    w, obj, converged = _exp_grad(spec, ps, pmat, w0, cfg)
    w, obj = _newton_polish(spec, ps, pmat, w, obj, cfg)
    _, _, g, scale = _gradient_parts(spec, ps, pmat, w)
    converged = _kkt_residual(w, g, cfg.active_tol) <= cfg.grad_tol * scale
    return w, obj, converged


def optimize_weights(spec: DistanceSpec, emp: EmpiricalPMF, atoms, init_weights,
                     config: WeightOptConfig | None = None) -> np.ndarray:
    """Minimize the fit objective over mixture weights for fixed atoms.

    The problem is convex; the returned weights never have a larger
    objective than ``init_weights``.
    """
    cfg = config or WeightOptConfig()
    atoms = np.asarray(atoms, dtype=float)
    w0 = np.asarray(init_weights, dtype=float)
    if atoms.ndim != 1 or atoms.size == 0 or atoms.shape != w0.shape:
        raise ValueError("atoms and init_weights must be matching 1-d arrays")
    if np.any(atoms < 0) or np.any(np.diff(np.sort(atoms)) == 0):
        raise ValueError("atoms must be nonnegative and distinct")
    if np.any(w0 < 0) or abs(w0.sum() - 1.0) > 1e-9:
        raise ValueError("init_weights must be a point on the simplex")
    ys, ps = emp.support_arrays()
    pmat = _pmf_matrix(ys, atoms)
    w, _, _ = _optimize_weights_arrays(spec, ps, pmat, w0, cfg)
    return w


def merge_atoms(atoms, weights, merge_tol: float):
    """Pool atoms lying within ``merge_tol`` of their left neighbour.

    A single left-to-right pass chains near-duplicates into clusters; each
    cluster is replaced by its weight-weighted mean (plain mean when the
    cluster carries no weight) with the summed weight.  Output atoms are
    pairwise more than ``merge_tol`` apart.
    """
    a = np.asarray(atoms, dtype=float)
    w = np.asarray(weights, dtype=float)
    if a.shape != w.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("atoms and weights must be matching 1-d arrays")
    order = np.argsort(a, kind="stable")
    a, w = a[order], w[order]
    boundaries = np.nonzero(np.diff(a) > merge_tol)[0] + 1
    out_a = np.empty(len(boundaries) + 1)
    out_w = np.empty_like(out_a)
    for i, (lo, hi) in enumerate(zip(np.r_[0, boundaries], np.r_[boundaries, a.size])):
        chunk_a, chunk_w = a[lo:hi], w[lo:hi]
        total = chunk_w.sum()
        out_w[i] = total
        out_a[i] = float(chunk_a @ chunk_w / total) if total > 0 else float(chunk_a.mean())
    return out_a, out_w


def _pool_local(atoms, weights, coef):
    """Chain-pool atoms whose gap is small relative to the Poisson sd.

    Columns of the pmf matrix at theta and theta + d are nearly collinear
    when d is small against sqrt(theta + 1), so weight optimizers can smear
    one atom's mass across such a cluster.  Neighbours closer than
    ``coef * sqrt(mid + 1)`` are pooled into their weighted mean.
    """
    order = np.argsort(atoms, kind="stable")
    a, w = atoms[order], weights[order]
    mids = 0.5 * (a[1:] + a[:-1])
    chained = np.diff(a) <= coef * np.sqrt(mids + 1.0)
    boundaries = np.nonzero(~chained)[0] + 1
    out_a = np.empty(len(boundaries) + 1)
    out_w = np.empty_like(out_a)
    for i, (lo, hi) in enumerate(zip(np.r_[0, boundaries], np.r_[boundaries, a.size])):
        chunk_a, chunk_w = a[lo:hi], w[lo:hi]
        total = chunk_w.sum()
        out_w[i] = total
        out_a[i] = float(chunk_a @ chunk_w / total) if total > 0 else float(chunk_a.mean())
    return out_a, out_w


def _gap_values(a_coef, ys, thetas):
    """Derivative (up to the positive factor e^-theta) of the first-order gap.

    Evaluates sum_i a_i f_theta(y_i) (y_i / theta - 1) for each theta; shares
    its sign pattern and roots with the support polynomial.
    """
    thetas = np.asarray(thetas, dtype=float)
    out = np.empty(thetas.shape)
    pos = thetas > 0
    if pos.any():
        tp = thetas[pos]
        fmat = _pmf_matrix(ys, tp)
        factor = ys[:, None] / tp[None, :] - 1.0
        out[pos] = (a_coef[:, None] * fmat * factor).sum(axis=0)
    if (~pos).any():
        at0 = 0.0
        at0 += float(a_coef[ys == 1][0]) if (ys == 1).any() else 0.0
        at0 -= float(a_coef[ys == 0][0]) if (ys == 0).any() else 0.0
        out[~pos] = at0
    return out


def _stationary_points(a_coef, ys, lo, hi, root_tol, scan_points):
    """Roots of the support polynomial inside [lo, hi], with kinds.

    Sign changes are located on a fine scan grid and polished by Brent's
    method to ``root_tol``.  Returns (roots, is_min) where is_min flags a
    minus-to-plus crossing, i.e. a local minimum of the gap function.
    """
    ys = np.asarray(ys, dtype=float)
    if hi <= lo:
        return np.zeros(0), np.zeros(0, dtype=bool)
    grid = np.linspace(lo, hi, scan_points)
    vals = _gap_values(a_coef, ys, grid)

    def scalar(t):
        return float(_gap_values(a_coef, ys, np.array([t]))[0])

    found = []
    sign = np.sign(vals)
    for k in np.nonzero(vals == 0.0)[0]:
        left = sign[:k][sign[:k] != 0]
        right = sign[k + 1:][sign[k + 1:] != 0]
        upward = left.size > 0 and right.size > 0 and left[-1] < 0 < right[0]
        found.append((float(grid[k]), bool(upward)))
    flips = np.nonzero((sign[:-1] * sign[1:]) < 0)[0]
    for k in flips:
        try:
            r = sp_optimize.brentq(scalar, grid[k], grid[k + 1],
                                   xtol=root_tol, rtol=8 * np.finfo(float).eps)
        except ValueError:
            continue
        found.append((float(r), bool(sign[k] < 0)))
    if not found:
        return np.zeros(0), np.zeros(0, dtype=bool)
    found.sort()
    roots = np.array([r for r, _ in found])
    is_min = np.array([m for _, m in found])
    keep = np.ones(roots.size, dtype=bool)
    keep[1:] = np.diff(roots) > 2 * root_tol
    return roots[keep], is_min[keep]


def support_roots(weights, ys, lo: float, hi: float, *, root_tol: float = 1e-9,
                  scan_points: int = 10001) -> np.ndarray:
    """Real roots in [lo, hi] of sum_i w_i (y_i theta^(y_i - 1) - theta^y_i).

    ``weights`` has one coefficient per distinct count in ``ys``.  These are
    the candidate support points the fitting loop feeds back into the atom
    set each iteration.
    """
    ys = np.asarray(ys, dtype=float)
    w = np.asarray(weights, dtype=float)
    if ys.shape != w.shape or ys.ndim != 1 or ys.size == 0:
        raise ValueError("weights and ys must be matching 1-d arrays")
    if lo < 0 or hi < lo:
        raise ValueError("need 0 <= lo <= hi")
    # restore the y! factor the polynomial divides out, in log space
    a_coef = np.sign(w) * np.exp(np.log(np.abs(w), where=w != 0,
                                        out=np.full(w.shape, -np.inf))
                                 + special.gammaln(ys + 1.0))
    roots, _ = _stationary_points(a_coef, ys, float(lo), float(hi),
                                  root_tol, scan_points)
    return roots


def first_order_certificate(spec: DistanceSpec, emp: EmpiricalPMF,
                            prior: DiscretePrior, audit_grid) -> Certificate:
    """Evaluate the first-order gap of ``prior`` on an audit grid.

    The gap at theta is the directional derivative of the objective toward
    the point mass at theta; at an exact optimum it is nonnegative
    everywhere and zero at every atom.
    """
    ys, ps = emp.support_arrays()
    fhat = np.maximum(
        np.exp(core.mixture_log_pmf_arrays(prior.atom_array(), prior.weight_array(), ys)),
        _FLOOR)
    a = np.asarray(spec.ell_db(ps, fhat), dtype=float)
    scale = float(-np.dot(a, fhat))
    grid = np.asarray(audit_grid, dtype=float)
    d_grid = a @ _pmf_matrix(ys, grid) + scale
    d_atoms = a @ _pmf_matrix(ys, prior.atom_array()) + scale
    return Certificate(float(d_grid.min()), float(np.max(np.abs(d_atoms))), scale)


def _capped_grid_size(requested, hi, merge_tol):
    # spacing must exceed merge_tol or the first merge pass collapses the grid
    if hi <= merge_tol:
        return 2
    cap = int(hi / merge_tol)
    while cap > 2 and hi / (cap - 1) <= merge_tol:
        cap -= 1
    return max(2, min(requested, cap))


def _location_pass(spec, ps, ys, atoms, weights, lo, hi, radius, xatol):
    """One coordinate-descent sweep over atom locations, weights fixed.

    Each atom is moved to the minimizer of the true objective over a
    bounded window around it, so the objective never increases.  ``radius``
    may be a scalar or a per-atom array of window half-widths.
    """
    a = atoms.copy()
    r = np.broadcast_to(np.asarray(radius, dtype=float), a.shape)
    pm = _pmf_matrix(ys, a)
    mix = pm @ weights
    for j in range(a.size):
        wj = weights[j]
        if wj <= 0:
            continue
        base = mix - wj * pm[:, j]

        def window_obj(t):
            col = _pmf_matrix(ys, np.array([t]))[:, 0]
            return _objective(spec, ps, base + wj * col)

        lo_j = max(lo, a[j] - r[j])
        hi_j = min(hi, a[j] + r[j])
        if hi_j <= lo_j:
            continue
        current = _objective(spec, ps, mix)
        res = sp_optimize.minimize_scalar(window_obj, bounds=(lo_j, hi_j),
                                          method="bounded",
                                          options={"xatol": xatol})
        if res.success and res.fun < current:
            a[j] = float(res.x)
            pm[:, j] = _pmf_matrix(ys, np.array([a[j]]))[:, 0]
            mix = base + wj * pm[:, j]
    return a


def _seed_weights(weights, prune_tol):
    """Give zero-weight (freshly added) atoms a small starting share."""
    w = weights.copy()
    fresh = w <= 0
    n_new = int(fresh.sum())
    if n_new == 0:
        return w / w.sum()
    seed = min(5.0 * prune_tol, 0.1 / n_new)
    w *= (1.0 - seed * n_new) / w.sum()
    w[fresh] = seed
    return w


def _single_value_fit(spec, emp, cfg, hi_root):
    """Closed form for a one-point empirical pmf: the best prior is a point
    mass at the observed value (clipped into the allowed interval)."""
    y0 = float(emp.support[0])
    atom = min(max(y0, 0.0), hi_root)
    prior = DiscretePrior((atom,), (1.0,))
    ys, ps = emp.support_arrays()
    obj = _objective(spec, ps, _pmf_matrix(ys, np.array([atom]))[:, 0])
    audit_hi = cfg.support_max if cfg.support_max is not None else max(y0, 1.0)
    audit = np.linspace(0.0, audit_hi, 10 * cfg.init_grid_size + 1)
    cert = first_order_certificate(spec, emp, prior, audit)
    return FitResult(prior, (obj,), cert, 0, True)


def fit(spec: DistanceSpec, emp: EmpiricalPMF, config: SolverConfig | None = None) -> FitResult:
    """Fit a finitely supported prior minimizing the distance to ``emp``.

    Starts from a uniform grid of atoms, then alternates: locate the minima
    of the current first-order gap (stationary points plus the interval
    endpoints), add the negative ones to the atom set, merge
    near-duplicates, re-optimize the weights over the simplex, and prune
    negligible atoms.  Iterates are accepted only when the objective does
    not increase, so the trace is nonincreasing.  Stops once the weights
    are stationary and the gap clears the certificate margin everywhere
    (no improvement above ``objective_tol`` is then available), or after
    ``max_iters`` rounds.
    """
    cfg = config or SolverConfig()
    ys, ps = emp.support_arrays()
    m = ys.size
    constrained = cfg.support_max is not None
    if constrained:
        lo_root, hi_root = 0.0, float(cfg.support_max)
    else:
        lo_root, hi_root = float(ys[0]), float(ys[-1])
    if m == 1:
        return _single_value_fit(spec, emp, cfg, hi_root)

    grid_hi = float(cfg.support_max) if constrained else float(ys[-1])
    k0 = _capped_grid_size(cfg.init_grid_size, grid_hi, cfg.merge_tol)
    atoms = np.linspace(0.0, grid_hi, k0)
    weights = np.full(k0, 1.0 / k0)
    pmat = _pmf_matrix(ys, atoms)
    trace = [_objective(spec, ps, pmat @ weights)]
    scan_points = 10 * cfg.init_grid_size + 1
    converged = False
    weights_ok = False
    iterations = 0

    stop_tol = _STOP_GAP
    ys_f = ys.astype(float)

    def solve_on(cand_atoms, cand_w, prune=None):
        """Optimize weights, then repeatedly pool sub-threshold atoms into
        their nearest survivor and re-optimize until every weight clears
        the prune threshold.  Pooling conserves mass, so pruning never
        knocks the mixture far from the optimized one."""
        threshold = cfg.prune_tol if prune is None else prune
        pm = _pmf_matrix(ys, cand_atoms)
        w, o, c = _optimize_weights_arrays(spec, ps, pm, cand_w, cfg.weight_opt)
        a = cand_atoms
        for _ in range(6):
            keep = w >= threshold
            if not keep.any():
                keep[int(np.argmax(w))] = True
            if keep.all():
                break
            kept = np.nonzero(keep)[0]
            w2 = w[kept].copy()
            for j in np.nonzero(~keep)[0]:
                w2[int(np.argmin(np.abs(a[kept] - a[j])))] += w[j]
            a, pm = a[kept], pm[:, kept]
            w, o, c = _optimize_weights_arrays(spec, ps, pm, w2 / w2.sum(),
                                               cfg.weight_opt)
        return a, pm, w, o, c

    def gap_minima(pm, w):
        _, dv, _, sc = _gradient_parts(spec, ps, pm, w)
        rts, kinds = _stationary_points(dv, ys_f, lo_root, hi_root,
                                        cfg.root_tol, scan_points)
        return dv, sc, rts[kinds]

    def window_radii(a, coef):
        return np.maximum(coef * np.sqrt(a + 1.0), 2.0 * cfg.merge_tol)

    def descend(state, radius_coef, prune=None):
        """Alternate location sweeps with weight re-optimization."""
        best = state
        for _ in range(12):
            moved = _location_pass(spec, ps, ys, best[0], best[2], lo_root,
                                   hi_root, window_radii(best[0], radius_coef),
                                   cfg.root_tol)
            if float(np.max(np.abs(moved - best[0]))) <= cfg.root_tol:
                break
            ma, mw = merge_atoms(moved, best[2], cfg.merge_tol)
            cand = solve_on(ma, mw / mw.sum(), prune)
            if not (math.isfinite(cand[3]) and cand[3] < best[3]):
                break
            best = cand
        return best

    for iterations in range(1, cfg.max_iters + 1):
        dvec, scale, mins = gap_minima(pmat, weights)
        cand = np.unique(np.concatenate([mins, [lo_root, hi_root]]))
        d_cand = dvec @ _pmf_matrix(ys, cand) + scale
        if weights_ok and float(d_cand.min()) >= -stop_tol * scale:
            converged = True
            iterations -= 1
            break

        descent = cand[d_cand < 0.0]
        if descent.size:
            gaps = np.abs(descent[:, None] - atoms[None, :]).min(axis=1)
            descent = descent[gaps > cfg.merge_tol]

        accepted = False
        if descent.size:
            # grow: introduce the well-separated negative-gap candidates
            cand_w = _seed_weights(
                np.concatenate([weights, np.zeros(descent.size)]), cfg.prune_tol)
            a_n, pm_n, w_n, o_n, c_n = solve_on(
                np.concatenate([atoms, descent]), cand_w)
            if not math.isfinite(o_n):
                raise SolverError("objective became non-finite", trace)
            changed = (a_n.size != atoms.size
                       or float(np.max(np.abs(a_n - atoms))) > cfg.root_tol)
            if o_n <= trace[-1] + 1e-12 and (changed or o_n < trace[-1]):
                atoms, pmat, weights, weights_ok = a_n, pm_n, w_n, c_n
                trace.append(o_n)
                accepted = True
        if not accepted:
            # consolidate: re-solve in place, then try pooling chained atoms
            # and coordinate descent on atom locations; keep the best variant
            # if the objective does not rise
            base = solve_on(atoms, weights)
            variants = [base]
            for pool in (merge_atoms(base[0], base[2], 2.0 * cfg.merge_tol),
                         _pool_local(base[0], base[2], 0.25)):
                pooled_a, pooled_w = pool
                if pooled_a.size < base[0].size:
                    variants.append(solve_on(pooled_a, pooled_w / pooled_w.sum()))
            static = min(variants, key=lambda v: v[3])
            if static[0].size <= 60:
                variants.append(descend(static, 0.3 if static is not base else 0.05))
            if static is not base and base[0].size <= 60:
                variants.append(descend(base, 0.05))
            best = min(variants, key=lambda v: v[3])
            if not math.isfinite(best[3]):
                raise SolverError("objective became non-finite", trace)
            structural = (best[0].size != atoms.size
                          or float(np.max(np.abs(best[0] - atoms))) > cfg.root_tol)
            useful = (structural or best[3] < trace[-1]
                      or (best[4] and not weights_ok))
            if useful and best[3] <= trace[-1] + 1e-12:
                atoms, pmat, weights, weights_ok = best[0], best[1], best[2], best[4]
                trace.append(min(best[3], trace[-1]))
                accepted = True
        if not accepted:
            iterations -= 1
            break

    # Terminal polish.  The eta_2 prune can evict an atom whose optimal
    # weight sits below the threshold (isolated extreme counts ask for tiny
    # atoms), leaving a certificate-visible gap.  Reinstate such atoms with
    # the prune relaxed to a dust filter; every step stays objective-guarded.
    dust = 10.0 * cfg.weight_opt.active_tol
    for _ in range(10):
        dvec, scale, mins = gap_minima(pmat, weights)
        cand = np.unique(np.concatenate([mins, [lo_root, hi_root]]))
        d_cand = dvec @ _pmf_matrix(ys, cand) + scale
        if weights_ok and float(d_cand.min()) >= -stop_tol * scale:
            converged = True
            break
        grow = cand[d_cand < -stop_tol * scale]
        if grow.size:
            gaps = np.abs(grow[:, None] - atoms[None, :]).min(axis=1)
            grow = grow[gaps > cfg.root_tol]
        cand_w = _seed_weights(np.concatenate([weights, np.zeros(grow.size)]),
                               cfg.prune_tol)
        state = solve_on(np.concatenate([atoms, grow]), cand_w, dust)
        state = descend(state, 0.3, dust)
        if not math.isfinite(state[3]):
            raise SolverError("objective became non-finite", trace)
        moved = (state[0].size != atoms.size
                 or float(np.max(np.abs(state[0] - atoms))) > cfg.root_tol)
        if state[3] <= trace[-1] + 1e-12 and (moved or state[3] < trace[-1]
                                              or (state[4] and not weights_ok)):
            atoms, pmat, weights, weights_ok = state[0], state[1], state[2], state[4]
            trace.append(min(state[3], trace[-1]))
        else:
            break

    prior = DiscretePrior.from_points(atoms, weights)
    audit_hi = hi_root if constrained else float(ys[-1])
    audit = np.linspace(0.0, max(audit_hi, 1.0), 10 * cfg.init_grid_size + 1)
    cert = first_order_certificate(spec, emp, prior, audit)
    converged = bool(converged or cert.passes(_CERT_TOL))
    return FitResult(prior, tuple(trace), cert, iterations, converged)


_BRUTE_SUBSET_BUDGET = 250_000


def _column_objectives(spec, ps, cols):
    """Objective of each mixture column in a (m, S) pmf array."""
    return spec.t_const + spec.ell(ps[:, None], np.maximum(cols, _FLOOR)).sum(axis=0)


def brute_force_fit(spec: DistanceSpec, emp: EmpiricalPMF, num_atoms: int, grid) -> FitResult:
    """Exhaustive reference fit over all size-``num_atoms`` subsets of ``grid``.

    Used as ground truth for the iterative solver.  The per-subset weight
    problem is scanned by a vectorized section search (one or two free
    weights), and the best few candidates are re-optimized with the regular
    weight optimizer.  Supports up to three atoms.
    """
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0 or np.any(grid < 0):
        raise ValueError("grid must be a nonempty 1-d array of nonnegative reals")
    if num_atoms not in (1, 2, 3):
        raise ValueError("num_atoms must be 1, 2, or 3")
    if grid.size < num_atoms:
        raise ValueError("grid smaller than the requested number of atoms")
    n_subsets = math.comb(grid.size, num_atoms)
    ys, ps = emp.support_arrays()
    if n_subsets > _BRUTE_SUBSET_BUDGET or n_subsets * ys.size > 4_000_000:
        raise ValueError(f"{n_subsets} atom subsets over {ys.size} support points "
                         f"exceed the enumeration budget")

    fmat = _pmf_matrix(ys, grid)
    wcfg = WeightOptConfig()

    if num_atoms == 1:
        objs = _column_objectives(spec, ps, fmat)
        best = int(np.argmin(objs))
        candidates = [(np.array([grid[best]]), np.array([1.0]))]
    elif num_atoms == 2:
        ii, jj = np.triu_indices(grid.size, k=1)
        fa, fb = fmat[:, ii], fmat[:, jj]
        lo = np.zeros(ii.size)
        hi = np.ones(ii.size)
        for _ in range(48):  # ternary search; objective is convex in the split
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            o1 = _column_objectives(spec, ps, fa * m1 + fb * (1.0 - m1))
            o2 = _column_objectives(spec, ps, fa * m2 + fb * (1.0 - m2))
            take_left = o1 <= o2
            hi = np.where(take_left, m2, hi)
            lo = np.where(take_left, lo, m1)
        t = 0.5 * (lo + hi)
        objs = _column_objectives(spec, ps, fa * t + fb * (1.0 - t))
        order = np.argsort(objs)[:10]
        candidates = [(np.array([grid[ii[s]], grid[jj[s]]]),
                       np.array([t[s], 1.0 - t[s]])) for s in order]
    else:
        subsets = np.array(list(itertools.combinations(range(grid.size), 3)))
        steps = 12
        lattice = np.array([(i / steps, j / steps, (steps - i - j) / steps)
                            for i in range(steps + 1) for j in range(steps + 1 - i)])
        best_obj = np.full(len(subsets), np.inf)
        best_wix = np.zeros(len(subsets), dtype=int)
        cols = fmat[:, subsets]          # (m, S, 3)
        for wix, wvec in enumerate(lattice):
            mix = cols @ wvec            # (m, S)
            objs = _column_objectives(spec, ps, mix)
            better = objs < best_obj
            best_obj[better] = objs[better]
            best_wix[better] = wix
        order = np.argsort(best_obj)[:10]
        candidates = [(grid[subsets[s]], lattice[best_wix[s]].copy()) for s in order]

    best_prior = None
    best_obj_val = np.inf
    for cand_atoms, cand_w in candidates:
        cand_w = np.maximum(cand_w, 1e-9)
        cand_w /= cand_w.sum()
        pm = _pmf_matrix(ys, cand_atoms)
        w, obj, _ = _optimize_weights_arrays(spec, ps, pm, cand_w, wcfg)
        if obj < best_obj_val:
            best_obj_val = obj
            best_prior = DiscretePrior.from_points(cand_atoms, w, drop_tol=1e-12)

    audit = np.linspace(0.0, max(float(ys[-1]), 1.0), 10001)
    cert = first_order_certificate(spec, emp, best_prior, audit)
    return FitResult(best_prior, (float(best_obj_val),), cert, 1, True)


def worst_case_prior(h: float, grid_size: int = 1000, *, step: float = 0.1,
                     iters: int = 2000) -> DiscretePrior:
    """Least-favorable prior on [0, h]: maximizes the Bayes risk of the
    posterior-mean rule over a fixed equidistant grid.

    Multiplicative ascent with step ``step / sqrt(iter)``; an update is kept
    only when it does not lower the risk, so the risk trace is nondecreasing.
    """
    if not (h > 0 and math.isfinite(h)):
        raise ValueError("h must be positive and finite")
    if grid_size < 2 or iters < 1:
        raise ValueError("need grid_size >= 2 and iters >= 1")
    grid = np.linspace(0.0, h, grid_size)
    k = core.truncation_point(DiscretePrior((h,), (1.0,))) + 5
    fmat = _pmf_matrix(np.arange(k + 1), grid)   # rows y = 0 .. k
    ylow = np.arange(k, dtype=float)
    sq = grid ** 2

    def risk_and_grad(w):
        f = np.maximum(fmat @ w, _FLOOR)
        post = (ylow + 1.0) * f[1:] / f[:k]      # posterior mean at y = 0 .. k-1
        risk = float(np.dot(sq, w) - np.dot(f[:k], post ** 2))
        # supergradient: per-atom quadratic risk under the current rule
        grad = ((grid[None, :] - post[:, None]) ** 2 * fmat[:k]).sum(axis=0)
        return risk, grad

    w = np.full(grid_size, 1.0 / grid_size)
    risk, grad = risk_and_grad(w)
    for it in range(1, iters + 1):
        if not np.all(np.isfinite(grad)):
            raise SolverError("non-finite ascent gradient", (risk,))
        eta = step / math.sqrt(it)
        for _ in range(20):
            z = eta * (grad - grad.max())
            wn = w * np.exp(z)
            wn /= wn.sum()
            risk_n, grad_n = risk_and_grad(wn)
            if risk_n >= risk:
                w, risk, grad = wn, risk_n, grad_n
                break
            eta *= 0.5
        # an update that cannot avoid lowering the risk is skipped entirely
    keep = w > 1e-12
    return DiscretePrior.from_points(grid[keep], w[keep])
