"""Solve the regulator's asymptotic program and extract finite-n policies.

The program minimizes cost * aid + defaults over (y, v, z) subject to the
terminal stationarity equation (1 - y) * H(y, v) = lam * v * (1 - y) and the
fixed-point equation "controlled outflow at y equals y", with the per-class
start times x(y, v) pinned by the three-branch formula and 0 <= z <= y <= 1.

Solving is staged: stage A sets z = y (no singular class) and solves for
(y, v); stage B fixes v = (1 - cost) / j for every out-degree j in the support,
making that degree's cushion-equals-in-degree class singular, and solves for
(y, z).  The reported solution is the feasible candidate with the smallest
objective; boundary candidates y = 0 (nothing to reveal) and y = 1 (everything
burns) join the comparison when feasible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .asymptotics import (
    default_fraction_controlled,
    default_outflow,
    default_outflow_controlled,
    intervention_start,
    intervention_volume,
    program_residuals,
    singular_out_degrees,
    smallest_fixed_point,
    terminal_hamiltonian,
)
from .cascade import InterventionPolicy
from .distribution import JointDistribution
from .errors import ConstructionError, ParameterError

_RESIDUAL_TOL = 1e-9
_DEDUP_TOL = 1e-8

_STAGE_A_Y_STARTS = [round(0.05 + 0.1 * k, 2) for k in range(10)]
_STAGE_A_V_STARTS = [0.0, 1e-3, -1e-3, 1e-2, -1e-2, 0.1, -0.1, 0.3, -0.3, 1.0, -1.0, 3.0, -3.0]
_STAGE_B_Y_STARTS = [0.1, 0.3, 0.5, 0.7, 0.9]
_STAGE_B_Z_SHARES = [0.05, 0.5, 0.95]


@dataclass(frozen=True)
class OPSolution:
    """A feasible candidate of the program, with its objective decomposition."""

    end_fraction: float      # y: terminal revealed-link fraction, also T/m limit
    multiplier: float        # v: terminal-constraint multiplier
    singular_start: float    # z: aid start of the singular classes (= y if none)
    objective: float         # cost * interventions + defaults
    interventions: float     # scaled aid volume
    defaults: float          # scaled defaulted-node fraction
    stable: bool             # controlled outflow has slope < 1 at y (or y = 1)
    branch: str              # "stage_a" | "stage_b:j=.." | "boundary:.."
    residuals: tuple[float, float]
    singular_j: int | None = None

    @property
    def feasible(self) -> bool:
        return max(abs(self.residuals[0]), abs(self.residuals[1])) < _RESIDUAL_TOL


def _residuals(p, cost, y, v, z, singular_j):
    return program_residuals(p, cost, y, v, z, singular_j)


def _outflow_slope(p, cost, y, v, z, singular_j, h=1e-6):
    lo, hi = max(0.0, y - h), min(1.0, y + h)
    if hi <= lo:
        return float("inf")
    f_lo = default_outflow_controlled(p, cost, lo, v, z, singular_j)
    f_hi = default_outflow_controlled(p, cost, hi, v, z, singular_j)
    return (f_hi - f_lo) / (hi - lo)


def _make_solution(p, cost, y, v, z, branch, singular_j) -> OPSolution:
    res = _residuals(p, cost, y, v, z, singular_j)
    aid = intervention_volume(p, cost, y, v, z, singular_j)
    dflt = default_fraction_controlled(p, cost, y, v, z, singular_j)
    slope = _outflow_slope(p, cost, y, v, z, singular_j)
    stable = bool(slope < 1.0 - 1e-9) or y >= 1.0 - 1e-12
    return OPSolution(
        end_fraction=y, multiplier=v, singular_start=z,
        objective=cost * aid + dflt, interventions=aid, defaults=dflt,
        stable=stable, branch=branch, residuals=res, singular_j=singular_j,
    )


def _newton(fun, x0, max_iter=80, tol=1e-12):
    """Damped Newton with central-difference Jacobians; None when it stalls.

    The residual pieces are smooth between start-time branch switches but only
    continuous across them, so analytic Jacobians would be brittle; numerical
    differencing plus backtracking on the residual norm is robust here.
    """
    x = np.asarray(x0, dtype=float)
    f = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(f)):
        return None
    for _ in range(max_iter):
        norm = np.max(np.abs(f))
        if norm < tol:
            return x
        jac = np.empty((len(x), len(x)))
        for k in range(len(x)):
            hk = 1e-6 * max(1.0, abs(x[k]))
            e = np.zeros(len(x))
            e[k] = hk
            f_hi = np.asarray(fun(x + e), dtype=float)
            f_lo = np.asarray(fun(x - e), dtype=float)
            jac[:, k] = (f_hi - f_lo) / (2.0 * hk)
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(dx)):
            return None
        step = 1.0
        improved = False
        for _ in range(45):
            xn = x + step * dx
            fn = np.asarray(fun(xn), dtype=float)
            if np.all(np.isfinite(fn)) and np.max(np.abs(fn)) < norm:
                x, f = xn, fn
                improved = True
                break
            step *= 0.5
        if not improved:
            return x if np.max(np.abs(f)) < 1e-9 else None
    return x if np.max(np.abs(f)) < 1e-9 else None


def _dedup(points: list[tuple]) -> list[tuple]:
    kept: list[tuple] = []
    for pt in points:
        if all(max(abs(a - b) for a, b in zip(pt, q)) > _DEDUP_TOL for q in kept):
            kept.append(pt)
    return kept


def solve_stage_a(p: JointDistribution, cost: float) -> list[OPSolution]:
    """Roots of the two terminal equations with z = y, from a grid of starts."""
    if cost <= 0:
        raise ParameterError(f"intervention cost must be positive, got {cost}")

    def fun(x):
        y, v = x
        return _residuals(p, cost, y, v, y, None)

    raw = []
    for y0 in _STAGE_A_Y_STARTS:
        for v0 in _STAGE_A_V_STARTS:
            sol = _newton(fun, (y0, v0))
            if sol is not None:
                raw.append((float(sol[0]), float(sol[1])))
    out = []
    for y, v in _dedup(raw):
        # y ~ 1 makes the first equation vacuous; that boundary is handled
        # separately, as a candidate of solve_op
        if not -1e-9 <= y <= 1.0 - 1e-9:
            continue
        y = max(y, 0.0)
        cand = _make_solution(p, cost, y, v, y, "stage_a", None)
        if cand.feasible:
            out.append(cand)
    return sorted(out, key=lambda s: (s.end_fraction, s.multiplier))


def solve_stage_b(p: JointDistribution, cost: float, j: int) -> list[OPSolution]:
    """Roots with v pinned to (1 - cost) / j, unknowns (y, z), same equations."""
    if j <= 0:
        raise ParameterError(f"singular out-degree must be positive, got {j}")
    if j not in {jj for (_i, jj, _c) in p.entries}:
        raise ParameterError(f"out-degree {j} not in the support")
    v = (1.0 - cost) / j

    def fun(x):
        y, z = x
        return _residuals(p, cost, y, v, z, j)

    raw = []
    for y0 in _STAGE_B_Y_STARTS:
        for share in _STAGE_B_Z_SHARES:
            sol = _newton(fun, (y0, share * y0))
            if sol is not None:
                raw.append((float(sol[0]), float(sol[1])))
    out = []
    for y, z in _dedup(raw):
        if not (-1e-9 <= y <= 1.0 - 1e-9 and -1e-9 <= z <= y + 1e-9):
            continue
        y = max(y, 0.0)
        z = min(max(z, 0.0), y)
        cand = _make_solution(p, cost, y, v, z, f"stage_b:j={j}", j)
        if cand.feasible:
            out.append(cand)
    return sorted(out, key=lambda s: (s.end_fraction, s.singular_start))


def _solve_multiplier_at(p, cost, y, v_lo=-8.0, v_hi=8.0, grid=400):
    """All v with H(y, v) = lam * v, by scan plus bisection (1-D)."""
    lam = p.lam

    def g(v):
        return terminal_hamiltonian(p, cost, y, v) - lam * v

    vs = np.linspace(v_lo, v_hi, grid + 1)
    vals = [g(v) for v in vs]
    roots = []
    for k in range(grid):
        a, b = vs[k], vs[k + 1]
        ga, gb = vals[k], vals[k + 1]
        if ga == 0.0:
            roots.append(float(a))
        if ga * gb < 0.0:
            lo, hi = a, b
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if g(lo) * g(mid) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            roots.append(float(0.5 * (lo + hi)))
    return roots


def _boundary_candidates(p: JointDistribution, cost: float) -> list[OPSolution]:
    out = []
    # y = 0 is feasible only when no out-links start hidden (no defaulted mass flows)
    if default_outflow(p, 0.0) <= 1e-14:
        for v in _solve_multiplier_at(p, cost, 0.0):
            cand = _make_solution(p, cost, 0.0, v, 0.0, "boundary:y=0", None)
            if cand.feasible:
                out.append(cand)
                break
    # y = 1 is feasible only when all out-degree mass is vulnerable-or-defaulted
    out_mass = sum(j * m for (i, j, c), m in p.entries.items() if c <= i)
    if abs(out_mass - p.lam) <= 1e-12:
        support_j = sorted({j for (_i, j, _c) in p.entries if j > 0})
        if support_j:
            v_b = (1.0 - cost) / support_j[0] if cost < 1.0 else 0.0
            cand = _make_solution(p, cost, 1.0, v_b, 1.0, "boundary:y=1", None)
            if cand.feasible:
                out.append(cand)
    # no-intervention polish: the uncontrolled fixed point with its multiplier
    y_ni, _stable = smallest_fixed_point(lambda y: default_outflow(p, y))
    if y_ni < 1.0:
        for v in _solve_multiplier_at(p, cost, y_ni):
            cand = _make_solution(p, cost, y_ni, v, y_ni, "stage_a", None)
            if cand.feasible:
                out.append(cand)
    return out


def solve_op(p: JointDistribution, cost: float) -> OPSolution:
    """Best feasible candidate across both stages and the boundaries.

    Ties within 1e-9 of the minimum objective prefer stable candidates, then
    the smallest y (mirroring the smallest-fixed-point convention).  If every
    candidate is unstable with y < 1, the minimizer is still returned but a
    warning notes that the asymptotic guarantees do not apply.
    """
    candidates = list(solve_stage_a(p, cost))
    for j in sorted({j for (_i, j, _c) in p.entries if j > 0}):
        candidates.extend(solve_stage_b(p, cost, j))
    candidates.extend(_boundary_candidates(p, cost))
    candidates = [c for c in candidates if c.feasible]
    if not candidates:
        raise ConstructionError("no feasible candidate found for the program")
    best_obj = min(c.objective for c in candidates)
    near = [c for c in candidates if c.objective <= best_obj + 1e-9]
    near.sort(key=lambda c: (not c.stable, c.end_fraction))
    best = near[0]
    if not best.stable and best.end_fraction < 1.0:
        warnings.warn(
            "program minimizer is an unstable fixed point; asymptotic "
            "predictions are not guaranteed", RuntimeWarning,
        )
    return best


def extract_policy(sol: OPSolution, p: JointDistribution, cost: float) -> InterventionPolicy:
    """Finite-n threshold policy implied by a solution.

    Classes whose start time equals the horizon are omitted: they are never
    aided (a literal step cutoff at the horizon would fire during the random
    overshoot of the terminal step).  Start times are scale-free fractions; the
    simulator multiplies by the population's realized n * mean degree.
    """
    y, v, z = sol.end_fraction, sol.multiplier, sol.singular_start
    sing = singular_out_degrees(p, cost, v, sol.singular_j)
    thresholds: dict[tuple[int, int, int], float] = {}
    singular: dict[tuple[int, int], float] = {}
    pairs = sorted({(i, j) for (i, j, c) in p.entries if 1 <= c <= i and p.entries[(i, j, c)] > 0})
    for i, j in pairs:
        for c in range(1, i + 1):
            if c == i and j in sing:
                if z < y - 1e-12:
                    singular[(i, j)] = max(0.0, z)
                continue
            x = intervention_start(i, j, c, cost, v, y)
            if x < y - 1e-12:
                thresholds[(i, j, c)] = min(max(x, 0.0), 1.0)
    return InterventionPolicy.table(thresholds, singular)


def asymptotic_prediction(
    sol: OPSolution, p: JointDistribution, cost: float
) -> tuple[float, float, float]:
    """(defaults/n, aid/n, T/m) limits under the solution's policy.

    Only valid at a stable fixed point or at y = 1, where the whole vulnerable
    mass defaults.
    """
    y = sol.end_fraction
    if y >= 1.0 - 1e-12:
        return 1.0, sol.interventions, 1.0
    if not sol.stable:
        raise ParameterError(
            f"prediction refused: y={y:.6f} is an unstable fixed point "
            f"(branch {sol.branch}); limits are not guaranteed"
        )
    return sol.defaults, sol.interventions, y
