"""Deterministic limits of the scaled contagion process.

State masses s_tau^{i,j,c,l} track, per network class, the fraction of nodes
that started vulnerable and currently sit at equity-plus-aid c with l revealed
in-links.  The index set per (i, j) is {0 <= l < c <= i} plus the rescued state
(i+1, i).  On any interval where the control vector is constant the system of
ODEs has an explicit solution (mixtures of binomial terms in the elapsed-time
variable), which `propagate` evaluates; `integrate_rk4` integrates the same
ODEs numerically and exists purely as a cross-check oracle.

The terminal objects are plain functions of (y, v, z):

- default_outflow / default_fraction: out-link flow and node share of the
  default set when nobody intervenes; the process ends at the smallest fixed
  point of the outflow.
- intervention_start: the scaled time from which a class is worth aiding,
  given the terminal fraction y, the multiplier v and the unit cost.
- controlled counterparts (default_outflow_controlled, ...): the same limits
  under the threshold policy, including the singular classes whose start z is
  a free variable.
- terminal_hamiltonian: left side of the terminal stationarity equation
  H(y, v) = lam * v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .distribution import JointDistribution
from .errors import ParameterError

StateKey = tuple[int, int, int, int]  # (i, j, c, l)
ClassKey = tuple[int, int, int]

_SINGULAR_TOL = 1e-12


# ---------------------------------------------------------------------------
# tail probabilities (exact coefficients; supports are small)
# ---------------------------------------------------------------------------

_COMB_ROWS: dict[int, tuple[int, ...]] = {}


def _comb_row(i: int) -> tuple[int, ...]:
    row = _COMB_ROWS.get(i)
    if row is None:
        row = tuple(comb(i, m) for m in range(i + 1))
        _COMB_ROWS[i] = row
    return row


def binom_tail(i: int, x: float, c: int) -> float:
    """P(Bin(i, x) >= c), evaluated as the defining polynomial in x."""
    if c <= 0:
        return 1.0
    if c > i:
        return 0.0
    row = _comb_row(i)
    one = 1.0 - x
    pows_x = [1.0] * (i + 1)
    acc = 1.0
    for m in range(1, i + 1):
        acc *= x
        pows_x[m] = acc
    tot = 0.0
    po = 1.0
    for m in range(i, c - 1, -1):
        tot += row[m] * pows_x[m] * po
        po *= one
    return tot


def _interventions_per_class(i: int, c: int, x: float, y: float) -> float:
    """Expected aid units per node of a class intervened on [x, y].

    Of i in-stubs, n are revealed before the start x (the node must survive:
    n < c), another m - n inside the window, i - m never; every window
    revelation at distance one is aided, giving m - c + 1 units.
    """
    yx = y - x
    if yx < 0.0:
        yx = 0.0
    one_m_y = 1.0 - y
    total = 0.0
    for m in range(c, i + 1):
        for n in range(0, c):
            coeff = (m - c + 1) * comb(i, m) * comb(m, n)
            total += coeff * x**n * yx ** (m - n) * one_m_y ** (i - m)
    return total


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """State masses anchored at scaled time tau (in [0, lam))."""

    tau: float
    lam: float
    s: dict[StateKey, float]

    def value(self, i: int, j: int, c: int, l: int) -> float:
        return self.s.get((i, j, c, l), 0.0)


def state_space(p: JointDistribution) -> list[StateKey]:
    """All trackable states for (i, j) pairs carrying vulnerable mass.

    Interventions can push mass into equity levels with zero initial mass, so
    every c in 1..i is present, not just the supported ones.
    """
    keys: list[StateKey] = []
    pairs = sorted(
        {(i, j) for (i, j, c) in p.entries if 1 <= c <= i and p.entries[(i, j, c)] > 0}
    )
    for i, j in pairs:
        for c in range(1, i + 1):
            for l in range(0, c):
                keys.append((i, j, c, l))
        keys.append((i, j, i + 1, i))
    return keys


def initial_trajectory(p: JointDistribution) -> Trajectory:
    s = {}
    for key in state_space(p):
        i, j, c, l = key
        s[key] = p.mass(i, j, c) if (l == 0 and c <= i) else 0.0
    return Trajectory(tau=0.0, lam=p.lam, s=s)


def propagate(traj: Trajectory, tau2: float, controls: dict[ClassKey, int]) -> Trajectory:
    """Closed-form solution over [traj.tau, tau2] with constant controls.

    `controls[(i, j, c)] = 1` means every class-(i, j, c) node one loss from
    default is aided throughout the interval.  Exact for constant controls; the
    trajectory caller is responsible for splitting at control switch times.
    """
    if tau2 < traj.tau:
        raise ParameterError(f"cannot propagate backwards: {tau2} < {traj.tau}")
    if tau2 >= traj.lam:
        raise ParameterError(f"target time {tau2} is not below the mean degree {traj.lam}")
    if tau2 == traj.tau:
        return traj
    lam = traj.lam
    theta = (lam - tau2) / (lam - traj.tau)
    s1 = traj.s
    out: dict[StateKey, float] = {}

    pairs = sorted({(i, j) for (i, j, _c, _l) in s1})
    for i, j in pairs:
        def b(cc: int) -> int:
            return controls.get((i, j, cc), 0)

        def bprod(q: int, hi: int) -> float:
            # controls are 0/1, so the product is an all-on indicator;
            # the empty product (q > hi) is 1
            for k in range(q, hi + 1):
                if not b(k):
                    return 0.0
            return 1.0

        for c in range(1, i + 1):
            for l in range(0, c - 1):
                acc = 0.0
                for r in range(0, l + 1):
                    acc += s1.get((i, j, c, r), 0.0) * comb(i - r, l - r) * (1 - theta) ** (l - r)
                out[(i, j, c, l)] = theta ** (i - l) * acc
            # distance-one state (c, c-1): sources (q, r) climb to c through aid
            acc = 0.0
            for r in range(0, c):
                for q in range(r + 1, c + 1):
                    if bprod(q, c - 1) == 0.0:
                        continue
                    acc += s1.get((i, j, q, r), 0.0) * comb(i - r, c - 1 - r) * (1 - theta) ** (c - 1 - r)
            out[(i, j, c, c - 1)] = theta ** (i - c + 1) * acc
        acc = s1.get((i, j, i + 1, i), 0.0)
        for r in range(0, i):
            for q in range(r + 1, i + 1):
                if bprod(q, i) == 0.0:
                    continue
                acc += s1.get((i, j, q, r), 0.0) * (1 - theta) ** (i - r)
        out[(i, j, i + 1, i)] = acc

    return Trajectory(tau=tau2, lam=lam, s=out)


# ---------------------------------------------------------------------------
# threshold schedules and piecewise evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSchedule:
    """Scaled start times per class, plus the singular start, horizon and cost.

    A class missing from `starts` is never aided (start = 1).  `singular_pairs`
    lists (i, j) pairs whose state c == i uses `singular_start` instead of the
    table.  `end` (y), `multiplier` (v) and `cost` are carried for provenance
    and validation; the ODE side only consumes the start times.
    """

    starts: dict[ClassKey, float] = field(default_factory=dict)
    singular_pairs: frozenset[tuple[int, int]] = frozenset()
    singular_start: float = 1.0
    end: float = 1.0
    multiplier: float = 0.0
    cost: float = 1.0

    def start_of(self, i: int, j: int, c: int) -> float:
        if c == i and (i, j) in self.singular_pairs:
            return self.singular_start
        return self.starts.get((i, j, c), 1.0)


def _controls_at(schedule: ThresholdSchedule, tau: float, lam: float,
                 keys: list[ClassKey]) -> dict[ClassKey, int]:
    return {
        (i, j, c): 1 if tau >= lam * schedule.start_of(i, j, c) - 1e-12 else 0
        for (i, j, c) in keys
    }


def _control_keys(p: JointDistribution) -> list[ClassKey]:
    keys = []
    for i, j in {(i, j) for (i, j, c) in p.entries if 1 <= c <= i and p.entries[(i, j, c)] > 0}:
        keys.extend((i, j, c) for c in range(1, i + 1))
    return sorted(keys)


def _switch_times(schedule: ThresholdSchedule, keys: list[ClassKey], lam: float,
                  tau: float) -> list[float]:
    times = {lam * schedule.start_of(i, j, c) for (i, j, c) in keys}
    return sorted(t for t in times if 0.0 < t < tau)


def trajectory_at(p: JointDistribution, schedule: ThresholdSchedule, tau: float) -> Trajectory:
    """Closed-form state at scaled time tau under a threshold schedule."""
    if not 0.0 <= tau < p.lam:
        raise ParameterError(f"time {tau} outside [0, lam={p.lam})")
    keys = _control_keys(p)
    traj = initial_trajectory(p)
    for t_next in _switch_times(schedule, keys, p.lam, tau) + [tau]:
        controls = _controls_at(schedule, traj.tau, p.lam, keys)
        traj = propagate(traj, t_next, controls)
    return traj


def integrate_rk4(
    p: JointDistribution, schedule: ThresholdSchedule, tau: float, h: float
) -> Trajectory:
    """Fixed-step RK4 integration of the state ODEs; numerical oracle only.

    Restarts at every control switch so each leg has constant controls.  The
    blow-up at tau = lam caps the domain at 0.95 * lam.
    """
    lam = p.lam
    if tau > 0.95 * lam + 1e-12:
        raise ParameterError(f"time {tau} too close to the singular point lam={lam}")
    if h > 1e-3 * lam * (1 + 1e-9):
        raise ParameterError(f"step {h} too coarse; need h <= 1e-3 * lam")
    keys = _control_keys(p)
    states = state_space(p)
    idx = {key: r for r, key in enumerate(states)}
    vec = np.zeros(len(states))
    for key, val in initial_trajectory(p).s.items():
        vec[idx[key]] = val

    def matrix(controls: dict[ClassKey, int]) -> np.ndarray:
        mat = np.zeros((len(states), len(states)))
        for (i, j, c, l) in states:
            row = idx[(i, j, c, l)]
            mat[row, row] -= i - l
            src = (i, j, c, l - 1)
            if l >= 1 and src in idx:
                mat[row, idx[src]] += i - l + 1
            if l == c - 1 and c >= 2 and controls.get((i, j, c - 1), 0):
                mat[row, idx[(i, j, c - 1, c - 2)]] += i - l + 1
        return mat

    prev = 0.0
    for t_next in _switch_times(schedule, keys, lam, tau) + [tau]:
        if t_next <= prev:
            continue
        mat = matrix(_controls_at(schedule, prev, lam, keys))
        n_steps = max(1, int(math.ceil((t_next - prev) / h)))
        hh = (t_next - prev) / n_steps
        t = prev
        for _ in range(n_steps):
            k1 = mat @ vec / (lam - t)
            k2 = mat @ (vec + 0.5 * hh * k1) / (lam - (t + 0.5 * hh))
            k3 = mat @ (vec + 0.5 * hh * k2) / (lam - (t + 0.5 * hh))
            k4 = mat @ (vec + hh * k3) / (lam - (t + hh))
            vec = vec + (hh / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += hh
        prev = t_next

    return Trajectory(tau=tau, lam=lam, s={key: float(vec[idx[key]]) for key in states})


def default_fraction_at(traj: Trajectory, p: JointDistribution) -> float:
    """Scaled defaulted count implied by the trajectory."""
    vulnerable = sum(m for (i, _j, c), m in p.entries.items() if c <= i)
    return vulnerable - sum(traj.s.values())


def hidden_pool_scaled(traj: Trajectory, p: JointDistribution) -> float:
    """Scaled unrevealed out-links of the default set; termination is its first zero."""
    total = sum(j * m for (i, j, c), m in p.entries.items() if c <= i)
    live = sum(j * v for (i, j, _c, _l), v in traj.s.items())
    return total - live - traj.tau


# ---------------------------------------------------------------------------
# no-intervention limits
# ---------------------------------------------------------------------------

def default_outflow(p: JointDistribution, y: float) -> float:
    """Scaled out-degree of the default set when an in-link end defaults w.p. y."""
    tot = 0.0
    for i, j, c, mass in p.vulnerable_items():
        tot += j * mass * binom_tail(i, y, c)
    return tot / p.lam


def default_fraction(p: JointDistribution, y: float) -> float:
    """Defaulted node share at link-default probability y, no interventions."""
    return sum(mass * binom_tail(i, y, c) for i, _j, c, mass in p.vulnerable_items())


def smallest_fixed_point(
    f: Callable[[float], float], grid: int = 4096, tol: float = 1e-12
) -> tuple[float, bool]:
    """Smallest y in [0, 1] with f(y) = y, and whether f'(y) < 1 there.

    Scans a fine grid for the first sign change of f(y) - y, then bisects.
    Assumes f continuous and increasing with f(1) <= 1, so y = 1 is always a
    fallback fixed point.
    """
    def g(y: float) -> float:
        return f(y) - y

    y_star = None
    if g(0.0) <= 0.0:
        y_star = 0.0
    else:
        prev_y, prev_g = 0.0, g(0.0)
        for k in range(1, grid + 1):
            y = k / grid
            gy = g(y)
            if gy <= 0.0:
                lo, hi = prev_y, y
                glo = prev_g
                if gy == 0.0:
                    lo = hi
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    gm = g(mid)
                    if gm > 0.0:
                        lo, glo = mid, gm
                    else:
                        hi = mid
                y_star = hi
                break
            prev_y, prev_g = y, gy
        if y_star is None:
            y_star = 1.0

    h = 1e-6
    lo_pt = max(0.0, y_star - h)
    hi_pt = min(1.0, y_star + h)
    deriv = (f(hi_pt) - f(lo_pt)) / (hi_pt - lo_pt) if hi_pt > lo_pt else float("inf")
    return y_star, bool(deriv < 1.0 - 1e-9)


# ---------------------------------------------------------------------------
# controlled limits
# ---------------------------------------------------------------------------

def intervention_start(
    i: int, j: int, c: int, cost: float, multiplier: float, end_fraction: float
) -> float:
    """Scaled start time of aid for class (i, j, c); equals the horizon when aid never pays.

    Three regimes: the class is not worth aiding (start = end), aid starts
    mid-process (interior formula), or aid starts immediately (start = 0).
    The boundary case sits in the immediate regime (strict inequality).
    """
    K, v, y = cost, multiplier, end_fraction
    w = K + v * j - 1.0
    if w >= 0.0 or c == 0:
        return y
    if c >= 1 and y > 0.0 and c < i + w / (K * y):
        denom = (i - c + 1) * K + v * j - 1.0
        if denom <= 1e-300:
            return 0.0
        return 1.0 - (1.0 - y) * ((i - c) * K) / denom
    return 0.0


def singular_out_degrees(
    p: JointDistribution, cost: float, multiplier: float, singular_j: int | None = None
) -> set[int]:
    """Out-degrees j whose aid coefficient vanishes (v*j - 1 == -cost).

    `singular_j` pins the degree exactly when the caller constructed v as
    (1 - cost) / j; otherwise detection is by a 1e-12 tolerance.
    """
    js = {j for (_i, j, _c) in p.entries}
    out = {j for j in js if abs(multiplier * j - 1.0 + cost) <= _SINGULAR_TOL}
    if singular_j is not None and singular_j in js:
        out.add(singular_j)
    return out


def _singular_correction(p: JointDistribution, y: float, z: float,
                         sing: set[int], weight_by_j: bool) -> float:
    tot = 0.0
    for i, j, c, mass in p.vulnerable_items():
        if c == i and j in sing:
            tot += (j if weight_by_j else 1) * mass * (y**i - z**i)
    return tot


def default_outflow_controlled(
    p: JointDistribution, cost: float, y: float, v: float, z: float,
    singular_j: int | None = None,
) -> float:
    """Out-link flow of the default set under the threshold policy."""
    sing = singular_out_degrees(p, cost, v, singular_j)
    tot = 0.0
    for i, j, c, mass in p.vulnerable_items():
        x = intervention_start(i, j, c, cost, v, y)
        tot += j * mass * binom_tail(i, x, c)
    tot -= _singular_correction(p, y, z, sing, weight_by_j=True)
    return tot / p.lam


def default_fraction_controlled(
    p: JointDistribution, cost: float, y: float, v: float, z: float,
    singular_j: int | None = None,
) -> float:
    """Defaulted node share under the threshold policy."""
    sing = singular_out_degrees(p, cost, v, singular_j)
    tot = 0.0
    for i, j, c, mass in p.vulnerable_items():
        x = intervention_start(i, j, c, cost, v, y)
        tot += mass * binom_tail(i, x, c)
    tot -= _singular_correction(p, y, z, sing, weight_by_j=False)
    return tot


def intervention_volume(
    p: JointDistribution, cost: float, y: float, v: float, z: float,
    singular_j: int | None = None,
) -> float:
    """Scaled count of aid units under the threshold policy.

    Singular classes contribute p(i,j,i) * (y^i - z^i): exactly the mass whose
    last in-stub is revealed inside the window [z, y].  (That equals the
    general window sum evaluated with start z, and is what the intervention
    rate integrates to; it enters with a positive sign.)
    """
    sing = singular_out_degrees(p, cost, v, singular_j)
    tot = 0.0
    for i, j, c, mass in p.vulnerable_items():
        if c >= 1:
            x = intervention_start(i, j, c, cost, v, y)
            tot += mass * _interventions_per_class(i, c, x, y)
    tot += _singular_correction(p, y, z, sing, weight_by_j=False)
    return tot


class _ClassPack:
    """Per-distribution arrays for vectorized residual evaluation.

    Rows are the vulnerable-or-defaulted classes.  Tail sums become matrix
    contractions: tail(i_k, x_k, c_k) = sum_m C[k, m] x_k^m (1 - x_k)^{i_k - m}
    with coefficients zeroed outside [c_k, i_k].  Rows with c = 0 are zeroed in
    the Hamiltonian coefficient matrices, which sum over c >= 1 only.
    """

    def __init__(self, p: JointDistribution):
        rows = p.vulnerable_items()
        self.lam = p.lam
        self.i = np.array([r[0] for r in rows], dtype=float)
        self.j = np.array([r[1] for r in rows], dtype=float)
        self.c = np.array([r[2] for r in rows], dtype=float)
        self.mass = np.array([r[3] for r in rows], dtype=float)
        self.jmass = self.j * self.mass
        max_i = int(self.i.max(initial=0))
        m = np.arange(max_i + 1)
        self.m = m
        k = len(rows)
        self.tail_coef = np.zeros((k, max_i + 1))
        self.tail_exp = np.zeros((k, max_i + 1), dtype=int)
        self.ham_coef_y = np.zeros((k, max_i + 1))
        self.ham_coef_x = np.zeros((k, max_i + 1))
        self.ham_exp = np.zeros((k, max_i + 1), dtype=int)
        for r, (i, j, c, _mass) in enumerate(rows):
            for mm in range(c, i + 1):
                self.tail_coef[r, mm] = comb(i, mm)
            self.tail_exp[r] = np.maximum(i - m, 0)
            if c >= 1:
                for mm in range(c - 1, i):
                    self.ham_coef_y[r, mm] = comb(i - 1, mm)
                for mm in range(c, i):
                    self.ham_coef_x[r, mm] = comb(i - 1, mm)
                self.ham_exp[r] = np.maximum(i - 1 - m, 0)
        self.sing_rows_c_eq_i = self.c == self.i

    def starts(self, cost: float, v: float, y: float) -> np.ndarray:
        w = cost + v * self.j - 1.0
        denom = (self.i - self.c + 1.0) * cost + v * self.j - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            interior = 1.0 - (1.0 - y) * ((self.i - self.c) * cost) / denom
            cond2 = (self.c >= 1) & (self.c < self.i + w / (cost * y)) if y > 0 else np.zeros(len(self.i), bool)
        x = np.where(cond2 & (denom > 1e-300), interior, 0.0)
        return np.where((w >= 0.0) | (self.c == 0), y, x)

    def tails(self, coef, exp_one, x) -> np.ndarray:
        xm = x[:, None] ** self.m[None, :]
        om = (1.0 - x)[:, None] ** exp_one
        return (coef * xm * om).sum(axis=1)

    def singular_mask(self, cost: float, v: float, singular_j: int | None) -> np.ndarray:
        sing = np.abs(v * self.j - 1.0 + cost) <= _SINGULAR_TOL
        if singular_j is not None:
            sing |= self.j == singular_j
        return sing & self.sing_rows_c_eq_i


def _pack(p: JointDistribution) -> _ClassPack:
    try:
        return p._class_pack  # type: ignore[attr-defined]
    except AttributeError:
        pack = _ClassPack(p)
        object.__setattr__(p, "_class_pack", pack)
        return pack


def program_residuals(
    p: JointDistribution, cost: float, y: float, v: float, z: float,
    singular_j: int | None = None,
) -> tuple[float, float]:
    """((1-y)(H - lam v), controlled outflow - y): the two program equations.

    Vectorized twin of terminal_hamiltonian / default_outflow_controlled,
    evaluated together because root finding calls them in lockstep.
    """
    pk = _pack(p)
    x = pk.starts(cost, v, y)
    tails_x = pk.tails(pk.tail_coef, pk.tail_exp, x)
    sing = pk.singular_mask(cost, v, singular_j)
    corr = pk.jmass[sing] @ (y ** pk.i[sing] - z ** pk.i[sing]) if sing.any() else 0.0
    outflow = (pk.jmass @ tails_x - corr) / pk.lam

    y_arr = np.full(len(pk.i), y)
    ham_y = pk.tails(pk.ham_coef_y, pk.ham_exp, y_arr)
    ham_x = pk.tails(pk.ham_coef_x, pk.ham_exp, x)
    coef = np.maximum(-cost, v * pk.j - 1.0) * pk.i * pk.mass
    ham = coef @ (ham_y - ham_x)
    return (1.0 - y) * (ham - pk.lam * v), outflow - y


def terminal_hamiltonian(p: JointDistribution, cost: float, y: float, v: float) -> float:
    """Left side of the terminal stationarity equation H(y, v) = lam * v."""
    tot = 0.0
    for i, j, c, mass in p.vulnerable_items():
        if c >= 1:
            x = intervention_start(i, j, c, cost, v, y)
            bracket = binom_tail(i - 1, y, c - 1) - binom_tail(i - 1, x, c)
            tot += max(-cost, v * j - 1.0) * i * mass * bracket
    return tot


def schedule_from_policy_params(
    p: JointDistribution, cost: float, y: float, v: float, z: float,
    singular_j: int | None = None,
) -> ThresholdSchedule:
    """Materialize the threshold schedule implied by (y, v, z)."""
    sing = singular_out_degrees(p, cost, v, singular_j)
    starts: dict[ClassKey, float] = {}
    pairs = set()
    for i, j, c in _control_keys(p):
        if j in sing and c == i:
            pairs.add((i, j))
            continue
        starts[(i, j, c)] = intervention_start(i, j, c, cost, v, y)
    return ThresholdSchedule(
        starts=starts, singular_pairs=frozenset(pairs), singular_start=z,
        end=y, multiplier=v, cost=cost,
    )


# ---------------------------------------------------------------------------
# limits of simple forced policies (never / always / degree band)
# ---------------------------------------------------------------------------

def forced_policy_limits(
    p: JointDistribution, start_rule: Callable[[int, int, int, float], float]
) -> tuple[float, bool, float, float]:
    """(y*, stable, defaults limit, interventions limit) for a forced start rule.

    `start_rule(i, j, c, y)` returns the scaled start time of aid for a class
    (y itself means never).  Covers the no-aid, full-aid and degree-band
    policies, whose limits follow the same fixed-point structure as the
    optimal one.
    """
    def outflow(y: float) -> float:
        tot = 0.0
        for i, j, c, mass in p.vulnerable_items():
            tot += j * mass * binom_tail(i, start_rule(i, j, c, y), c)
        return tot / p.lam

    y_star, stable = smallest_fixed_point(outflow)
    defaults = sum(
        mass * binom_tail(i, start_rule(i, j, c, y_star), c)
        for i, j, c, mass in p.vulnerable_items()
    )
    aid = sum(
        mass * _interventions_per_class(i, c, start_rule(i, j, c, y_star), y_star)
        for i, j, c, mass in p.vulnerable_items() if c >= 1
    )
    return y_star, stable, defaults, aid
