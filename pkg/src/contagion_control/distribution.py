"""Joint (in-degree, out-degree, initial equity) distributions.

A network class is a triple (i, j, c): a node with in-degree i owes nothing to
its debtors but can lose up to i loans, has j loans outstanding to creditors,
and starts with equity c (the number of lost loans it survives).  c = 0 means
defaulted at time zero, 0 < c <= i means vulnerable, c > i means invulnerable.
Invulnerable classes are stored explicitly: they never default but their stubs
absorb links during contagion, so they count toward the mean degree.

Conventions:
- masses are nonnegative and sum to at most 1 (up to float slack);
- the in- and out-degree means must agree to 1e-12, their common value is the
  mean degree `lam`;
- support is finite (a max degree is recorded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConstructionError, ParameterError

ClassKey = tuple[int, int, int]  # (in_degree, out_degree, initial_equity)

_BALANCE_TOL = 1e-12
_MASS_SLACK = 1e-9
# Standard-normal mass beyond +-8.5 is ~1e-17; quantile rectangles are clipped there.
_NORMAL_CLIP = 8.5


@dataclass(frozen=True)
class JointDistribution:
    """Limiting class probabilities p(i, j, c) with mean degree `lam`."""

    entries: dict[ClassKey, float]
    lam: float = field(init=False)

    def __post_init__(self):
        in_mean = 0.0
        out_mean = 0.0
        total = 0.0
        for (i, j, c), mass in self.entries.items():
            if i < 0 or j < 0 or c < 0:
                raise ParameterError(f"negative index in class {(i, j, c)}")
            if mass < 0:
                raise ParameterError(f"negative mass {mass} for class {(i, j, c)}")
            in_mean += i * mass
            out_mean += j * mass
            total += mass
        if total > 1.0 + _MASS_SLACK:
            raise ParameterError(f"total mass {total} exceeds 1")
        if abs(in_mean - out_mean) > _BALANCE_TOL:
            raise ParameterError(
                f"in/out degree means differ: {in_mean} vs {out_mean} "
                f"(|diff| > {_BALANCE_TOL})"
            )
        object.__setattr__(self, "lam", in_mean)
        vuln = tuple(
            (i, j, c, m) for (i, j, c), m in sorted(self.entries.items()) if c <= i
        )
        object.__setattr__(self, "_vulnerable", vuln)

    @property
    def max_degree(self) -> int:
        return max((max(i, j) for (i, j, _c) in self.entries), default=0)

    @property
    def total_mass(self) -> float:
        return sum(self.entries.values())

    def mass(self, i: int, j: int, c: int) -> float:
        return self.entries.get((i, j, c), 0.0)

    def degree_pairs(self) -> list[tuple[int, int]]:
        """Distinct (i, j) pairs in the support, sorted."""
        return sorted({(i, j) for (i, j, _c) in self.entries})

    def vulnerable_items(self) -> tuple[tuple[int, int, int, float], ...]:
        """(i, j, c, mass) for classes with c <= i (defaulted or vulnerable), sorted."""
        return self._vulnerable  # type: ignore[attr-defined]

    def initially_defaulted_mass(self) -> float:
        return sum(m for (i, j, c), m in self.entries.items() if c == 0)


@dataclass(frozen=True)
class EmpiricalCounts:
    """Finite-n node counts per class; `m` is the common stub total per side."""

    n: int
    counts: dict[ClassKey, int]
    m: int = field(init=False)

    def __post_init__(self):
        total = sum(self.counts.values())
        if total != self.n:
            raise ParameterError(f"counts sum to {total}, expected n={self.n}")
        m_in = sum(i * cnt for (i, _j, _c), cnt in self.counts.items())
        m_out = sum(j * cnt for (_i, j, _c), cnt in self.counts.items())
        if m_in != m_out:
            raise ParameterError(f"stub totals unbalanced: in={m_in} out={m_out}")
        object.__setattr__(self, "m", m_in)

    def to_distribution(self) -> JointDistribution:
        """The empirical distribution P_n = counts / n."""
        return JointDistribution({k: cnt / self.n for k, cnt in self.counts.items() if cnt})


def mean_degree(p: JointDistribution) -> float:
    """Common value of sum(i*p) and sum(j*p); raises if they disagree beyond 1e-12."""
    in_mean = sum(i * m for (i, _j, _c), m in p.entries.items())
    out_mean = sum(j * m for (_i, j, _c), m in p.entries.items())
    if abs(in_mean - out_mean) > _BALANCE_TOL:
        raise ParameterError(f"in/out degree means differ: {in_mean} vs {out_mean}")
    return in_mean


def zipf_weights(exponent: float, max_val: int) -> np.ndarray:
    """Normalized masses k^-(1+exponent) on {1..max_val}."""
    ks = np.arange(1, max_val + 1, dtype=float)
    w = ks ** -(1.0 + exponent)
    return w / w.sum()


def _gauss_legendre_panels(edges: np.ndarray, max_width: float = 0.5, order: int = 12):
    """Composite Gauss-Legendre nodes/weights over [edges[0], edges[-1]].

    Each inter-edge segment is split into panels of width <= max_width so the
    bivariate normal density is resolved to ~1e-14 regardless of segment size.
    Returns (nodes, weights, segment_of_node).
    """
    ref_x, ref_w = np.polynomial.legendre.leggauss(order)
    nodes, weights, seg_ids = [], [], []
    for s in range(len(edges) - 1):
        a, b = edges[s], edges[s + 1]
        if b <= a:
            continue
        n_panels = max(1, int(math.ceil((b - a) / max_width)))
        bounds = np.linspace(a, b, n_panels + 1)
        for q in range(n_panels):
            lo, hi = bounds[q], bounds[q + 1]
            half = 0.5 * (hi - lo)
            nodes.append(0.5 * (hi + lo) + half * ref_x)
            weights.append(half * ref_w)
            seg_ids.append(np.full(order, s, dtype=int))
    return np.concatenate(nodes), np.concatenate(weights), np.concatenate(seg_ids)


def gaussian_copula_cells(marg_row: np.ndarray, marg_col: np.ndarray, rho: float) -> np.ndarray:
    """Cell masses of a Gaussian copula over two discrete marginals.

    Cells are quantile rectangles: the standard-normal plane is cut at the
    inverse normal CDF of the marginal cumulative masses, and the bivariate
    normal density with correlation rho is integrated over each rectangle by
    composite Gauss-Legendre quadrature (accurate well beyond 1e-9).
    Rows and columns reproduce the marginals up to the quadrature error.
    """
    if not -1.0 < rho < 1.0:
        raise ParameterError(f"copula correlation must lie in (-1, 1), got {rho}")

    def thresholds(marg):
        cum = np.concatenate([[0.0], np.cumsum(marg)])
        cum[-1] = 1.0
        t = ndtri(np.clip(cum, 1e-300, 1.0))
        return np.clip(t, -_NORMAL_CLIP, _NORMAL_CLIP)

    tr, tc = thresholds(marg_row), thresholds(marg_col)
    xs, wx, seg_x = _gauss_legendre_panels(tr)
    ys, wy, seg_y = _gauss_legendre_panels(tc)

    one_m_r2 = 1.0 - rho * rho
    norm = 1.0 / (2.0 * math.pi * math.sqrt(one_m_r2))
    X = xs[:, None]
    Y = ys[None, :]
    dens = norm * np.exp(-(X * X - 2.0 * rho * X * Y + Y * Y) / (2.0 * one_m_r2))
    contrib = (wx[:, None] * wy[None, :]) * dens

    cells = np.zeros((len(marg_row), len(marg_col)))
    np.add.at(cells, (seg_x[:, None], seg_y[None, :]), contrib)
    return cells


def build_zipf_copula(
    xi: float, a1: float, a2: float, rho: float, max_deg: int
) -> JointDistribution:
    """Experiment-style distribution: i = j, uniform initial defaults, copula-coupled equity.

    A fraction xi of nodes defaults at time zero, spread uniformly over degrees
    1..max_deg.  The remaining liquid mass gets a joint (degree, equity) law on
    {1..max_deg}^2 from a Gaussian copula with correlation rho over two Zipf
    marginals with exponents a1 (degree) and a2 (equity).  Equity above the
    degree is retained as invulnerable mass.
    """
    if not 0.0 <= xi < 1.0:
        raise ParameterError(f"initial default fraction must be in [0, 1), got {xi}")
    if a1 <= 0 or a2 <= 0:
        raise ParameterError(f"Zipf exponents must be positive, got ({a1}, {a2})")
    if not -1.0 < rho < 1.0:
        raise ParameterError(f"correlation must lie in (-1, 1), got {rho}")
    if max_deg < 1:
        raise ParameterError(f"max degree must be >= 1, got {max_deg}")

    cells = gaussian_copula_cells(zipf_weights(a1, max_deg), zipf_weights(a2, max_deg), rho)
    entries: dict[ClassKey, float] = {}
    for i in range(1, max_deg + 1):
        entries[(i, i, 0)] = xi / max_deg
        for c in range(1, max_deg + 1):
            mass = (1.0 - xi) * cells[i - 1, c - 1]
            if mass > 0.0:
                entries[(i, i, c)] = mass
    return JointDistribution(entries)


def sample_zipf_copula(
    xi: float, a1: float, a2: float, rho: float, max_deg: int, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo draws of (degree, equity) from the same construction.

    Sampling route (normal draws mapped through the marginal quantiles), kept
    independent of the quadrature in gaussian_copula_cells so the two can
    cross-check each other.
    """
    defaults = rng.random(size) < xi
    deg = np.empty(size, dtype=int)
    eq = np.zeros(size, dtype=int)
    n_def = int(defaults.sum())
    deg[defaults] = rng.integers(1, max_deg + 1, size=n_def)
    n_liq = size - n_def
    cov = [[1.0, rho], [rho, 1.0]]
    zz = rng.multivariate_normal([0.0, 0.0], cov, size=n_liq)
    u, v = ndtr(zz[:, 0]), ndtr(zz[:, 1])
    cum1 = np.cumsum(zipf_weights(a1, max_deg))
    cum2 = np.cumsum(zipf_weights(a2, max_deg))
    deg[~defaults] = np.searchsorted(cum1, u, side="right") + 1
    eq[~defaults] = np.searchsorted(cum2, v, side="right") + 1
    np.clip(deg, 1, max_deg, out=deg)
    np.clip(eq, 0, max_deg, out=eq)
    return deg, eq


def empirical_counts(p: JointDistribution, n: int) -> EmpiricalCounts:
    """Round n*p to integer node counts, repaired so the counts sum to n.

    Starts from plain rounding, then applies a largest-remainder correction:
    deficits go to the classes most under-rounded, surpluses are taken from the
    most over-rounded.  For i != j supports a greedy node-swap pass then
    restores stub balance; if it cannot, a ConstructionError names the deficit.
    """
    if n < 1:
        raise ParameterError(f"population size must be >= 1, got {n}")
    keys = sorted(p.entries)
    targets = {k: n * p.entries[k] for k in keys}
    counts = {k: int(round(targets[k])) for k in keys}
    deficit = n - sum(counts.values())
    if deficit != 0:
        # remainder = how much the class is still owed relative to its target
        order = sorted(keys, key=lambda k: (-(targets[k] - counts[k]), k))
        if deficit > 0:
            for k in order[:deficit]:
                counts[k] += 1
        else:
            takeable = [k for k in reversed(order) if counts[k] > 0]
            for k in takeable[:-deficit]:
                counts[k] -= 1
    counts = {k: v for k, v in counts.items() if v > 0}

    m_in = sum(i * v for (i, _j, _c), v in counts.items())
    m_out = sum(j * v for (_i, j, _c), v in counts.items())
    if m_in != m_out:
        counts = _rebalance_stubs(counts, m_in - m_out)
    return EmpiricalCounts(n=n, counts=counts)


def _rebalance_stubs(counts: dict[ClassKey, int], imbalance: int) -> dict[ClassKey, int]:
    """Greedy node moves between classes until sum(i*count) == sum(j*count).

    Moving one node from class a to class b changes the imbalance by
    (i_b - i_a) - (j_b - j_a); only moves that shrink |imbalance| are taken,
    largest classes first.  Used only when the support has i != j classes.
    """
    counts = dict(counts)
    keys = sorted(counts)
    for _ in range(10000):
        if imbalance == 0:
            return counts
        best = None
        for a in keys:
            if counts.get(a, 0) <= 0:
                continue
            for b in keys:
                if a == b:
                    continue
                delta = (b[0] - a[0]) - (b[1] - a[1])
                new_imb = imbalance + delta
                if abs(new_imb) < abs(imbalance):
                    score = (abs(new_imb), -counts[a])
                    if best is None or score < best[0]:
                        best = (score, a, b, new_imb)
        if best is None:
            break
        _, a, b, imbalance = best
        counts[a] -= 1
        counts[b] = counts.get(b, 0) + 1
        if counts[a] == 0:
            del counts[a]
    raise ConstructionError(
        f"cannot balance stub totals: residual in-out deficit of {imbalance} stubs"
    )


def truncation_index(p: JointDistribution, eps: float) -> int:
    """Smallest M with both degree-weighted tail masses over {max(i,j) >= M} below eps."""
    if eps <= 0:
        raise ParameterError(f"tolerance must be positive, got {eps}")
    for m_cut in range(0, p.max_degree + 2):
        tail_i = sum(i * m for (i, j, _c), m in p.entries.items() if max(i, j) >= m_cut)
        tail_j = sum(j * m for (i, j, _c), m in p.entries.items() if max(i, j) >= m_cut)
        if tail_i < eps and tail_j < eps:
            return m_cut
    return p.max_degree + 1


def distribution_from_spec(spec: dict) -> JointDistribution:
    """Build a distribution from its JSON form.

    Schemas:
      {"kind": "zipf_copula", "xi":, "a1":, "a2":, "rho":, "max_deg":}
      {"kind": "explicit", "entries": [[i, j, c, mass], ...]}
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ParameterError("distribution spec must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "zipf_copula":
        try:
            return build_zipf_copula(
                xi=float(spec["xi"]),
                a1=float(spec["a1"]),
                a2=float(spec["a2"]),
                rho=float(spec["rho"]),
                max_deg=int(spec["max_deg"]),
            )
        except KeyError as exc:
            raise ParameterError(f"zipf_copula spec missing field {exc}") from exc
    if kind == "explicit":
        entries = {}
        for row in spec.get("entries", []):
            if len(row) != 4:
                raise ParameterError(f"explicit entry must be [i, j, c, mass], got {row}")
            i, j, c, mass = int(row[0]), int(row[1]), int(row[2]), float(row[3])
            entries[(i, j, c)] = entries.get((i, j, c), 0.0) + mass
        return JointDistribution(entries)
    raise ParameterError(f"unknown distribution kind {kind!r}")
