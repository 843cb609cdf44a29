"""Monte-Carlo diagnostics: increment moments, Holder fits, uniformity over a
family, the Garsia-Rodemich-Rumsey modulus check, and two-sample energy
distances.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples
from .fieldio import Field

MIN_SAMPLES = 30


@dataclass
class Ensemble:
    """iid samples on one grid: values (n, nt, *spatial)."""

    times: np.ndarray
    axes: tuple
    values: np.ndarray
    seed: int = 0
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_field(cls, f):
        return cls(f.times, f.axes, f.samples(), f.seed, dict(f.meta))

    @property
    def n_samples(self):
        return self.values.shape[0]

    def at(self, time_index, points):
        """Values at one time and a list of spatial index tuples: (n, len(points))."""
        cols = [self.values[(slice(None), time_index) + tuple(p)] for p in points]
        return np.stack(cols, -1)


def _as_ensemble(e):
    return Ensemble.from_field(e) if isinstance(e, Field) else e


def _steps(lags, spacing):
    steps = []
    for h in lags:
        s = h / spacing
        r = int(round(s))
        if r < 1 or abs(s - r) > 1e-6 * max(1.0, s):
            raise ValueError(f"lag {h} is not a positive multiple of the grid spacing {spacing}")
        steps.append(r)
    return steps


# --- increment moments ----------------------------------------------------------------

@dataclass
class MomentTable:
    direction: str
    lags: list
    p: float
    estimates: np.ndarray
    se: np.ndarray
    n_samples: int
    base: float

    def rows(self):
        return [(self.direction, h, self.p, float(e), float(s), self.n_samples)
                for h, e, s in zip(self.lags, self.estimates, self.se)]

    def to_dict(self):
        return {"direction": self.direction, "lags": list(self.lags), "p": self.p,
                "estimates": self.estimates.tolist(), "se": self.se.tolist(),
                "n_samples": self.n_samples, "base": self.base}


def _jackknife_mean(per_sample):
    """Mean and jackknife standard error of per-sample statistics."""
    n = per_sample.size
    total = per_sample.sum()
    loo = (total - per_sample) / (n - 1)
    mean = total / n
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return mean, se


def increment_moments(e, direction, lags, p=2.0, base=None, min_samples=MIN_SAMPLES):
    """E|X(t, x + h) - X(t, x)|^p (space, along the first axis) or
    E|X(t + h, x) - X(t, x)|^p (time), averaged over admissible base points.

    Space: `base` is the time (default the last one) and every x with x + h on
    the grid is used.  Time: `base` is the base time (default T - max lag) and
    every spatial node is used.
    """
    e = _as_ensemble(e)
    if e.n_samples < min_samples:
        raise InsufficientSamples(f"{e.n_samples} samples; at least {min_samples} needed")
    v = e.values
    est, se = [], []
    if direction == "space":
        ax = e.axes[0]
        steps = _steps(lags, ax[1] - ax[0])
        ti = len(e.times) - 1 if base is None else int(np.argmin(np.abs(e.times - base)))
        snap = v[:, ti]
        for s in steps:
            if s >= snap.shape[1]:
                raise ValueError(f"lag of {s} cells exceeds the grid")
            d = np.abs(snap[:, s:] - snap[:, :-s]) ** p
            m, err = _jackknife_mean(d.reshape(d.shape[0], -1).mean(1))
            est.append(m)
            se.append(err)
        base_val = float(e.times[ti])
    elif direction == "time":
        dt = e.times[1] - e.times[0]
        steps = _steps(lags, dt)
        b = len(e.times) - 1 - max(steps) if base is None else int(round(base / dt))
        if b < 0 or b + max(steps) >= len(e.times):
            raise ValueError("time lags do not fit after the base time")
        for s in steps:
            d = np.abs(v[:, b + s] - v[:, b]) ** p
            m, err = _jackknife_mean(d.reshape(d.shape[0], -1).mean(1))
            est.append(m)
            se.append(err)
        base_val = float(e.times[b])
    else:
        raise ValueError("direction must be 'space' or 'time'")
    return MomentTable(direction, list(lags), p, np.array(est), np.array(se), e.n_samples,
                       base_val)


def holder_fit(tab, lag_window=None):
    """Least-squares (slope, intercept, r^2) of log estimate against log lag."""
    lags = np.asarray(tab.lags, dtype=float)
    est = np.asarray(tab.estimates, dtype=float)
    if lag_window is not None:
        keep = (lags >= lag_window[0]) & (lags <= lag_window[1])
        lags, est = lags[keep], est[keep]
    if lags.size < 4:
        raise ValueError("a Holder fit needs at least 4 lags")
    if np.any(est <= 0):
        raise ValueError("non-positive moment estimate in the fit window")
    x, y = np.log(lags), np.log(est)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def bound_exponent(kind, direction, q):
    """Exponent e with E|increment|^2 <= C h^e under (H1) with exponent q."""
    if direction == "space" or kind == "wave":
        return 2.0 - q
    return 1.0 - q / 2.0


@dataclass
class UniformityReport:
    lags: list
    ratios: np.ndarray          # (members, lags)
    max_over_members: np.ndarray
    spread: float
    passed: bool
    exponent: float

    def to_dict(self):
        return {"lags": list(self.lags), "ratios": self.ratios.tolist(),
                "max_over_members": self.max_over_members.tolist(),
                "spread": self.spread, "passed": self.passed, "exponent": self.exponent}


def uniformity_report(ensembles, direction, lags, p, exponent, max_spread=10.0, base=None):
    """Moments normalized by h^(exponent p / 2), maximized over the family.

    Passes when the max over members stays within a factor `max_spread`
    across lags.
    """
    ens = [_as_ensemble(e) for e in ensembles]
    n = {e.n_samples for e in ens}
    if len(n) != 1:
        raise ValueError("ensembles must share the sample count")
    h = np.asarray(lags, dtype=float)
    ratios = np.array([increment_moments(e, direction, lags, p, base).estimates
                       / h ** (exponent * p / 2) for e in ens])
    mx = ratios.max(0)
    spread = float(mx.max() / mx.min()) if mx.min() > 0 else math.inf
    return UniformityReport(list(lags), ratios, mx, spread, spread <= max_spread, exponent)


# --- Garsia-Rodemich-Rumsey -----------------------------------------------------------

@dataclass(frozen=True)
class GRRParams:
    """psi(u) = |u|^gamma and p(u) = u^((k + 2m) / gamma) on an m-dimensional rectangle."""

    gamma: float
    m: int
    k: float

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def c_m(self):
        """Corner constant: vol(B(x, u/2) intersect R) >= c_m u^m for u up to the smallest side."""
        v_m = math.pi ** (self.m / 2) / math.gamma(self.m / 2 + 1)
        return v_m / 4 ** self.m


def _field_points(f, axes):
    f = np.asarray(f, dtype=float)
    if axes is None:
        axes = (np.linspace(0.0, 1.0, f.shape[-1]),)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], -1)
    cell = float(np.prod([a[1] - a[0] for a in axes]))
    return f.reshape(-1), pts, cell


def grr_gamma(f, params, axes=None, block=2048):
    """Riemann sum of sum_{x != y} |f(x) - f(y)|^gamma / |x - y|^(k + 2m) with
    cell weights, the diagonal contributing zero.

    `f` holds values on the tensor grid `axes` (default: a uniform grid on
    [0, 1] of the size of f).
    """
    vals, pts, cell = _field_points(f, axes)
    expo = params.k + 2 * params.m
    total = 0.0
    n = vals.size
    for i in range(0, n, block):
        dv = np.abs(vals[i:i + block, None] - vals[None, :])
        dx = np.sqrt(np.sum((pts[i:i + block, None, :] - pts[None, :, :]) ** 2, -1))
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(dx > 0, dv ** params.gamma / np.where(dx > 0, dx, 1.0) ** expo, 0.0)
        total += float(np.sum(term))
    return total * cell * cell


def grr_bound(params, gamma_value, dist):
    """8 Gamma^(1/gamma) c_m^(-2/gamma) ((k + 2m) / k) (2 |x - y|)^(k / gamma)."""
    g, m, k = params.gamma, params.m, params.k
    return (8.0 * gamma_value ** (1 / g) * params.c_m ** (-2 / g) * (k + 2 * m) / k
            * (2.0 * np.asarray(dist)) ** (k / g))


def grr_modulus_check(f, params, gamma_value, axes=None, slack=0.05, block=2048):
    """(holds, max_ratio) of |f(x) - f(y)| against the GRR bound over all pairs."""
    if gamma_value < 0:
        raise ValueError("gamma_value must be non-negative")
    vals, pts, _ = _field_points(f, axes)
    worst = 0.0
    for i in range(0, vals.size, block):
        dv = np.abs(vals[i:i + block, None] - vals[None, :])
        dx = np.sqrt(np.sum((pts[i:i + block, None, :] - pts[None, :, :]) ** 2, -1))
        off = dx > 0
        if not np.any(dv[off] > 0):
            continue
        b = grr_bound(params, gamma_value, dx[off])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(b > 0, dv[off] / np.where(b > 0, b, 1.0), np.inf)
        worst = max(worst, float(np.max(r)))
    return worst <= 1.0 + slack, worst


# --- energy distance ------------------------------------------------------------------

def _pairwise(a, b):
    a2 = np.sum(a * a, 1)[:, None]
    b2 = np.sum(b * b, 1)[None, :]
    return np.sqrt(np.maximum(a2 + b2 - 2 * a @ b.T, 0.0))


def energy_distance(x, y):
    """2 E|X - Y| - E|X - X'| - E|Y - Y'| (V-statistic)."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    return float(2 * _pairwise(x, y).mean() - _pairwise(x, x).mean() - _pairwise(y, y).mean())


@dataclass
class EnergyTest:
    statistic: float
    p_value: float
    null_quantile: float
    within_null: bool

    def to_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value,
                "null_quantile": self.null_quantile, "within_null": self.within_null}


def energy_test(x, y, n_perm=2000, seed=0, level=0.95, block=250):
    """Energy distance with a permutation null; within_null when the statistic
    is at most the `level` quantile of the permuted statistics."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    z = np.concatenate([x, y])
    n, m = len(x), len(y)
    N = n + m
    D = _pairwise(z, z)
    rng = np.random.default_rng(seed)

    def stats(labels):
        # labels (N, B) in {0, 1}: 1 marks the first sample
        a = labels
        b = 1.0 - labels
        Da = D @ a
        Db = D @ b
        sxy = np.sum(b * Da, 0)
        sxx = np.sum(a * Da, 0)
        syy = np.sum(b * Db, 0)
        return 2 * sxy / (n * m) - sxx / n ** 2 - syy / m ** 2

    obs = float(stats(np.concatenate([np.ones(n), np.zeros(m)])[:, None])[0])
    null = []
    for start in range(0, n_perm, block):
        k = min(block, n_perm - start)
        lab = np.zeros((N, k))
        for j in range(k):
            lab[rng.permutation(N)[:n], j] = 1.0
        null.append(stats(lab))
    null = np.concatenate(null)
    q = float(np.quantile(null, level))
    p = float((1 + np.sum(null >= obs)) / (1 + n_perm))
    return EnergyTest(obs, p, q, obs <= q)


# --- weak convergence -----------------------------------------------------------------

@dataclass
class WeakConvergenceReport:
    labels: list
    covariance_distances: list = None
    energy: list = None
    uniformity: object = None
    decreasing: bool = None
    final_within_null: bool = None

    def to_dict(self):
        out = {"labels": list(self.labels)}
        if self.covariance_distances is not None:
            out["covariance_distances"] = list(self.covariance_distances)
        if self.energy is not None:
            out["energy"] = [e.to_dict() for e in self.energy]
        if self.uniformity is not None:
            out["uniformity"] = self.uniformity.to_dict()
        out["decreasing"] = self.decreasing
        out["final_within_null"] = self.final_within_null
        return out


def observation_points(e, time_indices, space_indices):
    """Samples at a fixed set of space-time nodes: (n, len(time) * len(space))."""
    e = _as_ensemble(e)
    cols = [e.values[(slice(None), ti) + tuple(np.atleast_1d(si))]
            for ti in time_indices for si in space_indices]
    return np.stack(cols, -1)


def weak_convergence_report(labels, member_samples, limit_samples, n_perm=2000, seed=0,
                            covariance_distances=None, uniformity=None):
    """Energy distance of each member's observation vectors to the limit's.

    `member_samples` and `limit_samples` are (n, k) arrays of the solution at
    a fixed set of space-time points.
    """
    energy = [energy_test(x, limit_samples, n_perm, seed) for x in member_samples]
    stats = [e.statistic for e in energy]
    dec = all(b < a for a, b in zip(stats, stats[1:]))
    return WeakConvergenceReport(list(labels), covariance_distances, energy, uniformity,
                                 dec, energy[-1].within_null)
