"""Covariance of the linear (stochastic convolution) field.

E[v(t,x) v(t',x')] = int T(t, t', |xi|) cos(<xi, x - x'>) mu(dxi), where T is
the heat or wave time factor.  The integral is evaluated with the spectral
Fourier routines of `measures`.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import domination_constant, time_weight
from .measures import fourier_integral


def _pair(p):
    (t, x), (tp, xp) = p
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    return float(t), x, float(tp), xp


def covariance(kind, measure, pairs, tol=1e-9):
    """Covariance of the linear field for each ((t, x), (t', x')) pair."""
    out = []
    cache = {}
    for p in pairs:
        t, x, tp, xp = _pair(p)
        h = x - xp
        key = (min(t, tp), max(t, tp), tuple(np.abs(h)) if measure.dimension == 1 else tuple(h))
        if key not in cache:
            cache[key] = fourier_integral(measure, time_weight(kind, t, tp), h, tol)
        out.append(cache[key])
    return np.array(out)


def variance(kind, measure, t, tol=1e-10):
    d = measure.dimension
    return float(covariance(kind, measure, [((t, np.zeros(d)), (t, np.zeros(d)))], tol)[0])


def covariance_bound(kind, measure, t, tp, dalang=None):
    """|cov| <= C(t, t') int mu / (1 + |xi|^2)."""
    from .measures import dalang_integral
    if dalang is None:
        dalang = dalang_integral(measure)
    return domination_constant(kind, t, tp) * dalang


def covariance_distance(kind, measure_a, measure_b, pairs, tol=1e-9):
    """max over pairs of |cov_a - cov_b|."""
    a = covariance(kind, measure_a, pairs, tol)
    b = covariance(kind, measure_b, pairs, tol)
    return float(np.max(np.abs(a - b)))


def random_pairs(n, d, seed, t_choices=(0.5, 1.0), L=1.0):
    """Reproducible random space-time pairs with x, x' in [-L, L]^d."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        t, tp = rng.choice(t_choices, size=2)
        x = rng.uniform(-L, L, size=d)
        xp = rng.uniform(-L, L, size=d)
        pairs.append(((float(t), x), (float(tp), xp)))
    return pairs


@dataclass
class ConvergenceReport:
    labels: list
    distances: list
    tol: float
    strictly_decreasing: bool
    final_within: bool

    @property
    def passed(self):
        return self.strictly_decreasing and self.final_within

    def to_dict(self):
        return {"labels": list(self.labels), "distances": list(self.distances),
                "tol": self.tol, "strictly_decreasing": self.strictly_decreasing,
                "final_within": self.final_within, "passed": self.passed}


def weak_convergence(kind, family, pairs, tol=1e-9, final_factor=10.0, quad_tol=None):
    """Covariance distances between each family member and the limit.

    Passes when the distances strictly decrease and the last one is at most
    final_factor * tol.  The covariances are integrated to `quad_tol`
    (default min(tol, 1e-9)).
    """
    qt = min(tol, 1e-9) if quad_tol is None else quad_tol
    limit = covariance(kind, family.limit, pairs, qt)
    dists = [float(np.max(np.abs(covariance(kind, m, pairs, qt) - limit)))
             for m in family.members]
    dec = all(b < a for a, b in zip(dists, dists[1:]))
    return ConvergenceReport(list(family.labels), dists, tol, dec,
                             dists[-1] <= final_factor * tol)
