"""Heat and wave fundamental solutions, their Fourier symbols, the spectral
time factors of the stochastic convolution, and the initial-data term.

Heat kernel: G_t(x) = (2 pi t)^(-d/2) exp(-|x|^2 / 2t), FG_t = exp(-t|xi|^2/2).
Wave kernel: FG_t = sin(t|xi|)/|xi|; in d=1 it is (1/2) 1{|x| < t}, in d=2
(1/2pi) (t^2 - |x|^2)^(-1/2) on the disc, in d=3 sigma_t / (4 pi t).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import quadrature as quad
from .errors import InvalidInitialData, UnsupportedKernel
from .measures import RadialWeight

KINDS = ("heat", "wave")


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"kind must be 'heat' or 'wave', got {kind!r}")


@dataclass(frozen=True)
class KernelSpec:
    """Equation kind and spatial dimension."""

    kind: str
    d: int = 1

    def __post_init__(self):
        _check_kind(self.kind)
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == "wave" and self.d > 3:
            raise UnsupportedKernel(f"wave equation in d={self.d}")


def _norm(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        return np.abs(xi)
    return np.sqrt(np.sum(xi * xi, axis=-1))


def fourier_G(kind, t, xi, d=None):
    """Fourier symbol of the fundamental solution at time t.

    `xi` is an array of points (..., d), or of radii when d is None and xi
    has no trailing axis.
    """
    _check_kind(kind)
    r = _norm(xi) if d is not None else np.abs(np.asarray(xi, dtype=float))
    if kind == "heat":
        return np.exp(-t * r * r / 2.0)
    return t * np.sinc(t * r / math.pi)


def kernel_mass(kind, t):
    """Total mass G_t(R^d): 1 for heat, t for wave."""
    _check_kind(kind)
    return 1.0 if kind == "heat" else float(t)


def heat_kernel(t, x):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    return (2 * math.pi * t) ** (-d / 2) * np.exp(-np.sum(x * x, -1) / (2 * t))


@dataclass
class KernelWeights:
    """Weights of G_t on a grid.

    For grid-aligned tables `offsets` holds integer index offsets (n, d) and
    `points` their physical positions; for the d=3 wave sphere rule only
    `points` is meaningful.
    """

    weights: np.ndarray
    points: np.ndarray
    offsets: np.ndarray = None
    dx: tuple = field(default=())

    @property
    def mass(self):
        return float(np.sum(self.weights))

    def as_stencil(self):
        """Dense 1-d or 2-d array of the grid weights, centred."""
        if self.offsets is None:
            raise UnsupportedKernel("sphere-rule weights are not grid aligned")
        d = self.offsets.shape[1]
        half = np.max(np.abs(self.offsets), axis=0) if self.offsets.size else np.zeros(d, int)
        arr = np.zeros(tuple(2 * half + 1))
        idx = tuple((self.offsets + half).T)
        np.add.at(arr, idx, self.weights)
        return arr


def _heat_weights_1d(t, dx, half_width=None, cut=6.0, rule="cell"):
    if t <= 0:
        return np.array([0]), np.array([1.0])
    s = math.sqrt(t)
    m = int(math.ceil(cut * s / dx)) + 1
    if half_width is not None:
        m = min(m, int(round(half_width / dx)))
    j = np.arange(-m, m + 1)
    if rule == "point":
        # trapezoid samples: exponentially accurate for smooth integrands
        return j, dx * np.exp(-(j * dx) ** 2 / (2 * t)) / math.sqrt(2 * math.pi * t)
    hi = (j + 0.5) * dx / s
    lo = (j - 0.5) * dx / s
    # difference of upper tails keeps precision far from the centre
    w = np.where(j >= 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    return j, w


def _wave_weights_1d(t, dx):
    if t <= 0:
        return np.array([0]), np.array([0.0])
    m = int(math.ceil(t / dx + 0.5))
    j = np.arange(-m, m + 1)
    lo = np.maximum((j - 0.5) * dx, -t)
    hi = np.minimum((j + 0.5) * dx, t)
    return j, 0.5 * np.clip(hi - lo, 0.0, None)


def sphere_rule(n=24):
    """Gauss-Legendre in cos(theta) times trapezoid in phi on the unit sphere."""
    ct, wt = quad.gauss_legendre(n, -1.0, 1.0)
    nph = 2 * n
    ph = (np.arange(nph) + 0.5) * 2 * math.pi / nph
    st = np.sqrt(1.0 - ct ** 2)
    pts = np.stack([np.outer(st, np.cos(ph)), np.outer(st, np.sin(ph)),
                    np.outer(ct, np.ones(nph))], -1).reshape(-1, 3)
    w = np.outer(wt, np.full(nph, 2 * math.pi / nph)).reshape(-1)
    return pts, w


def kernel_weights(kind, t, dx, d=1, half_width=None, n_sphere=24, rule="cell", cut=None):
    """Quadrature weights representing G_t on a uniform grid of spacing dx.

    Heat weights are exact Gaussian cell masses (mass 1 up to the 6 sqrt(t)
    truncation, or `cut` standard deviations), or with rule='point' trapezoid samples dx^d G_t(y_j), valid
    when dx is small against sqrt(t).  d=1 wave weights are exact cell
    overlaps with (-t, t) (mass t); the d=3 wave table is a sphere rule of
    radius t with mass t.
    """
    _check_kind(kind)
    if kind == "wave" and d == 2:
        raise UnsupportedKernel("the d=2 wave kernel has no grid weight table here; "
                                "use initial_term for d=2 wave data")
    if d not in (1, 2, 3):
        raise UnsupportedKernel(f"dimension {d} is not supported")
    dxs = tuple(float(x) for x in np.broadcast_to(np.asarray(dx, dtype=float), (d,)))
    if kind == "heat":
        if cut is None:
            cut = 8.0 if rule == "point" else 6.0
        parts = [_heat_weights_1d(t, h, half_width, cut, rule) for h in dxs]
    elif d == 1:
        if half_width is not None and half_width < t:
            raise UnsupportedKernel("grid does not cover the wave kernel support")
        parts = [_wave_weights_1d(t, dxs[0])]
    else:
        pts, w = sphere_rule(n_sphere)
        return KernelWeights(w * t / (4 * math.pi), pts * t, None, dxs)
    grids = np.meshgrid(*[p[0] for p in parts], indexing="ij")
    offsets = np.stack([g.reshape(-1) for g in grids], -1)
    wgrid = np.ones(grids[0].shape)
    for k, p in enumerate(parts):
        shape = [1] * d
        shape[k] = -1
        wgrid = wgrid * p[1].reshape(shape)
    return KernelWeights(wgrid.reshape(-1), offsets * np.array(dxs), offsets, dxs)


# --- spectral time factors -----------------------------------------------------

def heat_time_factor(t, tp, r):
    """int_0^min(t,t') FG_{t-s} FG_{t'-s} ds for the heat kernel."""
    lo, hi = min(t, tp), max(t, tp)
    r2 = np.asarray(r, dtype=float) ** 2
    delta = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.exp(-delta * r2 / 2.0) * (-np.expm1(-lo * r2)) / r2
    return np.where(r2 == 0, lo, out)


_GL20 = np.polynomial.legendre.leggauss(20)


def wave_time_factor(t, tp, r):
    """int_0^min(t,t') FG_{t-s} FG_{t'-s} ds for the wave kernel.

    Closed form (1/2w^2)[t cos(Dw) - cos(t'w) sin(tw)/w] with t <= t',
    D = t' - t; for small w the cancellation is avoided by Gauss-Legendre in s,
    which is exact to rounding there because the integrand is entire and
    slowly varying.
    """
    lo, hi = min(t, tp), max(t, tp)
    w = np.abs(np.asarray(r, dtype=float))
    out = np.empty_like(w)
    small = w * hi < 0.5
    big = ~small
    if np.any(big):
        wb = w[big]
        out[big] = (lo * np.cos((hi - lo) * wb) - np.cos(hi * wb) * np.sin(lo * wb) / wb) / (2 * wb * wb)
    if np.any(small):
        x, gw = _GL20
        s = 0.5 * lo * (x + 1.0)
        ws = w[small][..., None]
        a = (lo - s) * np.sinc((lo - s) * ws / math.pi)
        b = (hi - s) * np.sinc((hi - s) * ws / math.pi)
        out[small] = 0.5 * lo * np.sum(gw * a * b, axis=-1)
    return out


def time_factor(kind, t, tp, r):
    _check_kind(kind)
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = heat_time_factor(t, tp, r) if kind == "heat" else wave_time_factor(t, tp, r)
    return float(out[0]) if scalar else out


def domination_constant(kind, t, tp):
    """C with |time_factor(t, t', xi)| <= C / (1 + |xi|^2) for all xi."""
    lo, hi = min(t, tp), max(t, tp)
    if kind == "heat":
        return 1.0 + lo
    return lo * (1.0 + lo * hi)


class HeatTimeFactor(RadialWeight):
    """The heat time factor as a radial weight for spectral integrals."""

    decay = 2.0

    def __init__(self, t, tp):
        self.t, self.tp = float(t), float(tp)
        self.max_freq = 0.0

    def __call__(self, r):
        return heat_time_factor(self.t, self.tp, np.asarray(r, dtype=float))

    def gaussian_mixture(self):
        lo, hi = min(self.t, self.tp), max(self.t, self.tp)
        return (lambda s: np.ones_like(s), (hi - lo) / 2.0, (hi + lo) / 2.0)


class WaveTimeFactor(RadialWeight):
    """The wave time factor; for r >= 1 it splits into three trig terms."""

    decay = 2.0

    def __init__(self, t, tp):
        self.lo, self.hi = min(t, tp), max(t, tp)
        self.max_freq = self.lo + self.hi

    def __call__(self, r):
        return wave_time_factor(self.lo, self.hi, np.asarray(r, dtype=float))

    def terms(self):
        lo, hi = self.lo, self.hi
        # sin((t+t')w) - sin((t'-t)w) = 2 cos(t'w) sin(tw)
        out = [quad.TrigTerm(lambda r: lo / (2 * r * r), "cos", hi - lo, 2.0),
               quad.TrigTerm(lambda r: -1.0 / (4 * r ** 3), "sin", hi + lo, 3.0),
               quad.TrigTerm(lambda r: 1.0 / (4 * r ** 3), "sin", hi - lo, 3.0)]
        return quad.combine([t for t in (quad._normalize(t.amp, t.kind, t.freq, t.decay)
                                         for t in out) if t is not None])


def time_weight(kind, t, tp):
    _check_kind(kind)
    return HeatTimeFactor(t, tp) if kind == "heat" else WaveTimeFactor(t, tp)


# --- initial data ------------------------------------------------------------------

REGULARITY = ("bounded", "holder", "c1")


@dataclass
class InitialData:
    """u0 (and v0 for the wave equation) as vectorized callables on (..., d).

    `regularity` is one of 'bounded', 'holder' (with exponent `alpha`), 'c1'
    (which requires `grad_u0`).
    """

    u0: object
    v0: object = None
    grad_u0: object = None
    regularity: str = "bounded"
    alpha: float = None
    sup_norm: float = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regularity not in REGULARITY:
            raise ValueError(f"regularity must be one of {REGULARITY}")
        if self.regularity == "c1" and self.grad_u0 is None:
            raise ValueError("C1 initial data needs grad_u0")
        if self.regularity == "holder" and self.alpha is None:
            raise ValueError("Holder initial data needs alpha")

    @property
    def holder_exponent(self):
        if self.regularity == "c1":
            return 1.0
        if self.regularity == "holder":
            return self.alpha
        return None

    def to_dict(self):
        return {"name": self.name, **self.params}


def _first(x):
    return np.asarray(x, dtype=float)[..., 0]


def constant_data(c=1.0, v=0.0):
    return InitialData(lambda x: np.full(np.shape(x)[:-1], float(c)),
                       lambda x: np.full(np.shape(x)[:-1], float(v)),
                       lambda x: np.zeros(np.shape(x)), "c1", sup_norm=abs(c),
                       name="constant", params={"c": c, "v": v})


def sine_data(freq=1.0, amp=1.0):
    def u0(x):
        return amp * np.sin(freq * np.sum(x, -1))

    def grad(x):
        return (amp * freq * np.cos(freq * np.sum(x, -1)))[..., None] * np.ones(np.shape(x)[-1])

    return InitialData(u0, None, grad, "c1", sup_norm=abs(amp), name="sine",
                       params={"freq": freq, "amp": amp})


def clipped_linear_data(slope=1.0, clip=1.0):
    def u0(x):
        return np.clip(slope * _first(x), -clip, clip)

    def grad(x):
        g = np.zeros(np.shape(x))
        g[..., 0] = np.where(np.abs(slope * _first(x)) < clip, slope, 0.0)
        return g

    return InitialData(u0, None, grad, "holder", alpha=1.0, sup_norm=abs(clip),
                       name="clipped_linear", params={"slope": slope, "clip": clip})


def bump_data(width=1.0, height=1.0):
    def u0(x):
        return height * np.exp(-np.sum(np.asarray(x) ** 2, -1) / (2 * width ** 2))

    def grad(x):
        return -np.asarray(x) / width ** 2 * u0(x)[..., None]

    return InitialData(u0, None, grad, "c1", sup_norm=abs(height), name="bump",
                       params={"width": width, "height": height})


def weierstrass_data(alpha=0.5, terms=30):
    """sum_n a^n cos(2^n pi x_1) (1 - a), a = 2^-alpha: Holder(alpha), sup 1."""
    a = 2.0 ** (-alpha)
    n = np.arange(terms)

    def u0(x):
        x1 = _first(x)[..., None]
        return (1 - a) * np.sum(a ** n * np.cos(2.0 ** n * math.pi * x1), -1)

    return InitialData(u0, None, None, "holder", alpha=alpha, sup_norm=1.0,
                       name="weierstrass", params={"alpha": alpha, "terms": terms})


BUILTIN_DATA = {
    "constant": constant_data,
    "sine": sine_data,
    "clipped_linear": clipped_linear_data,
    "bump": bump_data,
    "weierstrass": weierstrass_data,
}


def data_from_dict(spec):
    spec = dict(spec)
    name = spec.pop("name", "constant")
    if name not in BUILTIN_DATA:
        raise ValueError(f"unknown initial data {name!r}")
    return BUILTIN_DATA[name](**spec)


def check_initial_data(kind, data, d):
    """Raise InvalidInitialData when `data` lacks what the equation needs."""
    if kind == "wave":
        if d in (2, 3) and (data.regularity != "c1" or data.grad_u0 is None):
            raise InvalidInitialData(f"the d={d} wave initial term needs C1 data with a gradient")
        if d == 1 and data.regularity == "bounded":
            raise InvalidInitialData("the d=1 wave initial term needs continuous (Holder or C1) u0")
        if d not in (1, 2, 3):
            raise UnsupportedKernel(f"wave equation in d={d}")


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def initial_term(kind, data, t, x, d=1, dy=None, n_angle=24):
    """Solution of the homogeneous equation from `data`, evaluated at (t, x).

    Heat: u0 * G_t with the trapezoid ('point') heat weights on a grid of
    spacing dy (default sqrt(t)/4).  Wave: d'Alembert (d=1),
    the Poisson formula with r = sin(phi) removing the edge singularity (d=2),
    Kirchhoff's spherical mean (d=3).
    """
    _check_kind(kind)
    check_initial_data(kind, data, d)
    x = _points(x, d)
    if t == 0:
        return np.asarray(data.u0(x), dtype=float)
    if kind == "heat":
        if dy is None:
            dy = math.sqrt(t) / 4
        kw = kernel_weights("heat", t, dy, d, rule="point")
        out = np.zeros(x.shape[:-1])
        flat = x.reshape(-1, d)
        res = np.empty(flat.shape[0])
        step = max(1, 2_000_000 // kw.weights.size)
        for i in range(0, flat.shape[0], step):
            pts = flat[i:i + step, None, :] - kw.points[None, :, :]
            res[i:i + step] = data.u0(pts) @ kw.weights
        return res.reshape(out.shape)
    if d == 1:
        u = 0.5 * (data.u0(x + t) + data.u0(x - t))
        if data.v0 is not None:
            def f(s):
                return data.v0(x + t * s)
            half = integrate.quad_vec(f, -1.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]
            u = u + 0.5 * t * half
        return u
    if d == 2:
        phi, wphi = quad.gauss_legendre(n_angle, 0.0, math.pi / 2)
        nth = 2 * n_angle
        th = np.arange(nth) * 2 * math.pi / nth
        om = np.stack([np.cos(th), np.sin(th)], -1)
        rho = np.sin(phi)
        offs = t * rho[:, None, None] * om[None, :, :]
        y = x[..., None, None, :] + offs
        val = data.u0(y)
        if data.v0 is not None:
            val = val + t * data.v0(y)
        val = val + t * rho[:, None] * np.sum(data.grad_u0(y) * om, -1)
        wts = (wphi * rho)[:, None] * np.full(nth, 2 * math.pi / nth)[None, :]
        return np.sum(val * wts, axis=(-2, -1)) / (2 * math.pi)
    if d == 3:
        pts, w = sphere_rule(n_angle)
        y = x[..., None, :] + t * pts
        val = data.u0(y) + np.sum(data.grad_u0(y) * (t * pts), -1)
        if data.v0 is not None:
            val = val + t * data.v0(y)
        return val @ w / (4 * math.pi)
    raise UnsupportedKernel(f"dimension {d}")
