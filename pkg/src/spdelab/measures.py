"""Spectral measures of the driving noise and the integrability checks on them.

Convention: the Fourier transform is f^(xi) = int e^{-i<xi,x>} f(x) dx, and a
spectral measure mu is described by its density with respect to Lebesgue
measure.  All named variants are homogeneous, density(r w) = r**p g(w), so
radial integrals factor into a one-dimensional radial integral times the
closed-form angular mass int_S g.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma, gammaln, hyp1f1, jv

from . import quadrature as quad
from .errors import BudgetExceeded, DivergentMeasure, Divergent, is_divergent

# truncation radii 2**4 .. 2**14 used by the divergence detector
_CUTOFF_EXPONENTS = np.arange(4, 15)
_SLOPE_FLOOR = -1e-3


def sphere_area(d):
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def sphere_power_mass(exponents):
    """int over the unit sphere of prod_j |w_j|**a_j."""
    b = [(a + 1.0) / 2.0 for a in exponents]
    return 2.0 * math.exp(sum(gammaln(x) for x in b) - gammaln(sum(b)))


def fractional_constant(H):
    """C_H with C_H |xi|^(1-2H) the spectral density of fractional noise."""
    return math.gamma(2 * H + 1) * math.sin(math.pi * H) / (2 * math.pi)


def riesz_constant(alpha, d):
    return math.gamma((d - alpha) / 2) / (2 ** alpha * math.pi ** (d / 2) * math.gamma(d / 2))


def _as_points(xi, d):
    xi = np.asarray(xi, dtype=float)
    if d == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    if xi.shape[-1] != d:
        raise ValueError(f"expected points with last axis {d}, got shape {xi.shape}")
    return xi


class SpectralMeasure:
    """Base class.  Subclasses set `dimension` and implement `density`."""

    dimension = 1
    radial_degree = None  # p, or None when not homogeneous

    def density(self, xi):
        raise NotImplementedError

    @property
    def homogeneous(self):
        return self.radial_degree is not None

    def angular_mass(self):
        raise NotImplementedError

    def angular_density(self, w):
        """g(w) on unit vectors (homogeneous variants)."""
        raise NotImplementedError

    @property
    def origin_power(self):
        """s with the radial density behaving like r**s near 0."""
        return self.radial_degree + self.dimension - 1

    @property
    def growth(self):
        """Exponent of the radial density at infinity."""
        return self.radial_degree + self.dimension - 1

    def radial_density(self, r):
        """rho(r) with int f(|xi|) mu(dxi) = int_0^inf f(r) rho(r) dr."""
        return self.angular_mass() * np.asarray(r, dtype=float) ** self.origin_power

    def _radial_smooth(self, r):
        """rho(r) / r**origin_power, smooth on [0, inf)."""
        return np.full_like(np.asarray(r, dtype=float), self.angular_mass())

    def q_threshold(self):
        """Smallest q with int mu/(1+|xi|^q) < inf (exclusive bound)."""
        return max(self.growth + 1.0, 0.0)

    def is_dalang(self):
        return self.q_threshold() < 2.0

    def singular_axes(self):
        """Per-axis exponents for axis-aligned singular angular factors, or None."""
        return None

    def cell_masses(self, lo, hi):
        """mu of the boxes [lo, hi] (arrays of shape (n, d))."""
        return _tensor_cell_masses(self, lo, hi)

    def to_dict(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


class FractionalLine(SpectralMeasure):
    """Fractional noise on the line: density C_H |xi|^(1-2H), H in (0, 1)."""

    def __init__(self, H):
        if not 0.0 < H < 1.0:
            raise ValueError("H must lie in (0, 1)")
        self.H = float(H)
        self.dimension = 1
        self.constant = fractional_constant(self.H)
        self.radial_degree = 1.0 - 2.0 * self.H

    def density(self, xi):
        x = np.abs(np.asarray(xi, dtype=float))
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        with np.errstate(divide="ignore"):
            return self.constant * x ** self.radial_degree

    def angular_mass(self):
        return 2.0 * self.constant

    def angular_density(self, w):
        return np.full(np.shape(w)[:-1], self.constant)

    def cell_masses(self, lo, hi):
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        return self.constant * (_signed_power_antideriv(hi, self.radial_degree)
                                - _signed_power_antideriv(lo, self.radial_degree))

    def to_dict(self):
        return {"type": "fractional_line", "H": self.H}

    def __repr__(self):
        return f"FractionalLine(H={self.H})"


class IsotropicFractional(SpectralMeasure):
    """Density prod_k xi_k^2 / |xi|^(2H + d) (unit variance scale)."""

    def __init__(self, H, d):
        if not 0.0 < H < 1.0:
            raise ValueError("H must lie in (0, 1)")
        self.H = float(H)
        self.dimension = int(d)
        self.radial_degree = self.dimension - 2.0 * self.H

    def density(self, xi):
        x = _as_points(xi, self.dimension)
        r = np.sqrt(np.sum(x * x, axis=-1))
        num = np.prod(x * x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / r ** (2 * self.H + self.dimension)
        if self.dimension == 1:
            with np.errstate(divide="ignore"):
                return np.where(r == 0, r ** self.radial_degree, out)
        return np.where(r == 0, 0.0, out)

    def angular_mass(self):
        return sphere_power_mass([2.0] * self.dimension)

    def angular_density(self, w):
        return np.prod(np.asarray(w) ** 2, axis=-1)

    def cell_masses(self, lo, hi):
        if self.dimension == 1:
            lo = np.asarray(lo, dtype=float).reshape(-1)
            hi = np.asarray(hi, dtype=float).reshape(-1)
            return (_signed_power_antideriv(hi, self.radial_degree)
                    - _signed_power_antideriv(lo, self.radial_degree))
        return _tensor_cell_masses(self, lo, hi)

    def to_dict(self):
        return {"type": "isotropic_fractional", "H": self.H, "d": self.dimension}

    def __repr__(self):
        return f"IsotropicFractional(H={self.H}, d={self.dimension})"


class Riesz(SpectralMeasure):
    """Riesz kernel |x|^(-alpha): density c_alpha |xi|^(alpha - d), 0 < alpha < d."""

    def __init__(self, alpha, d):
        d = int(d)
        if not 0.0 < alpha < d:
            raise ValueError("alpha must lie in (0, d)")
        self.alpha = float(alpha)
        self.dimension = d
        self.constant = riesz_constant(self.alpha, d)
        self.radial_degree = self.alpha - d

    def density(self, xi):
        x = _as_points(xi, self.dimension)
        r = np.sqrt(np.sum(x * x, axis=-1))
        with np.errstate(divide="ignore"):
            return self.constant * r ** self.radial_degree

    def angular_mass(self):
        return self.constant * sphere_area(self.dimension)

    def angular_density(self, w):
        return np.full(np.shape(w)[:-1], self.constant)

    def bessel_profile(self, r, h):
        """int_S g(w) cos(r <w, v>) dw for |v| = h."""
        d = self.dimension
        nu = d / 2.0 - 1.0
        z = np.asarray(r, dtype=float) * h
        k = self.angular_mass() * math.gamma(d / 2)
        if d == 1:
            return k * np.cos(z) / math.gamma(0.5)
        if d == 3:
            return self.angular_mass() * np.sinc(z / math.pi)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = k * (2.0 / z) ** nu * jv(nu, z)
        small = z < 1e-8
        if np.any(small):
            out = np.where(small, self.angular_mass(), out)
        return out

    def bessel_terms(self, h):
        """Hankel expansion of bessel_profile for h r >= 30, as trig terms in r."""
        d = self.dimension
        nu = d / 2.0 - 1.0
        k = self.angular_mass() * math.gamma(d / 2)
        phi = nu * math.pi / 2 + math.pi / 4
        coeffs = _hankel_coeffs(nu, 14)
        cphi, sphi = math.cos(phi), math.sin(phi)

        def pq(r):
            z = np.asarray(r, dtype=float) * h
            P = np.zeros_like(z)
            Q = np.zeros_like(z)
            for j, a in enumerate(coeffs):
                term = a / z ** j
                if j % 2 == 0:
                    P = P + (-1) ** (j // 2) * term
                else:
                    Q = Q + (-1) ** (j // 2) * term
            pref = k * (2.0 / z) ** nu * np.sqrt(2.0 / (math.pi * z))
            return pref, P, Q

        def amp_cos(r):
            pref, P, Q = pq(r)
            return pref * (P * cphi + Q * sphi)

        def amp_sin(r):
            pref, P, Q = pq(r)
            return pref * (P * sphi - Q * cphi)

        decay = nu + 0.5
        return [quad.TrigTerm(amp_cos, "cos", h, decay),
                quad.TrigTerm(amp_sin, "sin", h, decay)]

    def to_dict(self):
        return {"type": "riesz", "alpha": self.alpha, "d": self.dimension}

    def __repr__(self):
        return f"Riesz(alpha={self.alpha}, d={self.dimension})"


class AnisotropicFractional(SpectralMeasure):
    """Product density prod_j C_{H_j} |xi_j|^(1 - 2 H_j)."""

    def __init__(self, Hs):
        Hs = tuple(float(h) for h in np.atleast_1d(Hs))
        if not all(0.0 < h < 1.0 for h in Hs):
            raise ValueError("every H_j must lie in (0, 1)")
        self.Hs = Hs
        self.dimension = len(Hs)
        self.constants = tuple(fractional_constant(h) for h in Hs)
        self.exponents = tuple(1.0 - 2.0 * h for h in Hs)
        self.radial_degree = float(sum(self.exponents))

    def density(self, xi):
        x = np.abs(_as_points(xi, self.dimension))
        out = np.ones(x.shape[:-1])
        singular = np.zeros(x.shape[:-1], dtype=bool)
        for j, (c, a) in enumerate(zip(self.constants, self.exponents)):
            xj = x[..., j]
            with np.errstate(divide="ignore"):
                out = out * c * xj ** a
            if a < 0:
                singular |= xj == 0
        return np.where(singular, np.inf, out)

    def angular_mass(self):
        return math.prod(self.constants) * sphere_power_mass(self.exponents)

    def angular_density(self, w):
        w = np.abs(np.asarray(w, dtype=float))
        out = np.ones(w.shape[:-1])
        for j, (c, a) in enumerate(zip(self.constants, self.exponents)):
            out = out * c * w[..., j] ** a
        return out

    def singular_axes(self):
        return self.exponents

    def cell_masses(self, lo, hi):
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        out = np.ones(lo.shape[0])
        for j, (c, a) in enumerate(zip(self.constants, self.exponents)):
            out = out * c * (_signed_power_antideriv(hi[:, j], a)
                             - _signed_power_antideriv(lo[:, j], a))
        return out

    def to_dict(self):
        return {"type": "anisotropic_fractional", "H": list(self.Hs)}

    def __repr__(self):
        return f"AnisotropicFractional(H={self.Hs})"


class Tabulated(SpectralMeasure):
    """User-supplied symmetric density.

    `radial_decay_hint` is the exponent p with density ~ |xi|**p at infinity;
    `origin_hint` the exponent near the origin (0 for a bounded density).
    """

    def __init__(self, density, d, radial_decay_hint, origin_hint=0.0, n_angles=64,
                 name="tabulated"):
        self._density = density
        self.dimension = int(d)
        self.radial_decay_hint = float(radial_decay_hint)
        self.origin_hint = float(origin_hint)
        self.n_angles = int(n_angles)
        self.name = name

    def density(self, xi):
        return np.asarray(self._density(_as_points(xi, self.dimension)), dtype=float)

    @property
    def origin_power(self):
        return self.origin_hint + self.dimension - 1

    @property
    def growth(self):
        return self.radial_decay_hint + self.dimension - 1

    def angular_rule(self):
        return uniform_sphere_rule(self.dimension, self.n_angles)

    def radial_density(self, r):
        r = np.asarray(r, dtype=float)
        dirs, w = self.angular_rule()
        pts = r[..., None, None] * dirs
        vals = self.density(pts)
        return np.tensordot(vals, w, axes=([-1], [0])) * r ** (self.dimension - 1)

    def _radial_smooth(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.radial_density(r) / r ** self.origin_power

    def to_dict(self):
        return {"type": "tabulated", "name": self.name, "d": self.dimension,
                "radial_decay_hint": self.radial_decay_hint}

    def __repr__(self):
        return f"Tabulated({self.name}, d={self.dimension})"


def measure_from_dict(spec):
    """Build a named measure variant from a plain mapping."""
    kind = spec.get("type")
    if kind == "fractional_line":
        return FractionalLine(spec["H"])
    if kind == "isotropic_fractional":
        return IsotropicFractional(spec["H"], spec.get("d", 1))
    if kind == "riesz":
        return Riesz(spec["alpha"], spec["d"])
    if kind == "anisotropic_fractional":
        return AnisotropicFractional(spec["H"])
    if kind == "white":
        return FractionalLine(0.5)
    raise ValueError(f"unknown measure type {kind!r}")


@dataclass
class MeasureFamily:
    """An approximating sequence mu_n together with its limit mu."""

    members: list
    limit: SpectralMeasure
    labels: list = field(default_factory=list)

    def __post_init__(self):
        dims = {m.dimension for m in self.members} | {self.limit.dimension}
        if len(dims) != 1:
            raise ValueError("family members and limit must share a dimension")
        if not self.labels:
            self.labels = list(range(1, len(self.members) + 1))

    @property
    def dimension(self):
        return self.limit.dimension


def fractional_family(ns, H=0.5, scale=0.2, d=1):
    """H_n = H + scale / n, the standard family approaching H from above."""
    if d != 1:
        raise ValueError("fractional family is one-dimensional")
    members = [FractionalLine(H + scale / n) for n in ns]
    return MeasureFamily(members, FractionalLine(H), list(ns))


def riesz_family(ns, alpha, d, scale=0.2):
    """alpha_n = alpha + scale / n (a negative scale approaches from below)."""
    members = [Riesz(alpha + scale / n, d) for n in ns]
    return MeasureFamily(members, Riesz(alpha, d), list(ns))


# --- angular rules ------------------------------------------------------------

def uniform_sphere_rule(d, n):
    """Directions and weights integrating functions on the unit sphere."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        th = (np.arange(n) + 0.5) * 2 * math.pi / n
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(n, 2 * math.pi / n)
    if d == 3:
        ct, wt = quad.gauss_legendre(n, -1.0, 1.0)
        ph = (np.arange(2 * n) + 0.5) * math.pi / n
        st = np.sqrt(1 - ct ** 2)
        dirs = np.stack([np.outer(st, np.cos(ph)), np.outer(st, np.sin(ph)),
                         np.outer(ct, np.ones_like(ph))], -1).reshape(-1, 3)
        w = np.outer(wt, np.full(2 * n, math.pi / n)).reshape(-1)
        return dirs, w
    raise ValueError("angular rules are available for d <= 3")


def weighted_sphere_rule(measure, n):
    """Directions and weights for int_S g(w) phi(w) dw, one orthant at a time.

    Axis-aligned singular factors |w_j|**a_j are absorbed with Gauss-Jacobi
    rules; the remaining smooth part of g is multiplied into the weights.
    """
    d = measure.dimension
    a = measure.singular_axes() or (0.0,) * d
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        return dirs, measure.angular_density(dirs)
    if d == 2:
        x, w = _jacobi_pm1(n, a[0], a[1])
        th = math.pi / 4 * (1 + x)
        base = np.stack([np.cos(th), np.sin(th)], -1)
        sing = (1 - x) ** a[0] * (1 + x) ** a[1]
        with np.errstate(divide="ignore", invalid="ignore"):
            smooth = measure.angular_density(base) / sing
        wq = w * smooth * math.pi / 4
        return _reflect(base, wq)
    if d == 3:
        xt, wt = _jacobi_pm1(n, a[2], a[0] + a[1] + 1.0)
        xp, wp = _jacobi_pm1(n, a[0], a[1])
        th = math.pi / 4 * (1 + xt)
        ph = math.pi / 4 * (1 + xp)
        T, P = np.meshgrid(th, ph, indexing="ij")
        XT, XP = np.meshgrid(xt, xp, indexing="ij")
        base = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
        sing = ((1 - XT) ** a[2] * (1 + XT) ** (a[0] + a[1] + 1.0)
                * (1 - XP) ** a[0] * (1 + XP) ** a[1])
        smooth = measure.angular_density(base) * np.sin(T) / sing
        wq = np.outer(wt, wp) * smooth * (math.pi / 4) ** 2
        return _reflect(base.reshape(-1, 3), wq.reshape(-1))
    raise ValueError("angular rules are available for d <= 3")


def _jacobi_pm1(n, alpha, beta):
    from scipy.special import roots_jacobi
    return roots_jacobi(n, alpha, beta)


def _reflect(base, w):
    d = base.shape[1]
    signs = np.array(np.meshgrid(*[[1.0, -1.0]] * d, indexing="ij")).reshape(d, -1).T
    dirs = (signs[:, None, :] * base[None, :, :]).reshape(-1, d)
    return dirs, np.tile(w, signs.shape[0])


# --- cell masses --------------------------------------------------------------

def _signed_power_antideriv(x, p):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** (p + 1.0) / (p + 1.0)


_GL_CACHE = {}


def _gl(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _tensor_cell_masses(measure, lo, hi, order=6, near_order=12):
    """Gauss-Legendre tensor rule per cell; the cell containing the origin of
    a homogeneous measure is done exactly by the divergence theorem."""
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    d = lo.shape[1]
    out = np.empty(lo.shape[0])
    width = hi - lo
    centre = 0.5 * (lo + hi)
    dist = np.sqrt(np.sum(centre ** 2, axis=1)) / np.max(width, axis=1)
    origin = np.all((lo <= 0) & (hi >= 0), axis=1)
    near = (~origin) & (dist < 3.0)
    far = ~(origin | near)
    for mask, n in ((far, order), (near, near_order)):
        if not mask.any():
            continue
        x, w = _gl(n)
        grids = np.meshgrid(*[x] * d, indexing="ij")
        nodes = np.stack([g.reshape(-1) for g in grids], -1)
        wts = np.prod(np.stack(np.meshgrid(*[w] * d, indexing="ij"), -1).reshape(-1, d), -1)
        c = centre[mask]
        hw = 0.5 * width[mask]
        idx = np.nonzero(mask)[0]
        for start in range(0, idx.size, 4096):
            sl = slice(start, start + 4096)
            pts = c[sl, None, :] + hw[sl, None, :] * nodes[None, :, :]
            out[idx[sl]] = (measure.density(pts) @ wts) * np.prod(hw[sl], axis=1)
    for i in np.nonzero(origin)[0]:
        out[i] = _origin_cell_mass(measure, lo[i], hi[i])
    return out


def _origin_cell_mass(measure, lo, hi, n=24):
    """mu of a box containing the origin for a homogeneous density.

    For density of degree p, div(x f(x)) = (d + p) f(x), so the box mass is
    the flux of x f(x) through the faces divided by d + p.
    """
    if not measure.homogeneous:
        raise ValueError("origin cell needs a homogeneous measure")
    d = measure.dimension
    p = measure.radial_degree
    x, w = _gl(n)
    total = 0.0
    for axis in range(d):
        for bound in (lo[axis], hi[axis]):
            if bound == 0:
                continue
            others = [k for k in range(d) if k != axis]
            # split face at 0 on every other axis so the integrand is smooth
            pieces = []
            for k in others:
                segs = [(lo[k], 0.0), (0.0, hi[k])] if lo[k] < 0 < hi[k] else [(lo[k], hi[k])]
                pieces.append(segs)
            for combo in np.array(np.meshgrid(*[range(len(s)) for s in pieces],
                                              indexing="ij")).reshape(len(others), -1).T:
                axes_nodes = []
                axes_w = []
                for k_i, k in enumerate(others):
                    a, b = pieces[k_i][combo[k_i]]
                    axes_nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
                    axes_w.append(0.5 * (b - a) * w)
                if others:
                    grids = np.meshgrid(*axes_nodes, indexing="ij")
                    wg = np.prod(np.stack(np.meshgrid(*axes_w, indexing="ij"), -1), -1)
                    pts = np.zeros(grids[0].shape + (d,))
                    for k_i, k in enumerate(others):
                        pts[..., k] = grids[k_i]
                    pts[..., axis] = bound
                    flux = abs(bound) * np.sum(measure.density(pts) * wg)
                else:
                    flux = abs(bound) * float(measure.density(np.array([[bound]]))[0])
                total += flux
    return total / (d + p)


# --- radial integrals with divergence detection -------------------------------

def _shell_integrand(measure, f):
    return lambda r: f(r) * measure.radial_density(r)


def radial_integral(measure, f, f_decay, tol=1e-10, start=0.0):
    """int_{|xi| > start} f(|xi|) mu(dxi) for a non-oscillatory radial f.

    `f_decay` is the exponent with f(r) ~ r**(-f_decay).  Returns a float or a
    Divergent marker when the shell increments over [2^k, 2^(k+1)],
    k = 4..13, stop decaying.
    """
    s = measure.origin_power
    base = float(2 ** _CUTOFF_EXPONENTS[0])
    if start == 0.0:
        head = quad.adaptive(lambda r: f(r) * measure._radial_smooth(r), 0.0, base,
                             power=s, tol=tol / 4)
    else:
        head = quad.adaptive(_shell_integrand(measure, f), start, base, tol=tol / 4,
                             breakpoints=np.geomspace(start, base, 9))
    integrand = _shell_integrand(measure, f)
    cutoffs = [base]
    partials = [head.value]
    incs = []
    for k in _CUTOFF_EXPONENTS[:-1]:
        a, b = 2.0 ** k, 2.0 ** (k + 1)
        inc = quad.adaptive(integrand, a, b, tol=tol / 40, rel=1e-12).value
        incs.append(inc)
        cutoffs.append(b)
        partials.append(partials[-1] + inc)
    incs = np.abs(np.array(incs))
    with np.errstate(divide="ignore"):
        logs = np.log2(incs)
    slopes = np.diff(logs)
    tail_slopes = slopes[-3:]
    decay = f_decay - measure.growth
    divergent = (np.all(np.isfinite(tail_slopes)) and np.all(tail_slopes >= _SLOPE_FLOOR))
    if divergent or decay <= 1.0:
        if not divergent and incs[-1] <= tol:
            # declared decay is only a hint; trust the increments
            return partials[-1]
        return Divergent(tuple(cutoffs), tuple(partials), tuple(slopes))
    tail = quad.power_tail(integrand, base, decay, tol=tol / 4).value
    return head.value + tail


def dalang_integral(measure, tol=1e-10):
    """int mu(dxi) / (1 + |xi|^2): a float, or Divergent."""
    return radial_integral(measure, lambda r: 1.0 / (1.0 + r * r), 2.0, tol=tol)


def h1_integral(measure, q, tol=1e-10):
    return radial_integral(measure, lambda r: 1.0 / (1.0 + r ** q), q, tol=tol)


def ball_mass(measure, R, tol=1e-12):
    """mu(B_R)."""
    if R <= 0:
        return 0.0
    if measure.homogeneous:
        s = measure.origin_power
        return measure.angular_mass() * R ** (s + 1.0) / (s + 1.0)
    return quad.adaptive(measure._radial_smooth, 0.0, R, power=measure.origin_power,
                         tol=tol).value


def h1_characterization(measure, q, h_grid=None, tol=1e-10):
    """(sup_h h^q mu(B_{1/h}), int_{|xi|>1} |xi|^-q mu(dxi)).

    Both are finite exactly when the weighted integral is; the tail may come
    back as a Divergent marker.
    """
    if h_grid is None:
        h_grid = np.geomspace(1e-4, 1.0, 81)
    ball = max(h ** q * ball_mass(measure, 1.0 / h) for h in h_grid)
    tail = radial_integral(measure, lambda r: r ** (-float(q)), q, tol=tol, start=1.0)
    return ball, tail


def anisotropic_dalang_condition(Hs):
    """The product measure is Dalang-integrable iff sum H_j > d - 1."""
    Hs = np.atleast_1d(Hs)
    return bool(np.sum(Hs) > Hs.size - 1)


def default_q(members):
    """Midpoint of the admissible interval (q_min, 2) for the whole family."""
    q_min = max(m.q_threshold() for m in members)
    if q_min >= 2.0:
        return None
    return 1.0 + q_min / 2.0


def default_dictionary(d):
    """Frequency vectors v for the test functions cos(<xi,v>)/(1+|xi|^2).

    The zero vector (the pure weight) comes first, then 25 modulations.
    """
    if d == 1:
        vs = [np.array([x]) for x in np.geomspace(0.125, 16.0, 25)]
    else:
        rng = np.random.default_rng(20240611)
        dirs = rng.normal(size=(5, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        vs = [m * u for m in (0.25, 0.5, 1.0, 2.0, 4.0) for u in dirs]
    return [np.zeros(d)] + vs


# --- Fourier-type integrals int F(|xi|) cos(<xi, v>) mu(dxi) ---------------------

class RadialWeight:
    """A radial function F(|xi|) known both pointwise and as trig terms.

    Subclasses provide __call__, `terms()` (valid for r >= 1), `decay`,
    `max_freq`, and optionally `gaussian_mixture()` returning (w, lo, hi)
    with F(r) = int_lo^hi w(s) exp(-s r^2) ds.
    """

    decay = 2.0
    max_freq = 0.0

    def __call__(self, r):
        raise NotImplementedError

    def terms(self):
        return [quad.TrigTerm(self, "one", 0.0, self.decay)]

    def gaussian_mixture(self):
        return None


class DalangWeight(RadialWeight):
    def __call__(self, r):
        return 1.0 / (1.0 + np.asarray(r, dtype=float) ** 2)

    def gaussian_mixture(self):
        return (lambda s: np.exp(-s), 0.0, np.inf)


def fourier_integral(measure, F, v=None, tol=1e-9):
    """int F(|xi|) cos(<xi, v>) mu(dxi) for a Dalang-integrable measure."""
    d = measure.dimension
    v = np.zeros(d) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    if not measure.homogeneous:
        val = dalang_integral(measure, tol=1e-6)
        if is_divergent(val):
            raise DivergentMeasure(f"{measure!r} is not Dalang-integrable")
    elif not measure.is_dalang():
        raise DivergentMeasure(f"{measure!r} is not Dalang-integrable")
    h = float(np.linalg.norm(v))

    if h == 0.0 or d == 1:
        return _radial_fourier(measure, F, h, tol)
    if isinstance(measure, Riesz):
        return _riesz_fourier(measure, F, h, tol)
    if isinstance(measure, AnisotropicFractional) and F.gaussian_mixture() is not None:
        return _product_fourier(measure, F, v, tol)
    return _angular_fourier(measure, F, v, tol)


def _radial_fourier(measure, F, h, tol):
    """Angular factor is a plain cosine (d = 1) or constant (h = 0)."""
    s = measure.origin_power
    growth = measure.growth
    rho = measure.radial_density

    def core(r):
        out = F(r) * measure._radial_smooth(r)
        if h:
            out = out * np.cos(h * r)
        return out

    rho_term = quad.TrigTerm(rho, "one", 0.0, -growth)
    factors = [F.terms(), [rho_term]]
    if h:
        factors.append([quad.TrigTerm(lambda r: np.ones_like(r), "cos", h, 0.0)])
    terms = quad.expand(factors)
    return quad.radial_oscillatory(core, s, terms, 1.0, tol, F.max_freq + h)


def _riesz_fourier(measure, F, h, tol):
    s = measure.origin_power
    split = max(1.0, 30.0 / h)

    def core(r):
        return F(r) * measure.bessel_profile(r, h)

    power_term = quad.TrigTerm(lambda r: np.asarray(r, dtype=float) ** s, "one", 0.0, -s)
    terms = quad.expand([F.terms(), measure.bessel_terms(h), [power_term]])
    return quad.radial_oscillatory(core, s, terms, split, tol, F.max_freq + h)


def _hankel_coeffs(nu, n):
    out = [1.0]
    mu = 4.0 * nu * nu
    for k in range(1, n):
        out.append(out[-1] * (mu - (2 * k - 1) ** 2) / (k * 8.0))
    return out


def _product_fourier(measure, F, v, tol):
    """Gaussian subordination: exp(-s|xi|^2) turns the integral into a product
    of one-dimensional closed forms in confluent hypergeometric functions."""
    w, lo, hi = F.gaussian_mixture()
    b = [1.0 - H for H in measure.Hs]
    pref = math.prod(c * math.gamma(bj) for c, bj in zip(measure.constants, b))
    v = np.abs(v)
    power = -sum(bj for bj, vj in zip(b, v) if vj == 0.0) if lo == 0.0 else 0.0
    if not np.isfinite(hi):
        hi = 60.0 + 40.0 * sum(b)

    def smooth(sig):
        sig = np.asarray(sig, dtype=float)
        out = pref * w(sig)
        for bj, vj in zip(b, v):
            if vj == 0.0 and lo == 0.0:
                continue
            out = out * sig ** (-bj) * hyp1f1(bj, 0.5, -vj * vj / (4.0 * sig))
        return out

    marks = [x * x / 4.0 for x in v if x > 0]
    first = lo if lo > 0 else min(marks + [1.0]) * 1e-6
    bp = np.unique(np.concatenate([np.geomspace(first, hi, 40), marks]))
    return quad.adaptive(smooth, lo, hi, power=power, tol=tol, breakpoints=bp).value


def circle_pieces_rule(measure, n, v, levels=9, ratio=0.2):
    """Rule on the circle split at the axes and where <w, v> = 0.

    Panels touching an axis use Gauss-Jacobi with the matching exponent of
    |w_j|**a_j.  Toward the directions orthogonal to v, where the radial
    transform has an algebraic kink, panels are graded geometrically.
    """
    a1, a2 = measure.singular_axes() or (0.0, 0.0)
    axes = {0.0: a2, math.pi / 2: a1, math.pi: a2, 1.5 * math.pi: a1, 2 * math.pi: a2}
    kinks = set()
    if np.any(v):
        t0 = (math.atan2(v[1], v[0]) + math.pi / 2) % math.pi
        kinks = {t0, t0 + math.pi}
        if abs(t0) < 1e-14 or abs(t0 + math.pi - 2 * math.pi) < 1e-14:
            kinks |= {0.0, 2 * math.pi}
    cuts = sorted(set(axes) | kinks)
    panels = []
    for ta, tb in zip(cuts[:-1], cuts[1:]):
        if tb - ta < 1e-14:
            continue
        pts = [ta, tb]
        width = tb - ta
        if any(abs(ta - k) < 1e-14 for k in kinks):
            pts += [ta + width * ratio ** j for j in range(1, levels)]
        if any(abs(tb - k) < 1e-14 for k in kinks):
            pts += [tb - width * ratio ** j for j in range(1, levels)]
        pts = sorted(set(pts))
        for j, (pa, pb) in enumerate(zip(pts[:-1], pts[1:])):
            ea = axes.get(ta, 0.0) if j == 0 else 0.0
            eb = axes.get(tb, 0.0) if j == len(pts) - 2 else 0.0
            panels.append((pa, pb, ea, eb))
    dirs, weights = [], []
    for ta, tb, ea, eb in panels:
        x, w = _jacobi_pm1(n, eb, ea)
        th = ta + (tb - ta) * (1 + x) / 2
        om = np.stack([np.cos(th), np.sin(th)], -1)
        sing = (1 - x) ** eb * (1 + x) ** ea
        dirs.append(om)
        weights.append(w * measure.angular_density(om) / sing * (tb - ta) / 2)
    return np.concatenate(dirs), np.concatenate(weights)


def _angular_fourier(measure, F, v, tol, n=8, rel_tol=1e-7):
    """Angular rule around one-dimensional oscillatory radial integrals.

    The rule is refined once and the two results compared; BudgetExceeded is
    raised when they disagree by more than the tolerance.
    """
    if not measure.homogeneous:
        raise BudgetExceeded("angular route needs a homogeneous measure")
    s = measure.origin_power
    cache = {}

    def psi(c):
        key = round(abs(float(c)), 13)
        if key not in cache:
            def core(r):
                return F(r) * np.cos(key * r)
            amp = quad.TrigTerm(lambda r: np.asarray(r, dtype=float) ** s, "one", 0.0, -s)
            factors = [F.terms(), [amp]]
            if key:
                factors.append([quad.TrigTerm(lambda r: np.ones_like(r), "cos", key, 0.0)])
            cache[key] = quad.radial_oscillatory(core, s, quad.expand(factors), 1.0,
                                                 tol / 10, F.max_freq + key)
        return cache[key]

    results = []
    for m in (n, 2 * n):
        if measure.dimension == 2:
            dirs, w = circle_pieces_rule(measure, m, v)
        else:
            dirs, w = weighted_sphere_rule(measure, 2 * m)
        c = dirs @ v
        results.append(float(sum(wi * psi(ci) for wi, ci in zip(w, c))))
    diff = abs(results[1] - results[0])
    if diff > max(tol, rel_tol * abs(results[1])):
        raise BudgetExceeded(
            f"angular rule did not settle ({results[0]:.10g} vs {results[1]:.10g})",
            results[1], diff)
    return results[1]


# --- hypothesis checks ------------------------------------------------------------

@dataclass
class HypothesisReport:
    q: float
    dalang: list
    h1_values: list
    h1_supremum: object
    ball_constant: float
    tail_supremum: object
    h2_distances: list
    verdicts: dict

    def to_dict(self):
        def conv(x):
            if is_divergent(x):
                return "divergent"
            if isinstance(x, (list, tuple)):
                return [conv(y) for y in x]
            return x
        return {
            "q": self.q,
            "dalang": conv(self.dalang),
            "h1_values": conv(self.h1_values),
            "h1_supremum": conv(self.h1_supremum),
            "ball_constant": self.ball_constant,
            "tail_supremum": conv(self.tail_supremum),
            "h2_distances": conv(self.h2_distances),
            "verdicts": dict(self.verdicts),
        }


def h2_distance(measure_n, measure, dictionary=None, tol=1e-9):
    """max over the dictionary of |int f d(mu_n - mu)|."""
    d = measure.dimension
    if dictionary is None:
        dictionary = default_dictionary(d)
    F = DalangWeight()
    return max(abs(fourier_integral(measure_n, F, v, tol) - fourier_integral(measure, F, v, tol))
               for v in dictionary)


def h1_check(family, q=None, worst_member=None, tol=1e-9, dictionary=None, with_h2=True):
    """Check the uniform integrability hypotheses on a measure family."""
    members = list(family.members)
    if worst_member is not None:
        members.append(worst_member)
    if q is None:
        q = default_q(members + [family.limit])
    dalang = [dalang_integral(m, tol) for m in family.members]
    dalang_ok = not any(is_divergent(x) for x in dalang)
    if q is None or not 0.0 < q < 2.0:
        verdicts = {"dalang": dalang_ok, "h1": False, "h1_characterization": False,
                    "h2": False}
        return HypothesisReport(q, dalang, [], Divergent(), math.inf, Divergent(), [], verdicts)
    h1_vals = [h1_integral(m, q, tol) for m in members]
    if any(is_divergent(x) for x in h1_vals):
        h1_sup = next(x for x in h1_vals if is_divergent(x))
    else:
        h1_sup = max(h1_vals)
    balls, tails = [], []
    for m in members:
        b, t = h1_characterization(m, q, tol=tol)
        balls.append(b)
        tails.append(t)
    ball = max(balls)
    tail_sup = next((t for t in tails if is_divergent(t)), None)
    if tail_sup is None:
        tail_sup = max(tails)
    h2 = []
    if with_h2 and dalang_ok:
        h2 = [h2_distance(m, family.limit, dictionary, tol) for m in family.members]
    h1_ok = not is_divergent(h1_sup)
    char_ok = math.isfinite(ball) and not is_divergent(tail_sup)
    h2_ok = bool(h2) and all(b <= a + 2 * tol for a, b in zip(h2, h2[1:]))
    verdicts = {"dalang": dalang_ok, "h1": h1_ok, "h1_characterization": char_ok,
                "h2": h2_ok}
    return HypothesisReport(q, dalang, h1_vals, h1_sup, ball, tail_sup, h2, verdicts)
