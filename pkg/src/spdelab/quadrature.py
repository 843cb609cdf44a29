"""Adaptive one-dimensional quadrature used by the spectral integrals.

The workhorse is a vectorized adaptive Gauss-Kronrod (10/21) rule.  A panel
touching a power-law endpoint singularity is handled by Gauss-Jacobi rules
with the matching weight, and infinite non-oscillatory tails are mapped to a
finite interval with u = 1/r.  Oscillatory tails are split into cos/sin terms
and handed to QUADPACK's Fourier-integral routine (QAWF) through scipy.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi

from .errors import BudgetExceeded

# Kronrod 21-point nodes (positive half, descending) and weights, with the
# embedded 10-point Gauss weights at the odd positions.
_XGK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0])
_WGK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208980297451, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821])
_WG = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338])

_NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[:-1][::-1]])
_WK = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[:-1][::-1]])
_WG21 = np.zeros(21)
_WG21[[1, 3, 5, 7, 9]] = _WG
_WG21[[19, 17, 15, 13, 11]] = _WG

_EPS = np.finfo(float).eps


@lru_cache(maxsize=64)
def gauss_jacobi01(n, s):
    """Nodes and weights on [0, 1] for the weight r**s (s > -1)."""
    x, w = roots_jacobi(n, 0.0, s)
    return (1.0 + x) / 2.0, w / 2.0 ** (1.0 + s)


def _kronrod(f, lo, hi):
    """Evaluate the 21-point rule on every panel at once."""
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    x = c[:, None] + h[:, None] * _NODES[None, :]
    fx = np.asarray(f(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    resk = fx @ _WK * h
    resg = fx @ _WG21 * h
    # QUADPACK error heuristic
    mean = resk / np.where(h != 0, 2 * h, 1.0)
    resasc = np.abs(fx - mean[:, None]) @ _WK * np.abs(h)
    resabs = np.abs(fx) @ _WK * np.abs(h)
    err = np.abs(resk - resg)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc > 0) & np.isfinite(scaled), scaled, err)
    err = np.maximum(err, 50 * _EPS * resabs)
    if not np.all(np.isfinite(resk)):
        err = np.where(np.isfinite(resk), err, np.inf)
    return resk, err


def _jacobi_panel(g, a, h, s, n=16):
    """Integral of g(r) (r - a)**s over [a, a + h] with an error estimate."""
    vals = []
    for m in (n, 2 * n):
        x, w = gauss_jacobi01(m, float(s))
        gx = np.asarray(g(a + h * x), dtype=float)
        vals.append(h ** (1.0 + s) * float(np.dot(w, gx)))
    return vals[1], abs(vals[1] - vals[0]) + 50 * _EPS * abs(vals[1])


@dataclass
class QuadResult:
    value: float
    error: float
    panels: int


def adaptive(g, a, b, power=0.0, tol=1e-10, rel=0.0, breakpoints=None,
             max_panels=400000):
    """Integral of g(r) (r - a)**power over [a, b].

    g must accept an ndarray and be smooth on (a, b]; the power-law factor at
    the left end is integrated exactly by a Gauss-Jacobi panel.  Raises
    BudgetExceeded when more than `max_panels` panels would be needed.
    """
    a = float(a)
    b = float(b)
    if b <= a:
        return QuadResult(0.0, 0.0, 0)
    power = float(power)
    if power <= -1.0:
        raise ValueError("power must exceed -1")
    singular = power != 0.0

    if singular:
        def f(r):
            return g(r) * (r - a) ** power
    else:
        f = g

    if breakpoints is None:
        edges = np.linspace(a, b, 9)
    else:
        inner = np.asarray(breakpoints, dtype=float)
        inner = inner[(inner > a) & (inner < b)]
        edges = np.unique(np.concatenate([[a, b], inner]))

    # the singular panel lives apart from the regular ones
    sing_lo, sing_hi = a, edges[1]
    lo, hi = edges[:-1], edges[1:]
    if singular:
        lo, hi = lo[1:], hi[1:]
        sval, serr = _jacobi_panel(g, a, sing_hi - a, power)
    else:
        sval, serr = 0.0, 0.0
    if lo.size:
        val, err = _kronrod(f, lo, hi)
    else:
        val, err = np.zeros(0), np.zeros(0)

    while True:
        total = sval + val.sum()
        total_err = serr + err.sum()
        goal = max(tol, rel * abs(total))
        if total_err <= goal:
            return QuadResult(float(total), float(total_err), lo.size + int(singular))
        if not np.isfinite(total_err):
            raise BudgetExceeded("non-finite integrand encountered", total, total_err)
        n = lo.size + int(singular)
        if n > max_panels:
            raise BudgetExceeded(
                f"adaptive quadrature exceeded {max_panels} panels "
                f"(error {total_err:.3g} > {goal:.3g})", float(total), float(total_err))
        share = goal / (2.0 * n)
        width_floor = 64 * _EPS * max(abs(a), abs(b), 1.0)
        split = (err > share) & ((hi - lo) > width_floor)
        refined = False
        if singular and serr > share and (sing_hi - sing_lo) > width_floor:
            mid = sing_lo + 0.5 * (sing_hi - sing_lo)
            new_lo, new_hi = np.array([mid]), np.array([sing_hi])
            nv, ne = _kronrod(f, new_lo, new_hi)
            lo = np.concatenate([lo, new_lo])
            hi = np.concatenate([hi, new_hi])
            val = np.concatenate([val, nv])
            err = np.concatenate([err, ne])
            split = np.concatenate([split, [False]])
            sing_hi = mid
            sval, serr = _jacobi_panel(g, a, sing_hi - a, power)
            refined = True
        if not split.any():
            if refined:
                continue
            # nothing left that can be refined; roundoff limited
            return QuadResult(float(sval + val.sum()), float(serr + err.sum()),
                              lo.size + int(singular))
        keep = ~split
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne = _kronrod(f, new_lo, new_hi)
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])


def power_tail(G, start, decay, tol=1e-10, max_panels=400000):
    """Integral of G over [start, inf) where G(r) ~ r**(-decay), decay > 1.

    Uses u = 1/r so the tail becomes a finite integral with a u**(decay - 2)
    endpoint factor, which the Gauss-Jacobi panel absorbs.
    """
    if decay <= 1.0:
        raise ValueError("tail does not converge for decay <= 1")
    e = float(decay)

    def smooth(u):
        r = 1.0 / u
        return G(r) * r ** e

    return adaptive(smooth, 0.0, 1.0 / start, power=e - 2.0, tol=tol,
                    max_panels=max_panels)


# --- trig-term algebra for oscillatory tails ---------------------------------

@dataclass
class TrigTerm:
    """amp(r) * w(freq * r) with w in {1, cos, sin}; amp(r) ~ r**(-decay)."""

    amp: object
    kind: str
    freq: float
    decay: float

    def __call__(self, r):
        a = self.amp(r)
        if self.kind == "one":
            return a
        if self.kind == "cos":
            return a * np.cos(self.freq * r)
        return a * np.sin(self.freq * r)


def _normalize(amp, kind, freq, decay):
    if kind != "one" and freq < 0:
        freq = -freq
        if kind == "sin":
            amp = _scaled(amp, -1.0)
    if kind != "one" and freq == 0.0:
        if kind == "sin":
            return None
        kind = "one"
    return TrigTerm(amp, kind, float(freq), float(decay))


def _scaled(amp, c):
    return lambda r: c * amp(r)


def _prod(f, g, c=1.0):
    return lambda r: c * f(r) * g(r)


def multiply_terms(t1, t2):
    """Product of two trig terms, expanded into a list of trig terms."""
    amp = _prod(t1.amp, t2.amp)
    half = _prod(t1.amp, t2.amp, 0.5)
    decay = t1.decay + t2.decay
    a, b = t1.freq, t2.freq
    k1, k2 = t1.kind, t2.kind
    if k1 == "one":
        out = [(amp, k2, b)]
    elif k2 == "one":
        out = [(amp, k1, a)]
    elif k1 == "cos" and k2 == "cos":
        out = [(half, "cos", a - b), (half, "cos", a + b)]
    elif k1 == "sin" and k2 == "sin":
        out = [(half, "cos", a - b), (_prod(t1.amp, t2.amp, -0.5), "cos", a + b)]
    elif k1 == "sin" and k2 == "cos":
        out = [(half, "sin", a + b), (half, "sin", a - b)]
    else:
        out = [(half, "sin", a + b), (_prod(t1.amp, t2.amp, -0.5), "sin", a - b)]
    res = []
    for amp_i, kind, freq in out:
        t = _normalize(amp_i, kind, freq, decay)
        if t is not None:
            res.append(t)
    return res


def expand(factors):
    """Expand a product of sums of trig terms (a list of lists) into one list."""
    terms = factors[0]
    for fac in factors[1:]:
        terms = [p for t in terms for s in fac for p in multiply_terms(t, s)]
    return combine(terms)


def combine(terms):
    """Merge terms that share kind and frequency so they are integrated once."""
    groups = {}
    for t in terms:
        key = (t.kind, round(t.freq, 12))
        groups.setdefault(key, []).append(t)
    out = []
    for (kind, _), ts in groups.items():
        amps = [t.amp for t in ts]
        decay = min(t.decay for t in ts)

        def amp(r, amps=amps):
            total = amps[0](r)
            for a in amps[1:]:
                total = total + a(r)
            return total

        out.append(TrigTerm(amp, kind, ts[0].freq, decay))
    return out


def oscillatory_tail(term, start, tol):
    """Integral of one trig term over [start, inf)."""
    if term.kind == "one":
        return power_tail(term.amp, start, term.decay, tol=tol).value
    if term.decay <= 0:
        raise BudgetExceeded("oscillatory tail amplitude does not decay")

    def f(r):
        return float(term.amp(np.asarray(r, dtype=float)))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, start, np.inf, weight=term.kind, wvar=term.freq,
                             epsabs=tol, limlst=200, limit=200, full_output=1)
    value, err = out[0], out[1]
    if not np.isfinite(value) or err > 10 * tol:
        raise BudgetExceeded(
            f"Fourier tail integral did not reach tolerance ({err:.3g} > {tol:.3g})",
            value, err)
    return value


def radial_oscillatory(core, power, terms, split, tol, max_freq=0.0):
    """Integral over [0, inf) of an integrand known in two forms.

    On [0, split] the integrand is core(r) * r**power (core smooth); beyond
    `split` it equals the sum of `terms`.  The split point is pushed out so
    that every oscillatory tail starts a few periods in, where its amplitude
    is nearly constant over one cycle.
    """
    freqs = [t.freq for t in terms if t.kind != "one" and t.freq > 0]
    if freqs:
        split = max(split, min(8 * math.pi / min(freqs), 1e6))
    n_tail = max(len(terms), 1)
    fmax = max([max_freq] + freqs)
    lin = np.zeros(0)
    if fmax > 0:
        n_lin = int(min(split * fmax / math.pi, 200000))
        lin = np.linspace(0.0, split, n_lin + 2)[1:-1]
    geo = np.geomspace(min(1e-3, split / 16), split, 48)[:-1]
    bp = np.union1d(lin, geo)
    head = adaptive(core, 0.0, split, power=power, tol=tol / 2, breakpoints=bp)
    tail = sum(oscillatory_tail(t, split, tol / (2 * n_tail)) for t in terms)
    return head.value + tail


def gauss_legendre(n, a=0.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w
