"""Pathwise solver for the quasi-linear equation u = I0 + v + K[b(u)].

Given one noise path v, the solution is the fixed point z of
z = eta + K[b(z)] with eta = I0 + v, where K is the space-time convolution
with the heat or wave kernel.  On the grid, K uses the kernel weight tables
in space and the trapezoidal rule in time (both endpoints included; the heat
lag-0 table is the identity, the wave one is zero), and the fixed point is
found by Picard iteration started at z_0 = eta.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConeViolation, InvalidInitialData, NoConvergence, UnsupportedKernel
from .fieldio import Field
from .kernels import KernelSpec, check_initial_data, initial_term, kernel_weights
from .noise import build_lattice, sample_linear_field

HEAT_PADDING = 6.0   # heat grids are padded by this many sqrt(T)
HEAT_CUT = 8.0       # heat weight tables keep this many standard deviations


# --- drifts --------------------------------------------------------------------------

@dataclass
class DriftSpec:
    """Scalar drift b with Lipschitz constant and optional sup bound."""

    b: object
    lipschitz_constant: float
    bound: float = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    zero: bool = False

    def __call__(self, u):
        return self.b(u)

    def spot_check(self, n=2000, scale=10.0, seed=0):
        """Problems found on random pairs (empty when the tags look right)."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-scale, scale, n)
        y = x + rng.normal(0.0, 1.0, n) * rng.choice([1e-3, 1e-1, 1.0, scale], n)
        bx, by = self.b(x), self.b(y)
        problems = []
        slack = 1e-12 * (1.0 + np.abs(bx) + np.abs(by))
        if np.any(np.abs(bx - by) > self.lipschitz_constant * np.abs(x - y) * (1 + 1e-9) + slack):
            problems.append(f"drift {self.name!r} exceeds its Lipschitz constant "
                            f"{self.lipschitz_constant}")
        if self.bound is not None and np.any(np.abs(bx) > self.bound * (1 + 1e-12)):
            problems.append(f"drift {self.name!r} exceeds its bound {self.bound}")
        return problems

    def to_dict(self):
        out = {"name": self.name, **self.params}
        out["lipschitz_constant"] = self.lipschitz_constant
        out["bound"] = self.bound
        return out


def zero_drift():
    return DriftSpec(lambda u: np.zeros_like(np.asarray(u, dtype=float)), 0.0, 0.0,
                     "zero", {}, True)


def constant_drift(c=1.0):
    return DriftSpec(lambda u: np.full_like(np.asarray(u, dtype=float), float(c)), 0.0,
                     abs(float(c)), "constant", {"c": c}, c == 0)


def linear_drift(a=-1.0):
    return DriftSpec(lambda u: float(a) * np.asarray(u, dtype=float), abs(float(a)), None,
                     "linear", {"a": a}, a == 0)


def sine_drift(amp=0.5, freq=1.0):
    return DriftSpec(lambda u: amp * np.sin(freq * np.asarray(u, dtype=float)),
                     abs(amp * freq), abs(amp), "sine", {"amp": amp, "freq": freq}, amp == 0)


def clipped_linear_drift(a=1.0, m=1.0):
    return DriftSpec(lambda u: np.clip(a * np.asarray(u, dtype=float), -m, m), abs(a),
                     abs(m), "clipped_linear", {"a": a, "m": m}, a == 0)


BUILTIN_DRIFTS = {
    "zero": zero_drift,
    "constant": constant_drift,
    "linear": linear_drift,
    "sine": sine_drift,
    "clipped_linear": clipped_linear_drift,
}


def drift_from_dict(spec):
    spec = dict(spec)
    name = spec.pop("name", "zero")
    if name not in BUILTIN_DRIFTS:
        raise ValueError(f"unknown drift {name!r}")
    return BUILTIN_DRIFTS[name](**spec)


def truncate_drift(b, m):
    """b_m = min(b, m) where b >= 0 and max(b, -m) where b < 0."""
    if not m > 0:
        raise ValueError("truncation level must be positive")
    f = b.b

    def bm(u):
        v = f(u)
        return np.where(v >= 0, np.minimum(v, m), np.maximum(v, -m))

    bound = m if b.bound is None else min(m, b.bound)
    return DriftSpec(bm, b.lipschitz_constant, bound, f"{b.name}_truncated",
                     {**b.params, "m": m}, b.zero)


# --- grids and equations ------------------------------------------------------------

@dataclass
class SpaceTimeGrid:
    """Uniform grid on [0, T] x [-L, L]^d, padded for the kernel's reach."""

    T: float
    nt: int
    L: float
    dx: float
    d: int = 1

    def __post_init__(self):
        if self.T <= 0 or self.nt < 1 or self.L <= 0 or self.dx <= 0:
            raise ValueError("grid needs T, L, dx > 0 and nt >= 1")

    @property
    def dt(self):
        return self.T / self.nt

    @property
    def times(self):
        return np.arange(self.nt + 1) * self.dt

    def padding(self, kind):
        return self.T if kind == "wave" else HEAT_PADDING * math.sqrt(self.T)

    def axis(self, kind):
        """Padded node coordinates (symmetric, spacing dx, contains 0)."""
        m = int(math.ceil((self.L + self.padding(kind)) / self.dx - 1e-9))
        return np.arange(-m, m + 1) * self.dx

    def axes(self, kind):
        return (self.axis(kind),) * self.d

    def points(self, kind):
        grids = np.meshgrid(*self.axes(kind), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], -1)

    def to_dict(self):
        return {"T": self.T, "nt": self.nt, "L": self.L, "dx": self.dx, "d": self.d}


@dataclass
class EquationSpec:
    kernel: KernelSpec
    drift: DriftSpec
    data: object
    grid: SpaceTimeGrid

    def __post_init__(self):
        if self.grid.d != self.kernel.d:
            raise ValueError("grid and kernel dimensions differ")
        kind, d = self.kernel.kind, self.kernel.d
        if not self.drift.zero:
            if kind == "wave" and d != 1:
                raise UnsupportedKernel("the nonlinear wave equation is solved in d=1 only")
            if kind == "heat" and d not in (1, 2):
                raise UnsupportedKernel("the nonlinear heat equation is solved in d=1, 2 only")
            if kind == "heat" and self.drift.bound is None and self.data.holder_exponent is None:
                raise InvalidInitialData("heat with unbounded drift needs Holder initial data")
        check_initial_data(kind, self.data, d)

    @property
    def kind(self):
        return self.kernel.kind

    @property
    def T(self):
        return self.grid.T

    @property
    def continuum_caveat(self):
        """Heat with unbounded drift: the continuum fixed-point equation may be
        ill-posed even though the discrete one is not."""
        return self.kind == "heat" and not self.drift.zero and self.drift.bound is None


# --- the discrete convolution K -------------------------------------------------------

class SpaceTimeConvolution:
    """K[f](t_n) = dt sum_l c_{n,l} W_{t_n - t_l} * f(t_l), trapezoid weights c.

    The spatial convolutions run by FFT on the grid extended by its edge
    values.  Arrays have shape (..., nt + 1, *spatial).
    """

    def __init__(self, kind, grid, n_axis, workers=None):
        self.kind, self.d = kind, grid.d
        self.nt, self.dt = grid.nt, grid.dt
        self.n = n_axis
        self.workers = workers
        tables = []
        for l in range(self.nt + 1):
            t = l * self.dt
            if kind == "heat":
                kw = kernel_weights("heat", t, grid.dx, self.d, cut=HEAT_CUT)
            else:
                if self.d != 1:
                    raise UnsupportedKernel("the wave convolution is available in d=1 only")
                kw = kernel_weights("wave", t, grid.dx, 1)
            tables.append(kw.as_stencil())
        self.masses = np.array([np.sum(s) for s in tables])
        self.P = max(s.shape[0] for s in tables) // 2
        self.nfft = sfft.next_fast_len(self.n + 4 * self.P, real=True)
        axes = tuple(range(-self.d, 0))
        self.axes = axes
        full = np.zeros((self.nt + 1,) + (self.nfft,) * self.d)
        for l, s in enumerate(tables):
            h = s.shape[0] // 2
            # place the centred table so that the output offset is common to all lags
            shifted = np.zeros((2 * self.P + 1,) * self.d)
            inner = tuple(slice(self.P - h, self.P + h + 1) for _ in range(self.d))
            shifted[inner] = s
            full[(l,) + tuple(slice(0, 2 * self.P + 1) for _ in range(self.d))] = shifted
        self.W = sfft.rfftn(full, axes=axes, workers=workers)

    def kappa(self):
        """Largest discrete kernel mass relative to the continuum mass."""
        if self.kind == "heat":
            return float(np.max(self.masses))
        lags = np.arange(1, self.nt + 1) * self.dt
        return float(np.max(self.masses[1:] / lags))

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        pad = [(0, 0)] * (f.ndim - self.d) + [(self.P, self.P)] * self.d
        ext = np.pad(f, pad, mode="edge")
        F = sfft.rfftn(ext, s=(self.nfft,) * self.d, axes=self.axes, workers=self.workers)
        out = np.zeros(F.shape, dtype=complex)
        T = self.nt + 1
        tax = f.ndim - self.d - 1
        for l in range(T):
            src = [slice(None)] * F.ndim
            dst = [slice(None)] * F.ndim
            src[tax] = slice(0, T - l)
            dst[tax] = slice(l, T)
            out[tuple(dst)] += self.W[l] * F[tuple(src)]
        # trapezoid end corrections: half weight at s = 0 and s = t
        first = [slice(None)] * F.ndim
        first[tax] = slice(0, 1)
        out -= 0.5 * self.W * F[tuple(first)]
        out -= 0.5 * self.W[0] * F
        res = sfft.irfftn(out, s=(self.nfft,) * self.d, axes=self.axes, workers=self.workers)
        keep = [slice(None)] * res.ndim
        for k in range(self.d):
            keep[res.ndim - self.d + k] = slice(2 * self.P, 2 * self.P + self.n)
        res = self.dt * res[tuple(keep)]
        # the n = 0 row is an empty integral
        zero = [slice(None)] * res.ndim
        zero[tax] = 0
        res[tuple(zero)] = 0.0
        return res


# --- Gronwall envelopes ---------------------------------------------------------------

def gronwall_envelope(kind, lambda1, lambda2, f0_sup, b_bound, lipschitz, t, k):
    """Factorial-decay bound on the k-th Picard quantity.

    wave: lambda1 sum_{j<k} (lambda2 t^2)^j / j! + f0 (lambda2 t^2)^k / k!.
    heat: 2 |b|_inf C_b^(k-1) (lambda2 t)^k / k! + lambda1 sum_{j<k} t^j / j!
    when b is bounded (b_bound given, k >= 1), otherwise the f0 form
    f0 (lambda2 t)^k / k! + lambda1 sum_{j<k} t^j / j!.
    """
    if min(lambda1, lambda2, f0_sup, t) < 0 or k < 0:
        raise ValueError("envelope parameters must be non-negative")
    k = int(k)
    if kind == "wave":
        x = lambda2 * t * t
        head = sum(x ** j / math.factorial(j) for j in range(k))
        return lambda1 * head + f0_sup * x ** k / math.factorial(k)
    if kind != "heat":
        raise ValueError(f"unknown kind {kind!r}")
    head = lambda1 * sum(t ** j / math.factorial(j) for j in range(k))
    if b_bound is not None and k >= 1:
        return 2 * b_bound * lipschitz ** (k - 1) * (lambda2 * t) ** k / math.factorial(k) + head
    return f0_sup * (lambda2 * t) ** k / math.factorial(k) + head


# --- Picard iteration -------------------------------------------------------------------

def _check_cone(spec, eta):
    need = spec.grid.L + spec.grid.padding(spec.kind)
    for a in eta.axes:
        if a[0] > -need + 1e-9 or a[-1] < need - 1e-9:
            raise ConeViolation(f"eta covers [{a[0]}, {a[-1]}] but the solver needs "
                                f"[-{need}, {need}]")
    if len(eta.times) != spec.grid.nt + 1 or not np.allclose(eta.times, spec.grid.times):
        raise ValueError("eta is not on the equation's time grid")


def picard_solve(spec, eta, tol=1e-10, max_iter=200, workers=None):
    """Fixed point of z = eta + K[b(z)] on eta's grid.

    `eta.values` may have a leading sample axis; each sample iterates on its
    own and stops when two successive increments are <= tol, so the
    returned z has residual |z - eta - K[b(z)]|_inf <= tol.  Metadata:
    iterations, increments, residual, Gronwall envelope and certificate,
    and the largest |b(z_k)| seen over all iterates.
    """
    _check_cone(spec, eta)
    batched = eta.values.ndim == spec.grid.d + 2
    e = eta.samples()
    S = e.shape[0]
    meta = {"kind": spec.kind, "drift": spec.drift.to_dict(), "tol": tol,
            "continuum_caveat": spec.continuum_caveat}
    if spec.drift.zero:
        meta.update(iterations=[1] * S, increments=[[0.0]] * S, residual=[0.0] * S,
                    envelope=[[0.0]] * S, certificate=True, drift_sup=0.0)
        return Field(eta.times, eta.axes, eta.values.copy(), eta.seed, meta)

    K = SpaceTimeConvolution(spec.kind, spec.grid, len(eta.axes[0]), workers)
    Cb = spec.drift.lipschitz_constant
    lam = Cb * K.kappa()
    z = e.copy()
    active = np.arange(S)
    iters = np.zeros(S, dtype=int)
    incs = [[] for _ in range(S)]
    done = np.zeros(S, dtype=bool)
    prev_ok = np.zeros(S, dtype=bool)
    drift_sup = 0.0
    red = tuple(range(1, e.ndim))
    for it in range(1, max_iter + 1):
        bz = spec.drift(z[active])
        drift_sup = max(drift_sup, float(np.max(np.abs(bz))))
        new = e[active] + K(bz)
        inc = np.max(np.abs(new - z[active]), axis=red)
        ok = inc <= tol
        fin = ok & prev_ok[active]
        for j, s in enumerate(active):
            incs[s].append(float(inc[j]))
            if not fin[j]:
                z[s] = new[j]
                iters[s] = it
        done[active[fin]] = True
        prev_ok[active] = ok
        active = active[~fin]
        if active.size == 0:
            break
    if active.size:
        last = max(incs[s][-1] for s in active)
        raise NoConvergence(f"Picard iteration did not reach {tol} in {max_iter} iterations",
                            max_iter, last, incs[active[0]])

    envelopes, cert = [], True
    floor = 64 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(z))))
    for s in range(S):
        f0 = incs[s][0]
        env = [gronwall_envelope(spec.kind, 0.0, lam, f0, None, Cb, spec.T, k)
               for k in range(len(incs[s]))]
        envelopes.append(env)
        cert &= all(i <= 1.1 * v + floor for i, v in zip(incs[s], env))
    meta.update(iterations=iters.tolist(), increments=incs,
                residual=[incs[s][-1] for s in range(S)], envelope=envelopes,
                certificate=bool(cert), drift_sup=drift_sup, kappa=K.kappa(),
                envelope_rate=lam)
    values = z if batched else z[0]
    return Field(eta.times, eta.axes, values, eta.seed, meta)


# --- full solve -------------------------------------------------------------------------

def lattice_for(spec, measure, eps=1e-3, **kw):
    """Mode lattice sized for the padded grid of `spec`."""
    return build_lattice(measure, spec.grid.L + spec.grid.padding(spec.kind), eps, **kw)


def initial_field(spec):
    """I0 on the padded grid, shape (nt + 1, *spatial)."""
    g = spec.grid
    pts = g.points(spec.kind)
    shape = (g.nt + 1,) + tuple(len(a) for a in g.axes(spec.kind))
    out = np.empty(shape)
    for n, t in enumerate(g.times):
        out[n] = np.reshape(initial_term(spec.kind, spec.data, t, pts, g.d), shape[1:])
    return out


def noise_field(spec, lattice, seed, n_samples=1, first_sample=0, zero_noise=False):
    g = spec.grid
    shape = (n_samples, g.nt + 1) + tuple(len(a) for a in g.axes(spec.kind))
    v = sample_linear_field(spec.kind, lattice, g.times, g.points(spec.kind), n_samples,
                            seed, first_sample=first_sample, zero_noise=zero_noise)
    return v.reshape(shape)


def solve_spde(spec, lattice, seed, n_samples=1, first_sample=0, zero_noise=False,
               tol=1e-10, max_iter=200, batch=64, report_only=True, workers=None):
    """Samples of u = F(I0 + v) for noise samples first_sample, ...

    Returns a Field with a leading sample axis, restricted to [-L, L]^d
    unless report_only is False.
    """
    g = spec.grid
    i0 = initial_field(spec)
    axes = g.axes(spec.kind)
    outs, metas = [], []
    for start in range(0, n_samples, batch):
        m = min(batch, n_samples - start)
        v = noise_field(spec, lattice, seed, m, first_sample + start, zero_noise)
        eta = Field(g.times, axes, i0 + v, seed)
        z = picard_solve(spec, eta, tol, max_iter, workers)
        outs.append(z.values)
        metas.append(z.meta)
    meta = dict(metas[0])
    for key in ("iterations", "increments", "residual", "envelope"):
        meta[key] = [x for mm in metas for x in mm[key]]
    meta["certificate"] = all(mm["certificate"] for mm in metas)
    meta["drift_sup"] = max(mm["drift_sup"] for mm in metas)
    meta.update(first_sample=first_sample, n_samples=n_samples, grid=g.to_dict())
    out = Field(g.times, axes, np.concatenate(outs), seed, meta)
    return out.restrict(g.L) if report_only else out
