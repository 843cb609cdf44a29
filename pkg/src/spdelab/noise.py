"""Spectral mode lattice and exact-in-law simulation of the linear field.

The spectral measure is discretized on a cell-centred lattice; each cell
carries a pair of independent real modes (cos and sin channels) whose time
evolution is the exact transition of the equation in Fourier space:

* heat: Ornstein-Uhlenbeck with rate |xi|^2 / 2,
* wave: the driven oscillator (position, velocity) with frequency |xi|.

Only one representative of every +-xi pair is stored; the cell containing
the origin is unpaired and carries a single channel.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from .errors import CannotCapture
from .errors import is_divergent
from .measures import dalang_integral


@dataclass
class ModeLattice:
    """Half-space cell centres, their spectral masses and metadata.

    `centers[k]` is the centre of cell k and `weights[k]` its mu-mass; row 0
    is the origin cell when `has_origin` is set.
    """

    centers: np.ndarray
    weights: np.ndarray
    spacing: float
    cutoff: float
    captured_fraction: float
    dalang: float
    has_origin: bool = True
    measure: object = None
    L: float = None

    @property
    def n_modes(self):
        return self.centers.shape[0]

    @property
    def dimension(self):
        return self.centers.shape[1]

    @property
    def radii(self):
        return np.sqrt(np.sum(self.centers ** 2, axis=1))

    @property
    def paired(self):
        p = np.ones(self.n_modes, dtype=bool)
        if self.has_origin:
            p[0] = False
        return p

    def amplitudes(self):
        """sqrt(2 w) for paired cells, sqrt(w) for the origin cell."""
        return np.sqrt(np.where(self.paired, 2.0, 1.0) * self.weights)

    def covariance(self, kind, pairs):
        """Exact covariance of the lattice field at ((t, x), (t', x')) pairs."""
        from .kernels import time_factor
        r = self.radii
        out = []
        for (t, x), (tp, xp) in pairs:
            h = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float))
            c = np.cos(self.centers @ h)
            full = np.where(self.paired, 2.0, 1.0) * self.weights
            out.append(float(np.sum(full * c * time_factor(kind, t, tp, r))))
        return np.array(out)


def lattice_spacing(L, gamma=2.0):
    """Spacing pi / (2 L gamma): the lattice field has period 4 L gamma."""
    return math.pi / (2.0 * L * gamma)


def _ball_dalang(measure, R):
    return quad.adaptive(lambda r: measure._radial_smooth(r) / (1.0 + r * r), 0.0, R,
                         power=measure.origin_power, tol=1e-13, rel=1e-13).value


def dalang_tail(measure, R, total=None):
    """int_{|xi| > R} mu(dxi) / (1 + |xi|^2)."""
    if total is None:
        total = dalang_integral(measure)
    return max(total - _ball_dalang(measure, R), 0.0)


def capture_radius(measure, eps, total=None, r_max=1e8):
    """Smallest R (to 1%) whose outside carries at most eps of the Dalang mass."""
    if total is None:
        total = dalang_integral(measure)
    if is_divergent(total):
        raise CannotCapture(f"{measure!r} is not Dalang-integrable; no finite lattice "
                            "captures its mass")
    goal = eps * total
    hi = 1.0
    while dalang_tail(measure, hi, total) > goal:
        hi *= 2.0
        if hi > r_max:
            raise CannotCapture(f"capture radius exceeds {r_max:g}")
    lo = hi / 2.0
    while hi - lo > 0.01 * hi:
        mid = 0.5 * (lo + hi)
        if dalang_tail(measure, mid, total) > goal:
            lo = mid
        else:
            hi = mid
    return hi


def _half_space_indices(d, n, radius_cells):
    rng = np.arange(-n, n + 1)
    grids = np.meshgrid(*[rng] * d, indexing="ij")
    k = np.stack([g.reshape(-1) for g in grids], -1)
    keep = np.sum(k.astype(float) ** 2, axis=1) <= radius_cells ** 2
    k = k[keep]
    # first nonzero coordinate positive
    pos = np.zeros(k.shape[0], dtype=bool)
    undecided = np.ones(k.shape[0], dtype=bool)
    for j in range(d):
        pos |= undecided & (k[:, j] > 0)
        undecided &= k[:, j] == 0
    return k[pos]


def build_lattice(measure, L, eps=1e-3, gamma=2.0, cutoff=None, spacing=None,
                  max_modes=2_000_000):
    """Lattice for `measure` on the spatial window [-L, L]^d.

    The cutoff Xi is grown until the cells inside |xi| <= Xi carry at least
    1 - eps of int mu / (1 + |xi|^2); the reported captured fraction is a
    lower bound (the ball of radius Xi - sqrt(d) spacing / 2 lies inside the
    union of the cells).
    """
    d = measure.dimension
    total = dalang_integral(measure)
    if is_divergent(total):
        raise CannotCapture(f"{measure!r} is not Dalang-integrable; no finite lattice "
                            "captures its mass")
    dxi = lattice_spacing(L, gamma) if spacing is None else float(spacing)
    inner = math.sqrt(d) * dxi / 2.0
    if cutoff is None:
        cutoff = capture_radius(measure, eps, total) + inner
    cutoff = float(cutoff)
    n = int(math.floor(cutoff / dxi))
    est = (2 * n + 1) ** d / 2 if d == 1 else math.pi ** (d / 2) / math.gamma(d / 2 + 1) * (n + 1) ** d / 2
    if est > max_modes:
        raise CannotCapture(f"lattice needs about {est:.3g} modes (> {max_modes}); "
                            "increase eps or shrink the window")
    k = _half_space_indices(d, n, cutoff / dxi)
    centers = np.vstack([np.zeros((1, d)), k * dxi])
    lo = centers - dxi / 2
    hi = centers + dxi / 2
    weights = measure.cell_masses(lo, hi)
    frac = 1.0 - dalang_tail(measure, max(cutoff - inner, 0.0), total) / total
    return ModeLattice(centers, np.asarray(weights, dtype=float), dxi, cutoff, frac,
                       float(total), True, measure, L)


# --- exact transitions ------------------------------------------------------------

def heat_transition(r, dt):
    """(decay, noise standard deviation) of the OU mode with rate r^2 / 2."""
    r = np.asarray(r, dtype=float)
    lam = r * r / 2.0
    decay = np.exp(-lam * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = -np.expm1(-2.0 * lam * dt) / (2.0 * lam)
    var = np.where(lam == 0, dt, var)
    return decay, np.sqrt(var)


def _x_minus_sin_ratio(x):
    """6 (x - sin x) / x^3, without cancellation for small x (1 at x = 0)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.ones_like(x)
    small = np.abs(x) < 0.5
    big = ~small
    xb = x[big]
    out[big] = 6.0 * (xb - np.sin(xb)) / xb ** 3
    if np.any(small):
        xs = x[small]
        term = np.ones_like(xs)
        acc = term.copy()
        for k in range(1, 10):
            term = -term * xs * xs / ((2 * k + 2) * (2 * k + 3))
            acc = acc + term
        out[small] = acc
    return out


def wave_noise_covariance(w, dt):
    """Covariance (var_a, var_c, cov_ac) of the oscillator noise over dt.

    a is driven by int_0^dt sin(w u)/w dB, c by int_0^dt cos(w u) dB:
    var_a = dt/(2w^2) - sin(2w dt)/(4w^3), var_c = dt/2 + sin(2w dt)/(4w),
    cov = sin^2(w dt)/(2w^2).  Written so that w -> 0 is exact.
    """
    w = np.abs(np.asarray(w, dtype=float))
    shape = w.shape
    w = np.atleast_1d(w)
    x = 2.0 * w * dt
    var_a = dt ** 3 / 3.0 * _x_minus_sin_ratio(x)
    var_c = dt / 2.0 + dt / 2.0 * np.sinc(x / math.pi)
    cov = dt * dt / 2.0 * np.sinc(w * dt / math.pi) ** 2
    return var_a.reshape(shape), var_c.reshape(shape), cov.reshape(shape)


def wave_transition(w, dt):
    """Rotation entries and noise Cholesky factor for one wave step.

    Returns (c, s_over_w, w_s, l11, l21, l22) with
    a' = c a + s_over_w v + l11 z1,  v' = -w_s a + c v + l21 z1 + l22 z2.
    """
    w = np.abs(np.asarray(w, dtype=float))
    c = np.cos(w * dt)
    s_over_w = dt * np.sinc(w * dt / math.pi)
    w_s = w * np.sin(w * dt)
    va, vc, cov = wave_noise_covariance(w, dt)
    l11 = np.sqrt(va)
    with np.errstate(invalid="ignore", divide="ignore"):
        l21 = np.where(l11 > 0, cov / l11, 0.0)
    l22 = np.sqrt(np.clip(vc - l21 ** 2, 0.0, None))
    return c, s_over_w, w_s, l11, l21, l22


def transition_covariance(kind, r, times):
    """E[a(t_i) a(t_j)] of one mode started at zero, propagated through the
    exact transitions at the given times (no sampling)."""
    times = np.asarray(times, dtype=float)
    n = times.size
    out = np.zeros((n, n))
    prev = 0.0
    if kind == "heat":
        var = 0.0
        vars_ = []
        for t in times:
            decay, sd = heat_transition(r, t - prev)
            var = float(decay ** 2 * var + sd ** 2)
            vars_.append(var)
            prev = t
        for i in range(n):
            for j in range(i, n):
                decay, _ = heat_transition(r, times[j] - times[i])
                out[i, j] = out[j, i] = float(decay) * vars_[i]
        return out
    P = np.zeros((2, 2))
    Ps = []
    for t in times:
        c, sw, ws, l11, l21, l22 = (float(x) for x in wave_transition(r, t - prev))
        R = np.array([[c, sw], [-ws, c]])
        Lc = np.array([[l11, 0.0], [l21, l22]])
        P = R @ P @ R.T + Lc @ Lc.T
        Ps.append(P)
        prev = t
    for i in range(n):
        for j in range(i, n):
            c, sw, ws = (float(x) for x in wave_transition(r, times[j] - times[i])[:3])
            R = np.array([[c, sw], [-ws, c]])
            out[i, j] = out[j, i] = (R @ Ps[i])[0, 0]
    return out


# --- counter-based normals ------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def normal_block(seed, sample, step, shape, zero=False):
    """Standard normals for one (sample, step): Philox keyed by (seed, sample)
    with the step in the counter, drawn in C order of `shape`.

    The same (seed, sample, step) always yields the same numbers, whatever
    batch or thread produced them.
    """
    if zero:
        return np.zeros(shape)
    bg = np.random.Philox(key=np.array([int(seed) & _MASK64, int(sample) & _MASK64],
                                       dtype=np.uint64),
                          counter=np.array([0, int(step), 0, 0], dtype=np.uint64))
    return np.random.Generator(bg).standard_normal(shape)


@dataclass
class ModeState:
    """Mode amplitudes for a batch: `a` has shape (batch, K, 2) (channels
    cos/sin); for the wave equation `v` holds the velocities."""

    a: np.ndarray
    v: np.ndarray = None
    time: float = 0.0


def zero_state(kind, lattice, batch=1):
    a = np.zeros((batch, lattice.n_modes, 2))
    return ModeState(a, np.zeros_like(a) if kind == "wave" else None, 0.0)


def step_modes(kind, lattice, state, dt, normals):
    """Advance every mode by dt using the given normals.

    normals: heat (batch, K, 2); wave (batch, K, 2, 2) ordered (mode,
    channel, component).
    """
    r = lattice.radii
    if kind == "heat":
        decay, sd = heat_transition(r, dt)
        a = decay[None, :, None] * state.a + sd[None, :, None] * normals
        return ModeState(a, None, state.time + dt)
    c, sw, ws, l11, l21, l22 = (x[None, :, None] for x in wave_transition(r, dt))
    z1 = normals[..., 0]
    z2 = normals[..., 1]
    a = c * state.a + sw * state.v + l11 * z1
    v = -ws * state.a + c * state.v + l21 * z1 + l22 * z2
    return ModeState(a, v, state.time + dt)


def step_heat(lattice, state, dt, normals):
    return step_modes("heat", lattice, state, dt, normals)


def step_wave(lattice, state, dt, normals):
    return step_modes("wave", lattice, state, dt, normals)


def simulate_modes(kind, lattice, times, seed, samples, zero_noise=False):
    """Mode amplitudes at `times` for the given sample indices.

    Returns an array (len(samples), len(times), K, 2) of positions.  Step j
    (from times[j-1], or 0, to times[j]) draws its normals from counter j.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and sorted")
    samples = np.atleast_1d(samples)
    K = lattice.n_modes
    state = zero_state(kind, lattice, samples.size)
    out = np.empty((samples.size, times.size, K, 2))
    shape = (K, 2) if kind == "heat" else (K, 2, 2)
    prev = 0.0
    for j, t in enumerate(times):
        dt = t - prev
        if dt > 0:
            z = np.empty((samples.size,) + shape)
            for i, s in enumerate(samples):
                z[i] = normal_block(seed, s, j, shape, zero_noise)
            if lattice.has_origin:
                # the origin cell has no sin channel
                z[:, 0, 1] = 0.0
            state = step_modes(kind, lattice, state, dt, z)
        out[:, j] = state.a
        prev = t
    return out


def mode_features(lattice, points):
    """cos and sin feature matrices (P, K) scaled by the mode amplitudes."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    phase = pts @ lattice.centers.T
    amp = lattice.amplitudes()
    return np.cos(phase) * amp, np.sin(phase) * amp


def synthesize(lattice, modes, points):
    """Field values sum_k sqrt(2 w_k) [cos(<x, xi_k>) A_k + sin(<x, xi_k>) B_k].

    modes: (..., K, 2); points: (P, d) or (P,).  Returns (..., P).
    """
    C, S = mode_features(lattice, points)
    return modes[..., 0] @ C.T + modes[..., 1] @ S.T


def sample_linear_field(kind, lattice, times, points, n_samples, seed, batch=256,
                        first_sample=0, zero_noise=False, max_entries=2 ** 24):
    """Samples of the linear field at every (time, point): (n, T, P)."""
    times = np.asarray(times, dtype=float)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    P, K = pts.shape[0], lattice.n_modes
    chunk = max(1, max_entries // max(K, 1))
    # keep the (batch, times, K, 2) mode array within max_entries; per-sample
    # keys make the output independent of the batch size
    batch = max(1, min(batch, max_entries // max(2 * K * times.size, 1)))
    starts = range(0, P, chunk)
    # features are reused across batches when they fit in memory
    cached = [mode_features(lattice, pts[p0:p0 + chunk]) for p0 in starts] \
        if 2 * K * P <= max_entries else None
    out = np.empty((n_samples, times.size, P))
    for start in range(0, n_samples, batch):
        ids = np.arange(first_sample + start, first_sample + min(start + batch, n_samples))
        modes = simulate_modes(kind, lattice, times, seed, ids, zero_noise)
        for i, p0 in enumerate(starts):
            C, S = cached[i] if cached else mode_features(lattice, pts[p0:p0 + chunk])
            out[start:start + ids.size, :, p0:p0 + chunk] = modes[..., 0] @ C.T + modes[..., 1] @ S.T
    return out
