"""Discrete line-integral transforms and their exact-transpose adjoints.

Image convention: square window, samples at pixel centers, ``data[iy, ix]``
with y increasing with the row index (files are written top row = largest
y).  Sinogram convention: rows are angles ``alpha_m = 2 pi m / n_alpha``
(periodic), columns are offsets ``s_k = -s_max + (k + 1/2) ds``; the sample
at (s, alpha) integrates the bilinear interpolant of the image along the
directed line {x . w(alpha) = s} with step ``h`` and trapezoid weights.

Adjoints scatter through the identical stencils, scaled by
``ds * dalpha / dx^2``, so the weighted pairing
``<A f, g> ds dalpha = <f, A* g> dx^2`` holds to rounding error.

The broken-ray transform on a reflecting boundary is
``B f (s, a) = R f (s, a) + R f (chi(s, a))`` with the reflected-leg value
interpolated bilinearly (periodically in alpha) from the dense Radon
sinogram; rays outside the tomography family or too close to grazing are
masked with NaN and excluded from inner products.  The two-offset parallel
transform is ``P f (s, a) = R f (s, a) + R f (s + d, a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SupportViolation
from .geometry import (
    GRAZING_COS,
    TWO_PI,
    Boundary,
    Circle,
    LineCoords,
    direction,
    normal,
    reflect,
)

LAMBDA_SCALE = 1.0 / (4.0 * math.pi)


@dataclass
class GridImage:
    """Square pixel grid over a physical window, y increasing upward."""

    data: np.ndarray
    x_min: float = -1.0
    x_max: float = 1.0
    y_min: float = -1.0
    y_max: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ValueError("image data must be square")
        if not math.isclose(self.x_max - self.x_min, self.y_max - self.y_min):
            raise ValueError("window must be square")

    @classmethod
    def zeros(cls, n: int, half_width: float = 1.0) -> "GridImage":
        return cls(np.zeros((n, n)), -half_width, half_width, -half_width, half_width)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x_centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n) + 0.5) * self.dx

    @property
    def y_centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.n) + 0.5) * self.dx

    def meshgrid(self):
        return np.meshgrid(self.x_centers, self.y_centers)

    def copy_with(self, data: np.ndarray) -> "GridImage":
        return GridImage(data, self.x_min, self.x_max, self.y_min, self.y_max)

    def layout_like(self) -> "GridImage":
        return self.copy_with(np.zeros_like(self.data))


@dataclass(frozen=True)
class SinogramLayout:
    n_s: int
    n_alpha: int
    s_max: float

    @property
    def ds(self) -> float:
        return 2.0 * self.s_max / self.n_s

    @property
    def dalpha(self) -> float:
        return TWO_PI / self.n_alpha

    @property
    def s_centers(self) -> np.ndarray:
        return -self.s_max + (np.arange(self.n_s) + 0.5) * self.ds

    @property
    def alphas(self) -> np.ndarray:
        return np.arange(self.n_alpha) * self.dalpha


@dataclass
class Sinogram:
    """Samples over (s, alpha); rows are angles.  NaN marks masked bins."""

    data: np.ndarray
    s_max: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)

    @classmethod
    def zeros(cls, layout: SinogramLayout) -> "Sinogram":
        return cls(np.zeros((layout.n_alpha, layout.n_s)), layout.s_max)

    @property
    def n_alpha(self) -> int:
        return self.data.shape[0]

    @property
    def n_s(self) -> int:
        return self.data.shape[1]

    @property
    def layout(self) -> SinogramLayout:
        return SinogramLayout(self.n_s, self.n_alpha, self.s_max)

    @property
    def mask(self) -> np.ndarray:
        """True at valid (unmasked) bins."""
        return ~np.isnan(self.data)

    def filled(self, value: float = 0.0) -> np.ndarray:
        return np.where(self.mask, self.data, value)

    def copy_with(self, data: np.ndarray) -> "Sinogram":
        return Sinogram(data, self.s_max)


def image_inner(f: GridImage, g: GridImage) -> float:
    return float(np.sum(f.data * g.data)) * f.dx**2


def image_norm(f: GridImage) -> float:
    return math.sqrt(max(image_inner(f, f), 0.0))


def sino_inner(a: Sinogram, b: Sinogram) -> float:
    """Weighted pairing over bins that are valid in both sinograms."""
    prod = a.filled() * b.filled()
    lay = a.layout
    return float(np.sum(prod)) * lay.ds * lay.dalpha


def sino_norm(a: Sinogram) -> float:
    return math.sqrt(max(sino_inner(a, a), 0.0))


# width of the zero ring around the image used by the sampling kernel; any
# clamped out-of-hull stencil lands fully inside the ring and reads zeros
_PAD = 2


def _grid_coords(layout: SinogramLayout, img: GridImage, m: int, h: float):
    """Sample coordinates (padded pixel units) and trapezoid weights for
    every offset of angle row m."""
    alpha = m * layout.dalpha
    v = direction(alpha)
    w = normal(alpha)
    half_diag = 0.5 * math.hypot(img.x_max - img.x_min, img.y_max - img.y_min)
    n_t = max(int(math.ceil(2.0 * half_diag / h)) + 1, 2)
    t = -half_diag + np.arange(n_t) * h
    wt = np.full(n_t, h)
    wt[0] = wt[-1] = h / 2.0
    s = layout.s_centers
    off = _PAD - 0.5
    gx = (s[:, None] * w[0] + t[None, :] * v[0] - img.x_min) / img.dx + off
    gy = (s[:, None] * w[1] + t[None, :] * v[1] - img.y_min) / img.dx + off
    return gx, gy, wt


def _stencil(gx, gy, width):
    """Clamped bilinear stencil on the padded grid: flat corner indices and
    fractional weights.  No validity tests are needed: clamping pushes
    out-of-hull corners into the zero ring."""
    np.clip(gx, 0.0, width - 2.0, out=gx)
    np.clip(gy, 0.0, width - 2.0, out=gy)
    ix0 = gx.astype(np.int64)
    iy0 = gy.astype(np.int64)
    fx = gx - ix0
    fy = gy - iy0
    base = iy0 * width + ix0
    return base, fx, fy


def _pad_image(data: np.ndarray) -> np.ndarray:
    n = data.shape[0]
    padded = np.zeros((n + 2 * _PAD, n + 2 * _PAD))
    padded[_PAD:-_PAD, _PAD:-_PAD] = data
    return padded


def radon(f: GridImage, layout: SinogramLayout, h: float | None = None) -> Sinogram:
    """Weightless Radon transform of the bilinear interpolant of f.

    ``h`` is the sampling step along each line (default half a pixel).
    """
    if not np.all(np.isfinite(f.data)):
        raise ValueError("image contains non-finite samples")
    if h is None:
        h = f.dx / 2.0
    width = f.n + 2 * _PAD
    flat = _pad_image(f.data).ravel()
    out = np.empty((layout.n_alpha, layout.n_s))
    for m in range(layout.n_alpha):
        gx, gy, wt = _grid_coords(layout, f, m, h)
        base, fx, fy = _stencil(gx, gy, width)
        top = flat.take(base)
        top += (flat.take(base + 1) - top) * fx
        bot = flat.take(base + width)
        bot += (flat.take(base + width + 1) - bot) * fx
        top += (bot - top) * fy
        out[m] = top @ wt
    return Sinogram(out, layout.s_max)


def radon_adjoint(g: Sinogram, img_layout: GridImage, h: float | None = None) -> GridImage:
    """Exact transpose of :func:`radon` onto the given image layout.

    Masked bins contribute nothing.  The result carries the quadrature
    factor ds*dalpha/dx^2, making this the adjoint for the weighted inner
    products ``image_inner``/``sino_inner``.
    """
    if h is None:
        h = img_layout.dx / 2.0
    layout = g.layout
    vals = g.filled()
    width = img_layout.n + 2 * _PAD
    acc = np.zeros(width * width)
    for m in range(layout.n_alpha):
        gx, gy, wt = _grid_coords(layout, img_layout, m, h)
        base, fx, fy = _stencil(gx, gy, width)
        row = (vals[m][:, None] * wt[None, :]).ravel()
        base = base.ravel()
        fx = fx.ravel()
        fy = fy.ravel()
        w11 = fx * fy
        w10 = fy - w11
        w01 = fx - w11
        w00 = (1.0 - fx) - w10
        size = acc.size
        acc += np.bincount(base, weights=row * w00, minlength=size)
        acc += np.bincount(base + 1, weights=row * w01, minlength=size)
        acc += np.bincount(base + width, weights=row * w10, minlength=size)
        acc += np.bincount(base + width + 1, weights=row * w11, minlength=size)
    scale = layout.ds * layout.dalpha / img_layout.dx**2
    inner = acc.reshape(width, width)[_PAD:-_PAD, _PAD:-_PAD]
    return img_layout.copy_with(inner * scale)


def lambda_filter(
    g: Sinogram,
    power: float = 1.0,
    pad_factor: int = 2,
    taper: bool = False,
) -> Sinogram:
    """Apply (|sigma| / 4 pi)^power as a Fourier multiplier along each
    angle row, with zero padding.

    power=1 is the full derivative-type filter used for filtered
    backprojection; power=1/2 is its self-adjoint square root.  Masked
    input bins are treated as zero; the output is fully finite.  The
    optional cosine taper rolls the multiplier off at the Nyquist end for
    noisy data.
    """
    lay = g.layout
    n_pad = pad_factor * lay.n_s
    rows = g.filled()
    buf = np.zeros((lay.n_alpha, n_pad))
    buf[:, : lay.n_s] = rows
    freqs = np.fft.rfftfreq(n_pad, d=lay.ds)
    sigma = TWO_PI * freqs
    mult = (LAMBDA_SCALE * sigma) ** power
    if taper:
        mult = mult * np.cos(0.5 * math.pi * freqs / freqs[-1]) ** 2
    spec = np.fft.rfft(buf, axis=1) * mult[None, :]
    filtered = np.fft.irfft(spec, n=n_pad, axis=1)[:, : lay.n_s]
    return g.copy_with(filtered)


@dataclass(frozen=True)
class Family:
    """Tomography family: which reflected rays enter the data.

    The full family admits the whole (s, alpha) grid: the physical rays are
    those whose incoming part has positive projection onto the boundary
    tangent (sin beta > 0), and every grid bin parametrizes one of them --
    bins with sin beta < 0 carry the same broken ray traversed backwards,
    so the grid is a seamless double cover and the filtered backprojection
    sees no artificial data edge.  Restricted families model genuinely
    one-sided data: they keep ``forward_tangent`` so each ray appears once,
    and mask everything else.
    """

    forward_tangent: bool = True
    half_plane: float | None = None  # keep rays with <v(alpha), v(angle)> > 0
    arc: tuple | None = None  # (tau_min, tau_max) admissible vertex range
    s_window: tuple | None = None  # (s_lo, s_hi)
    alpha_window: tuple | None = None  # (center, half_width), periodic

    @classmethod
    def full(cls) -> "Family":
        return cls(forward_tangent=False)

    @classmethod
    def half_plane_incoming(cls, angle: float) -> "Family":
        return cls(half_plane=angle)

    @classmethod
    def boundary_arc(cls, tau_min: float, tau_max: float) -> "Family":
        return cls(arc=(tau_min, tau_max))

    @classmethod
    def local(cls, line: LineCoords, ds: float, dalpha: float) -> "Family":
        return cls(
            s_window=(line.s - ds, line.s + ds),
            alpha_window=(line.alpha, dalpha),
        )

    def admits(self, s: float, alpha: float, sin_beta: float, tau0: float, length: float) -> bool:
        if self.forward_tangent and sin_beta <= 0.0:
            return False
        if self.half_plane is not None:
            if math.cos(alpha - self.half_plane) <= 0.0:
                return False
        if self.arc is not None:
            lo, hi = self.arc
            t = tau0 % length
            lo, hi = lo % length, hi % length
            inside = lo <= t <= hi if lo <= hi else (t >= lo or t <= hi)
            if not inside:
                return False
        if self.s_window is not None:
            if not (self.s_window[0] <= s <= self.s_window[1]):
                return False
        if self.alpha_window is not None:
            c, hw = self.alpha_window
            d = abs((alpha - c + math.pi) % TWO_PI - math.pi)
            if d > hw:
                return False
        return True


def _reflection_table(boundary: Boundary, family: Family, layout: SinogramLayout):
    """Per-bin reflection data: admissible mask and chi(s, alpha).

    The circle gets the closed form (s is conserved, sin beta = s/R);
    other boundaries go through the generic reflection.
    """
    s = layout.s_centers
    alphas = layout.alphas
    mask = np.zeros((layout.n_alpha, layout.n_s), dtype=bool)
    s2 = np.zeros_like(mask, dtype=float)
    a2 = np.zeros_like(mask, dtype=float)
    if isinstance(boundary, Circle):
        R = boundary.radius
        sin_b = np.clip(s / R, -1.0, 1.0)
        cos_b = np.sqrt(np.maximum(1.0 - sin_b**2, 0.0))
        ok_s = (np.abs(s) < R) & (cos_b >= GRAZING_COS)
        beta = np.arcsin(sin_b)
        for m, alpha in enumerate(alphas):
            # vertex = exit point of the chord
            t_exit = R * cos_b
            v = direction(alpha)
            w = normal(alpha)
            vx = s * w[0] + t_exit * v[0]
            vy = s * w[1] + t_exit * v[1]
            tau0 = (R * np.arctan2(-vy, vx)) % (TWO_PI * R)
            for k in range(layout.n_s):
                if not ok_s[k]:
                    continue
                if not family.admits(s[k], alpha, sin_b[k], tau0[k], TWO_PI * R):
                    continue
                mask[m, k] = True
                s2[m, k] = s[k]
                a2[m, k] = alpha + 2.0 * beta[k] + math.pi
        return mask, s2, a2
    for m, alpha in enumerate(alphas):
        for k in range(layout.n_s):
            line = LineCoords(float(s[k]), float(alpha))
            anchor = line.point_at(-4.0 * layout.s_max)
            try:
                event = reflect(boundary, line, anchor)
            except Exception:
                continue
            sin_b = math.sin(event.beta)
            if not family.admits(s[k], alpha, sin_b, event.tau0, boundary.length):
                continue
            mask[m, k] = True
            s2[m, k] = event.line_out.s
            a2[m, k] = event.line_out.alpha
    return mask, s2, a2


def _sino_interp_stencil(layout: SinogramLayout, s2: np.ndarray, a2: np.ndarray):
    """Bilinear stencil into the (alpha, s) grid, periodic in alpha.

    Offsets beyond the sampled range get zero weight.  Returns flat target
    indices and weights for the four corners of each query.
    """
    gs = (s2 + layout.s_max) / layout.ds - 0.5
    ga = (a2 % TWO_PI) / layout.dalpha
    is0 = np.floor(gs).astype(np.int64)
    ia0 = np.floor(ga).astype(np.int64)
    fs = gs - is0
    fa = ga - ia0
    parts = []
    for da, wa in ((0, 1.0 - fa), (1, fa)):
        for ds_, ws in ((0, 1.0 - fs), (1, fs)):
            ks = is0 + ds_
            ka = (ia0 + da) % layout.n_alpha
            valid = (ks >= 0) & (ks < layout.n_s)
            w = wa * ws * valid
            flat = ka * layout.n_s + np.clip(ks, 0, layout.n_s - 1)
            parts.append((flat, w))
    return parts


class RadonOperator:
    """Plain Radon transform bundled with its layouts."""

    def __init__(self, img_layout: GridImage, sino_layout: SinogramLayout, h: float | None = None):
        self.img_layout = img_layout.layout_like()
        self.sino_layout = sino_layout
        self.h = h if h is not None else img_layout.dx / 2.0

    def forward(self, f: GridImage) -> Sinogram:
        return radon(f, self.sino_layout, self.h)

    def adjoint(self, g: Sinogram) -> GridImage:
        return radon_adjoint(g, self.img_layout, self.h)


class BrokenRayOperator:
    """V-line transform off a reflecting boundary, restricted to a family.

    Forward: dense Radon sinogram, then per admissible bin the sum of the
    direct value and the bilinearly resampled reflected-leg value;
    inadmissible bins are NaN.  The adjoint scatters through the transposed
    stencil, so the operator pair passes dot-product tests to rounding.
    """

    def __init__(
        self,
        boundary: Boundary,
        family: Family,
        img_layout: GridImage,
        sino_layout: SinogramLayout,
        h: float | None = None,
        support_margin_px: float = 2.0,
    ):
        self.boundary = boundary
        self.family = family
        self.img_layout = img_layout.layout_like()
        self.sino_layout = sino_layout
        self.h = h if h is not None else img_layout.dx / 2.0
        mask, s2, a2 = _reflection_table(boundary, family, sino_layout)
        self.mask = mask
        flat_adm = np.flatnonzero(mask.ravel())
        self._adm = flat_adm
        self._stencil = [
            (idx[mask.ravel() != 0], w[mask.ravel() != 0])
            for idx, w in _sino_interp_stencil(
                sino_layout, s2.ravel(), a2.ravel()
            )
        ]
        self._support_ok = _interior_support_mask(
            boundary, self.img_layout, support_margin_px
        )

    def check_support_of(self, f: GridImage) -> None:
        """Raise SupportViolation unless f vanishes near the boundary.

        The full-line Radon values only equal the physical V-line chord
        integrals under this condition, so data generation must pass it;
        iteration internals apply the plain discrete operator and may skip
        it (iterates legitimately leak into the margin).
        """
        peak = float(np.max(np.abs(f.data)))
        if peak == 0.0:
            return
        outside = float(np.max(np.abs(f.data[~self._support_ok])))
        if outside > 1e-9 * peak:
            raise SupportViolation(
                "image does not vanish within the margin of the reflecting boundary"
            )

    def forward(self, f: GridImage) -> Sinogram:
        base = radon(f, self.sino_layout, self.h)
        flat = base.data.ravel()
        vals = flat[self._adm].copy()
        for idx, w in self._stencil:
            vals = vals + flat[idx] * w
        out = np.full(flat.shape, np.nan)
        out[self._adm] = vals
        return Sinogram(out.reshape(base.data.shape), self.sino_layout.s_max)

    def adjoint(self, g: Sinogram) -> GridImage:
        lay = self.sino_layout
        gv = g.filled().ravel()[self._adm]
        acc = np.zeros(lay.n_alpha * lay.n_s)
        np.add.at(acc, self._adm, gv)
        for idx, w in self._stencil:
            acc += np.bincount(idx, weights=gv * w, minlength=acc.size)
        back = Sinogram(acc.reshape(lay.n_alpha, lay.n_s), lay.s_max)
        return radon_adjoint(back, self.img_layout, self.h)


class ParallelRayOperator:
    """Two-offset parallel-ray transform P f = R f(s, a) + R f(s + d, a)."""

    def __init__(
        self,
        offset: float,
        img_layout: GridImage,
        sino_layout: SinogramLayout,
        h: float | None = None,
    ):
        self.offset = offset
        self.img_layout = img_layout.layout_like()
        self.sino_layout = sino_layout
        self.h = h if h is not None else img_layout.dx / 2.0
        lay = sino_layout
        gs = (lay.s_centers + offset + lay.s_max) / lay.ds - 0.5
        k0 = np.floor(gs).astype(np.int64)
        fs = gs - k0
        self._shift_parts = []
        for dk, wk in ((0, 1.0 - fs), (1, fs)):
            kk = k0 + dk
            valid = (kk >= 0) & (kk < lay.n_s)
            self._shift_parts.append((np.clip(kk, 0, lay.n_s - 1), wk * valid))

    def _shift(self, rows: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rows)
        for kk, w in self._shift_parts:
            out += rows[:, kk] * w[None, :]
        return out

    def _shift_adjoint(self, rows: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rows)
        for kk, w in self._shift_parts:
            np.add.at(out, (slice(None), kk), rows * w[None, :])
        return out

    def forward(self, f: GridImage) -> Sinogram:
        base = radon(f, self.sino_layout, self.h)
        return base.copy_with(base.data + self._shift(base.data))

    def adjoint(self, g: Sinogram) -> GridImage:
        rows = g.filled()
        back = g.copy_with(rows + self._shift_adjoint(rows))
        return radon_adjoint(back, self.img_layout, self.h)


def _interior_support_mask(boundary: Boundary, img: GridImage, margin_px: float) -> np.ndarray:
    """Pixels safely inside the reflecting boundary (margin in pixels)."""
    X, Y = img.meshgrid()
    margin = margin_px * img.dx
    if isinstance(boundary, Circle):
        return np.hypot(X, Y) <= boundary.radius - margin
    from .geometry import Ellipse, Parabola

    if isinstance(boundary, Ellipse):
        shrink = 1.0 - margin / min(boundary.a, boundary.b)
        return (X / boundary.a) ** 2 + (Y / boundary.b) ** 2 <= shrink**2
    if isinstance(boundary, Parabola):
        curve = -(X**2) / (4.0 * boundary.focal)
        return (Y <= curve - margin) & (np.abs(X) <= boundary.x_max - margin)
    # generic curve: distance to a dense polygonal sampling plus a
    # crossing-number interior test
    taus = np.linspace(0.0, boundary.length, 1024, endpoint=False)
    pts = np.array([boundary.frame(t).point for t in taus])
    from scipy.spatial import cKDTree

    tree = cKDTree(pts)
    queries = np.column_stack([X.ravel(), Y.ravel()])
    d, _ = tree.query(queries)
    inside = _points_in_polygon(pts, queries)
    return (inside & (d >= margin)).reshape(X.shape)


def _points_in_polygon(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Even-odd rule crossing test, vectorized over edge chunks."""
    x, y = pts[:, 0], pts[:, 1]
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    inside = np.zeros(len(pts), dtype=bool)
    chunk = 64
    for i in range(0, len(poly), chunk):
        a0x, a0y = x0[i : i + chunk, None], y0[i : i + chunk, None]
        a1x, a1y = x1[i : i + chunk, None], y1[i : i + chunk, None]
        straddles = (a0y > y[None, :]) != (a1y > y[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = a0x + (y[None, :] - a0y) * (a1x - a0x) / (a1y - a0y)
        hits = straddles & (x_cross > x[None, :])
        inside ^= (np.sum(hits, axis=0) % 2).astype(bool)
    return inside


def broken_ray_forward(
    f: GridImage,
    boundary: Boundary,
    family: Family,
    sino_layout: SinogramLayout,
    h: float | None = None,
) -> Sinogram:
    op = BrokenRayOperator(boundary, family, f, sino_layout, h)
    op.check_support_of(f)
    return op.forward(f)


def broken_ray_adjoint(
    g: Sinogram,
    boundary: Boundary,
    family: Family,
    img_layout: GridImage,
    h: float | None = None,
) -> GridImage:
    return BrokenRayOperator(boundary, family, img_layout, g.layout, h).adjoint(g)


def parallel_forward(
    f: GridImage, offset: float, sino_layout: SinogramLayout, h: float | None = None
) -> Sinogram:
    return ParallelRayOperator(offset, f, sino_layout, h).forward(f)


def parallel_adjoint(
    g: Sinogram, offset: float, img_layout: GridImage, h: float | None = None
) -> GridImage:
    return ParallelRayOperator(offset, img_layout, g.layout, h).adjoint(g)
