"""Conjugate points, caustics, conjugate chains and artifact predictors.

For a source ``p`` on the incoming line of a reflection, the total
derivatives along the pencil of rays through ``p`` are obtained from the
reflection Jacobian by the chain rule with ``d s1/d alpha1 = -<p, v(a1)>``.
A conjugate point exists on the outgoing ray iff

    (d a2/d a1) * <d q0/d a1, w(a2)> < 0,

and is then the unique point with ``<q, v(a2)> = -(d a2/d a1)^-1 d s2/d a1``.
In the reflection case the factor ``<d q0/d a1, w(a2)> = -t1`` is always
negative, so existence reduces to ``d a2/d a1 > 0`` and the conjugate point
satisfies the mirror relation ``dt2 = (d a2/d a1)^-1 t1``.

Conjugate covectors follow the transport rule
``eta = lambda / det(d chi) * (d a2/d a1) * w(a2)`` for ``xi = lambda w(a1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .errors import (
    CenterSource,
    DegenerateDirection,
    EmptyCaustic,
    GrazingIncidence,
    NoIntersection,
)
from .geometry import (
    GRAZING_COS,
    TWO_PI,
    Boundary,
    Circle,
    LineCoords,
    ReflectionEvent,
    direction,
    normal,
    cross2,
    reflect,
    rot90,
)

# d(alpha2)/d(alpha1) magnitudes below this put the conjugate point at
# infinity and are treated as degenerate.
DEGENERATE_TOL = 1e-12

RADIAL_TOL = 1e-9


@dataclass(eq=False)
class Covector:
    """A position/direction pair (x, xi) marking a potential singularity."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        if not np.linalg.norm(self.xi) > 0.0:
            raise ValueError("covector direction must be nonzero")

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.xi))

    def unit(self) -> np.ndarray:
        return self.xi / self.magnitude


@dataclass(frozen=True)
class Translation:
    """The line-coordinate map (s, alpha) -> (s + offset, alpha).

    This is the diffeomorphism of the two-parallel-ray transform; its
    Jacobian is the identity.
    """

    offset: float
    line_in: LineCoords

    @property
    def line_out(self) -> LineCoords:
        return LineCoords(self.line_in.s + self.offset, self.line_in.alpha)

    @property
    def jacobian(self) -> np.ndarray:
        return np.eye(2)


def source_derivatives(p, event: ReflectionEvent) -> tuple[float, float]:
    """Total (d a2/d a1, d s2/d a1) along the ray pencil through p.

    Chain rule through the reflection Jacobian with s1 = <p, w(a1)>, so
    d s1/d a1 = -<p, v(a1)>.
    """
    J = event.jacobian
    v1 = direction(event.line_in.alpha)
    ds1 = -float(np.dot(p, v1))
    da2 = J[1, 1] + J[1, 0] * ds1
    ds2 = J[0, 1] + J[0, 0] * ds1
    return float(da2), float(ds2)


def conjugate_point(p, event, q0_offset: float = 0.0):
    """Conjugate point of p along the outgoing ray, or None.

    ``event`` is a ReflectionEvent or a Translation.  ``q0_offset`` slides
    the reference point q0 along the outgoing direction; small offsets do
    not change the existence answer.

    Raises DegenerateDirection when d(alpha2)/d(alpha1) = 0 (the conjugate
    point escapes to infinity).
    """
    p = np.asarray(p, dtype=float)
    if isinstance(event, Translation):
        # conjugate pair of the translation: q = p + w * offset
        return p + event.offset * event.line_in.w
    da2, ds2 = source_derivatives(p, event)
    if abs(da2) < DEGENERATE_TOL:
        raise DegenerateDirection("d alpha2/d alpha1 = 0: conjugate point at infinity")
    a2 = event.alpha2_raw
    v2, w2 = direction(a2), normal(a2)
    q0 = event.hit_point + q0_offset * v2
    # <d q0/d a1, w2> recovered from differentiating <q0, w2> = s2
    dq0_w2 = ds2 + float(np.dot(q0, v2)) * da2
    if da2 * dq0_w2 >= 0.0:
        return None
    c = -ds2 / da2
    return event.line_out.s * w2 + c * v2


def conjugate_covector(cv: Covector, event, conormal_tol: float = 1e-6):
    """Transport a conormal covector through the event, or None.

    With xi = lambda * w(alpha1) the partner is
    eta = lambda / det(d chi) * (d alpha2/d alpha1) * w(alpha2) sitting at
    the conjugate point of cv.x.
    """
    line_in = event.line_in
    lam = float(np.dot(cv.xi, line_in.w))
    if np.linalg.norm(cv.xi - lam * line_in.w) > conormal_tol * cv.magnitude:
        raise ValueError("covector is not conormal to the incoming line")
    q = conjugate_point(cv.x, event)
    if q is None:
        return None
    if isinstance(event, Translation):
        return Covector(q, cv.xi.copy())
    da2, _ = source_derivatives(cv.x, event)
    det = float(np.linalg.det(event.jacobian))
    eta = (lam / det) * da2 * normal(event.alpha2_raw)
    return Covector(q, eta)


@dataclass
class CausticPoint:
    alpha: float
    t: float  # total path length from the source through the vertex
    point: np.ndarray
    outside_domain: bool = False


@dataclass
class CausticCurve:
    """Conjugate points of a fixed source, ordered by ray angle."""

    source: np.ndarray
    points: list  # CausticPoint, sorted by alpha
    breaks: list  # indices into points where the polyline is interrupted

    def segments(self) -> list[np.ndarray]:
        """Polyline pieces as (m, 2) arrays, split at gaps."""
        segs = []
        start = 0
        for b in list(self.breaks) + [len(self.points)]:
            if b - start >= 1:
                segs.append(np.array([cp.point for cp in self.points[start:b]]))
            start = b
        return [s for s in segs if len(s) > 0]


def _caustic_sample(p, boundary, alpha):
    line = LineCoords.through(p, alpha)
    try:
        event = reflect(boundary, line, p)
        q = conjugate_point(p, event)
    except (NoIntersection, GrazingIncidence, DegenerateDirection):
        return None
    if q is None:
        return None
    t1 = event.t_hit - line.coord_of(p)
    dt2 = float(np.dot(q - event.hit_point, event.line_out.v))
    return CausticPoint(alpha, t1 + dt2, q)


def caustic_curve(
    p,
    boundary: Boundary,
    alpha_range=(0.0, TWO_PI),
    n_samples: int = 720,
    refine_dist: float | None = None,
    max_depth: int = 10,
    domain_radius: float | None = None,
) -> CausticCurve:
    """Sample the caustic (conjugate-point locus) of a point source.

    Directions without an admissible reflection or without a conjugate
    point leave gaps.  When ``refine_dist`` is set, intervals whose
    endpoints are farther apart than that are bisected up to ``max_depth``
    times, which resolves cusps.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    p = np.asarray(p, dtype=float)
    if domain_radius is None and isinstance(boundary, Circle):
        domain_radius = boundary.radius
    a0, a1 = alpha_range
    full_turn = abs((a1 - a0) - TWO_PI) < 1e-12
    alphas = np.linspace(a0, a1, n_samples, endpoint=not full_turn)
    samples = [(a, _caustic_sample(p, boundary, a)) for a in alphas]

    if refine_dist is not None:
        refined = []
        for i in range(len(samples)):
            refined.append(samples[i])
            if i + 1 == len(samples):
                break
            stack = [(samples[i], samples[i + 1], 0)]
            inserts = []
            while stack:
                (aa, ca), (ab, cb), depth = stack.pop()
                if depth >= max_depth or ca is None or cb is None:
                    continue
                if np.linalg.norm(ca.point - cb.point) <= refine_dist:
                    continue
                am = 0.5 * (aa + ab)
                cm = _caustic_sample(p, boundary, am)
                inserts.append((am, cm))
                stack.append(((aa, ca), (am, cm), depth + 1))
                stack.append(((am, cm), (ab, cb), depth + 1))
            refined.extend(sorted(inserts, key=lambda t: t[0]))
        samples = refined

    points, breaks = [], []
    previous_missing = False
    for a, cp in samples:
        if cp is None:
            previous_missing = True
            continue
        if domain_radius is not None:
            cp.outside_domain = bool(np.linalg.norm(cp.point) > domain_radius)
        if previous_missing and points:
            breaks.append(len(points))
        points.append(cp)
        previous_missing = False
    if not points:
        raise EmptyCaustic("no admissible direction produced a conjugate point")
    return CausticCurve(source=p, points=points, breaks=breaks)


@dataclass
class LocusZero:
    alpha: float
    kind: str  # "through_center" (beta = 0) or "source_perpendicular" (t1 = R cos b)
    simple: bool
    t: float


@dataclass
class TangentLocus:
    """Zero set of F(alpha, t) for a circular mirror, with dF/d alpha zeros."""

    alpha: np.ndarray
    t: np.ndarray
    points: np.ndarray  # (m, 2) conjugate points in the plane
    zeros: list  # LocusZero


def _disk_pencil(p, radius, alpha):
    """(t1, sin b, cos b) for the ray from p with angle alpha in the disk."""
    v = direction(alpha)
    w = normal(alpha)
    s = float(np.dot(p, w))
    pv = float(np.dot(p, v))
    t1 = -pv + math.sqrt(max(radius * radius - s * s, 0.0))
    return t1, s / radius, math.sqrt(max(1.0 - (s / radius) ** 2, 0.0))


def tangent_conjugate_locus(p, radius: float = 1.0, n_samples: int = 2048) -> TangentLocus:
    """Tangent conjugate locus of a source inside a circular mirror.

    Solves F(alpha, t) = (2 t1/(R cos b) - 1)(t - t1) - t1 = 0 for each
    admissible direction and classifies the zeros of dF/d alpha on the
    locus.  Both kinds of zeros are simple: d(sin b)/d alpha = (t1 - R cos b)/R
    does not vanish at beta = 0, and d(cos b - t1/R)/d alpha = sin b does not
    vanish at the perpendicular direction.
    """
    p = np.asarray(p, dtype=float)
    r = float(np.linalg.norm(p))
    if r < 1e-12:
        raise CenterSource("locus degenerates for a source at the center")
    if r >= radius:
        raise ValueError("source must lie strictly inside the circle")

    alphas = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
    rows = []
    for a in alphas:
        t1, sb, cb = _disk_pencil(p, radius, a)
        D = 2.0 * t1 / (radius * cb) - 1.0
        if D <= 0.0:
            continue
        t = t1 + t1 / D
        rows.append((a, t))
    if not rows:
        raise EmptyCaustic("locus is empty")
    alpha_arr = np.array([rw[0] for rw in rows])
    t_arr = np.array([rw[1] for rw in rows])

    # exp_p(t v(alpha)) travels t1 along v then t - t1 along the reflection
    pts = []
    for a, t in zip(alpha_arr, t_arr):
        line = LineCoords.through(p, a)
        event = reflect(Circle(radius), line, p)
        t1 = event.t_hit - line.coord_of(p)
        pts.append(event.hit_point + (t - t1) * event.line_out.v)
    pts = np.array(pts)

    phi = math.atan2(p[1], p[0])
    zeros = []
    for a, kind in (
        (phi, "through_center"),
        (phi + math.pi, "through_center"),
        (phi + math.pi / 2.0, "source_perpendicular"),
        (phi - math.pi / 2.0, "source_perpendicular"),
    ):
        a = a % TWO_PI
        t1, sb, cb = _disk_pencil(p, radius, a)
        D = 2.0 * t1 / (radius * cb) - 1.0
        if D <= DEGENERATE_TOL:
            continue  # not on the locus
        if kind == "through_center":
            # d(sin b)/d alpha = (t1 - R cos b)/R, nonzero unless t1 = R
            deriv = (t1 - radius * cb) / radius
        else:
            deriv = sb
        zeros.append(LocusZero(alpha=a, kind=kind, simple=abs(deriv) > 1e-9, t=t1 + t1 / D))
    return TangentLocus(alpha=alpha_arr, t=t_arr, points=pts, zeros=zeros)


def locus_residual(p, radius, alpha, t) -> float:
    """F(alpha, t) for the circular mirror; zero on the tangent locus."""
    t1, _, cb = _disk_pencil(np.asarray(p, dtype=float), radius, alpha)
    return (2.0 * t1 / (radius * cb) - 1.0) * (t - t1) - t1


def parabola_criterion(a: float, d: float, x0: float) -> bool:
    """Whether the ray from (0, -d) hitting the mirror -4ay = x^2 at
    abscissa x0 produces conjugate points: (a - d)(3/4 x0^2 - a d) > 0."""
    if a <= 0.0 or d <= 0.0:
        raise ValueError("focal parameter and source height must be positive")
    return (a - d) * (0.75 * x0 * x0 - a * d) > 0.0


def is_radial(cv: Covector, radius: float = 1.0) -> bool:
    """Whether x is the midpoint of the chord conormal to xi.

    For a disk about the origin the chord through x perpendicular to xi has
    midpoint at the foot of the center's projection, so the midpoint is x
    itself iff x is parallel to xi (or x = 0).
    """
    r = float(np.linalg.norm(cv.x))
    if r >= radius:
        raise ValueError("covector must lie inside the disk")
    return bool(abs(cross2(cv.x, cv.unit())) <= RADIAL_TOL * r)


@dataclass(frozen=True)
class ChainStatus:
    kind: str  # "complete" | "incomplete" | "truncated"
    index: int | None = None

    @property
    def is_complete(self) -> bool:
        return self.kind == "complete"


@dataclass
class ChainEntry:
    index: int
    covector: Covector
    line_in: LineCoords
    line_out: LineCoords | None
    a: float
    outside_domain: bool = False


@dataclass
class ConjugateChain:
    entries: list  # ChainEntry, sorted by index
    status_positive: ChainStatus
    status_negative: ChainStatus
    grazing: bool = False

    @property
    def is_complete(self) -> bool:
        return self.status_positive.is_complete and self.status_negative.is_complete

    def entry(self, index: int) -> ChainEntry | None:
        for e in self.entries:
            if e.index == index:
                return e
        return None


def _disk_exit(x, u, radius):
    b = x[0] * u[0] + x[1] * u[1]
    disc = radius * radius - (x[0] * x[0] + x[1] * x[1]) + b * b
    return -b + math.sqrt(max(disc, 0.0))


def _walk_disk_chain(x0, xi0, u0, radius, max_index, sign, entries):
    """March conjugate covectors around the disk billiard in one direction.

    Returns the ChainStatus for this direction and appends entries with
    indices sign*1, sign*2, ...  All bounces share the incidence angle, so
    grazing is decided once from the first chord.

    Positions are reconstructed from the vertex sequence (a stable
    rotation) and the reciprocal recurrence 1/a_{i+1} = 1/a_i + 2; the raw
    point-to-point march amplifies rounding exponentially and cannot follow
    long chains.
    """
    x = np.array(x0, dtype=float)
    u = np.array(u0, dtype=float)
    lam = float(np.dot(xi0, rot90(u)))
    s_chord = cross2(u, x)  # conserved offset; sin(beta) = s/R
    cos_b = math.sqrt(max(1.0 - (s_chord / radius) ** 2, 0.0))
    if cos_b < GRAZING_COS:
        return ChainStatus("truncated", 0), True
    half_chord = radius * cos_b

    if entries is None:
        # status only: the scalar reciprocal recurrence decides escape
        t1 = _disk_exit(x, u, radius)
        a = t1 / half_chord - 1.0
        b = math.inf if a == 0.0 else 1.0 / a
        for k in range(1, max_index + 1):
            if 2.0 * a + 1.0 <= DEGENERATE_TOL:
                return ChainStatus("incomplete", sign * k), False
            b += 2.0
            if abs(b) < DEGENERATE_TOL:
                return ChainStatus("incomplete", sign * k), False
            a = 0.0 if math.isinf(b) else 1.0 / b
            if abs(a) >= 1.0 - 1e-12:
                return ChainStatus("incomplete", sign * k), False
        return ChainStatus("truncated", max_index), False

    # The vertex sequence is a rigid rotation by a fixed central angle;
    # generate it in closed form so the march stays exact.
    t1 = _disk_exit(x, u, radius)
    v1 = x + t1 * u
    n = v1 / radius
    u2_first = u - 2.0 * float(np.dot(u, n)) * n
    v2 = v1 + 2.0 * half_chord * u2_first
    phi = math.atan2(v1[1], v1[0])
    delta = math.remainder(math.atan2(v2[1], v2[0]) - phi, TWO_PI)

    a = t1 / half_chord - 1.0
    b = math.inf if a == 0.0 else 1.0 / a
    u_prev = u
    for k in range(1, max_index + 1):
        idx = sign * k
        ang = phi + (k - 1) * delta
        vk = radius * np.array([math.cos(ang), math.sin(ang)])
        vk1 = radius * np.array([math.cos(ang + delta), math.sin(ang + delta)])
        u2 = vk1 - vk
        u2 = u2 / math.hypot(u2[0], u2[1])
        D = 2.0 * a + 1.0
        if D <= DEGENERATE_TOL:
            return ChainStatus("incomplete", idx), False
        b2 = b + 2.0
        if abs(b2) < DEGENERATE_TOL:
            # conjugate point at infinity: the chain leaves the disk here
            return ChainStatus("incomplete", idx), False
        a2 = 0.0 if math.isinf(b2) else 1.0 / b2
        q = vk + half_chord * (1.0 - a2) * u2
        lam2 = lam * D
        xi2 = lam2 * rot90(u2)
        line_in = LineCoords.through(x, math.atan2(u_prev[1], u_prev[0]))
        line_out = LineCoords.through(vk, math.atan2(u2[1], u2[0]))
        outside = abs(a2) >= 1.0 - 1e-12
        entries.append(
            ChainEntry(
                index=idx,
                covector=Covector(q, xi2),
                line_in=line_in,
                line_out=line_out,
                a=a2,
                outside_domain=outside,
            )
        )
        if outside:
            return ChainStatus("incomplete", idx), False
        x, u_prev, lam, a, b = q, u2, lam2, a2, b2
    return ChainStatus("truncated", max_index), False


def conjugate_chain(
    cv: Covector,
    radius: float = 1.0,
    max_index: int = 64,
    with_entries: bool = True,
) -> ConjugateChain:
    """All conjugate covectors reachable from cv inside a disk mirror.

    Walks the billiard forward and backward, transporting the covector via
    the mirror relation; equivalently, with t1 = R cos(b) (a_i + 1), the
    recurrence 1/a_{i+1} = 1/a_i + 2 governs escape.  The chain is complete
    exactly for radial covectors (a = 0); otherwise at least one direction
    escapes the disk and the chain is incomplete there.

    ``with_entries=False`` skips the per-bounce covector construction and
    returns statuses only, which is much faster on large covector grids.
    """
    if float(np.linalg.norm(cv.x)) >= radius:
        raise ValueError("covector must lie strictly inside the disk")
    xin = cv.unit()
    u0 = np.array([xin[1], -xin[0]])  # chord direction, xi conormal to it
    radial = is_radial(cv, radius)

    entries = []
    if with_entries:
        a0_line = LineCoords.through(cv.x, math.atan2(u0[1], u0[0]))
        t1 = _disk_exit(cv.x, u0, radius)
        s_chord = cross2(u0, cv.x)
        cos_b = math.sqrt(max(1.0 - (s_chord / radius) ** 2, 0.0))
        a0 = t1 / (radius * cos_b) - 1.0 if cos_b > 0 else math.inf
        first_out = None
        if cos_b >= GRAZING_COS:
            vertex = cv.x + t1 * u0
            n = vertex / radius
            u2 = u0 - 2.0 * float(np.dot(u0, n)) * n
            first_out = LineCoords.through(vertex, math.atan2(u2[1], u2[0]))
        entries.append(
            ChainEntry(index=0, covector=cv, line_in=a0_line, line_out=first_out, a=a0)
        )
        walk_pos = walk_neg = entries
    else:
        walk_pos = walk_neg = None

    status_pos, graze_p = _walk_disk_chain(cv.x, cv.xi, u0, radius, max_index, +1, walk_pos)
    status_neg, graze_n = _walk_disk_chain(cv.x, cv.xi, -u0, radius, max_index, -1, walk_neg)
    grazing = graze_p or graze_n
    if radial and not grazing:
        status_pos = ChainStatus("complete")
        status_neg = ChainStatus("complete")
    entries.sort(key=lambda e: e.index)
    return ConjugateChain(
        entries=entries,
        status_positive=status_pos,
        status_negative=status_neg,
        grazing=grazing,
    )


@dataclass(frozen=True)
class PolygonRadius:
    radius: float
    p: int
    q: int


def polygon_artifact_radii(n_max: int) -> list[PolygonRadius]:
    """Radii cos(q pi / p) of persistent radial artifacts in the disk.

    Periodic billiard orbits are the regular (possibly star) polygons p/q
    with 2 <= 2q < p and gcd(p, q) = 1; only even p = 2n leaves a
    non-smooth residue, with odd winding q = 2k + 1.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    out = {}
    for n in range(2, n_max + 1):
        p = 2 * n
        for q in range(1, (p + 1) // 2, 2):
            if 2 * q >= p or gcd(p, q) != 1:
                continue
            out[(p, q)] = PolygonRadius(math.cos(q * math.pi / p), p, q)
    radii = sorted(out.values(), key=lambda r: -r.radius)
    deduped = []
    for r in radii:
        if not deduped or abs(deduped[-1].radius - r.radius) > 1e-12:
            deduped.append(r)
    return deduped
