"""Field-of-values enclosures by the rotation sweep.

For each angle theta the largest eigenvalue s of the Hermitian part of
e^{i theta} B bounds the FOV by the half-plane Re(e^{i theta} z) <= s.  The
Ritz vector of that eigenvalue gives a Rayleigh quotient of B (a witness)
on or near the boundary.  Intersecting the half-planes gives an outer
polygon; the witnesses give an inner one.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .krylov import LinearOperator, as_operator, lanczos_max_eig


@dataclass
class FovEnclosure:
    angles: np.ndarray
    support: np.ndarray
    witnesses: np.ndarray
    polygon: np.ndarray  # complex vertices, counter-clockwise
    flagged: list = field(default_factory=list)
    lanczos_steps: list = field(default_factory=list)

    @property
    def scale(self) -> float:
        return float(np.abs(self.support).max(initial=0.0))

    def contains(self, z, inflate: float = 0.0) -> np.ndarray:
        """Membership in the half-plane intersection, each plane shifted by ``inflate``."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        lhs = np.real(np.exp(1j * self.angles)[None, :] * z[:, None])
        return np.all(lhs <= self.support[None, :] + inflate, axis=1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "support", "witness_re", "witness_im"])
            for t, s, z in zip(self.angles, self.support, self.witnesses):
                w.writerow([repr(float(t)), repr(float(s)), repr(float(z.real)),
                            repr(float(z.imag))])


def uniform_angles(n_angles: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n_angles) / n_angles


def clip_halfplanes(angles, support, box: float | None = None) -> np.ndarray:
    """Convex polygon {z : Re(e^{i t_k} z) <= s_k for all k} by successive clipping.

    The angles must surround the origin (gaps < pi) so the set is bounded.
    """
    angles = np.asarray(angles, dtype=float)
    support = np.asarray(support, dtype=float)
    if box is None:
        box = 4.0 * max(np.abs(support).max(initial=0.0), 1e-300)
    poly = [complex(-box, -box), complex(box, -box), complex(box, box), complex(-box, box)]
    for t, s in zip(angles, support):
        rot = np.exp(1j * t)
        out = []
        m = len(poly)
        for i in range(m):
            p, q = poly[i], poly[(i + 1) % m]
            fp = (rot * p).real - s
            fq = (rot * q).real - s
            if fp <= 0:
                out.append(p)
            if (fp < 0 < fq) or (fq < 0 < fp):
                out.append(p + (q - p) * (fp / (fp - fq)))
        poly = out
        if not poly:
            break
    return np.array(poly, dtype=complex)


def compute_enclosure(B, n_angles: int = 64, eig_tol: float = 1e-10, angles=None,
                      extra_angles=(), max_iter: int | None = None,
                      seed: int = 0) -> FovEnclosure:
    """Rotation sweep over ``angles`` (default: n_angles uniform in [0, 2 pi)).

    ``extra_angles`` are appended, e.g. to hit a strip direction exactly.
    Each Lanczos run is warm-started from the previous Ritz vector.
    """
    B = as_operator(B)
    if not B.has_adjoint:
        raise ValueError("FOV enclosure needs the adjoint of the operator")
    if angles is None:
        if n_angles < 8:
            raise ValueError("use at least 8 angles")
        angles = uniform_angles(n_angles)
    angles = np.concatenate([np.asarray(angles, dtype=float),
                             np.asarray(extra_angles, dtype=float)])
    support = np.empty(len(angles))
    witnesses = np.empty(len(angles), dtype=complex)
    flagged, steps = [], []
    v = None
    for k, theta in enumerate(angles):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pair = lanczos_max_eig(B.hermitian_part(theta), tol=eig_tol,
                                   max_iter=max_iter, v0=v, seed=seed)
        steps.append(pair.iterations)
        x = pair.vector
        witnesses[k] = np.vdot(x, B.apply(x)) / np.vdot(x, x)
        support[k] = pair.value
        if not pair.converged:
            flagged.append(k)
            support[k] = pair.value + pair.residual
        # restart from a perturbed Ritz vector so it is not an exact eigenvector
        rng = np.random.default_rng(seed + k + 1)
        v = x + 1e-3 * (rng.standard_normal(B.n) + 1j * rng.standard_normal(B.n)) / np.sqrt(B.n)
    polygon = clip_halfplanes(angles, support)
    if len(polygon) == 0:
        # a point-like FOV (e.g. one unknown) can be clipped away by rounding
        slack = 1e-12 * max(np.abs(support).max(initial=0.0), 1e-300)
        polygon = clip_halfplanes(angles, support + slack)
    return FovEnclosure(angles, support, witnesses, polygon, flagged, steps)


def polygon_area_centroid(poly):
    poly = np.asarray(poly, dtype=complex)
    if len(poly) < 3:
        c = poly.mean() if len(poly) else 0j
        return 0.0, complex(c)
    x, y = poly.real, poly.imag
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    area = cross.sum() / 2
    if abs(area) <= 1e-300 or abs(area) < 1e-14 * np.abs(poly).max() ** 2:
        return float(abs(area)), complex(poly.mean())
    cx = ((x + xs) * cross).sum() / (6 * area)
    cy = ((y + ys) * cross).sum() / (6 * area)
    return float(abs(area)), complex(cx, cy)


@dataclass
class FovDiagnostics:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    witness_re_min: float
    witness_re_max: float
    witness_im_min: float
    witness_im_max: float
    strip_min: float | None
    strip_max: float | None
    origin_distance: float
    origin_inside: bool
    disc_center: complex
    disc_radius: float
    bound_applicable: bool
    scale: float  # h^d used for the scaled variants

    def scaled(self) -> dict:
        s = self.scale
        keys = ("re_min", "re_max", "im_min", "im_max", "witness_re_min", "witness_re_max",
                "witness_im_min", "witness_im_max", "strip_min", "strip_max",
                "origin_distance", "disc_radius")
        out = {k: (None if getattr(self, k) is None else getattr(self, k) / s) for k in keys}
        out["disc_center"] = self.disc_center / s
        return out

    def as_row(self, prefix: str = "") -> dict:
        row = {}
        for k, v in self.__dict__.items():
            if isinstance(v, complex):
                row[prefix + k + "_re"] = v.real
                row[prefix + k + "_im"] = v.imag
            else:
                row[prefix + k] = v
        for k, v in self.scaled().items():
            if isinstance(v, complex):
                row[prefix + "scaled_" + k + "_re"] = v.real
                row[prefix + "scaled_" + k + "_im"] = v.imag
            else:
                row[prefix + "scaled_" + k] = v
        return row


def _origin_distance(poly) -> float:
    """Distance from 0 to the polygon boundary."""
    if len(poly) == 0:
        return float("nan")
    if len(poly) == 1:
        return float(abs(poly[0]))
    best = np.inf
    for p, q in zip(poly, np.roll(poly, -1)):
        d = q - p
        t = 0.0 if d == 0 else np.clip(-(np.conj(d) * p).real / abs(d) ** 2, 0.0, 1.0)
        best = min(best, abs(p + t * d))
    return float(best)


def strip_angles(kappa2: float, sigma: float):
    """Rotation angles whose supports give max and min of Re z + (kappa2/sigma) Im z."""
    t = -np.arctan2(kappa2, sigma)
    return [t, t + np.pi]


def diagnostics(enc: FovEnclosure, h: float, d: int, kappa2: float | None = None,
                sigma_const: float | None = None) -> FovDiagnostics:
    poly = enc.polygon
    w = enc.witnesses
    if len(poly):
        re_min, re_max = float(poly.real.min()), float(poly.real.max())
        im_min, im_max = float(poly.imag.min()), float(poly.imag.max())
    else:
        re_min = re_max = im_min = im_max = float("nan")
    strip_min = strip_max = None
    if sigma_const is not None and sigma_const > 0 and kappa2 is not None:
        vals = w.real + (kappa2 / sigma_const) * w.imag
        strip_min, strip_max = float(vals.min()), float(vals.max())
    area, centroid = polygon_area_centroid(poly)
    radius = float(np.abs(poly - centroid).max(initial=0.0))
    inside = bool(enc.contains(0.0)[0])
    dist = 0.0 if inside else _origin_distance(poly)
    return FovDiagnostics(
        re_min, re_max, im_min, im_max,
        float(w.real.min()), float(w.real.max()), float(w.imag.min()), float(w.imag.max()),
        strip_min, strip_max, dist, inside, centroid, radius,
        bool((not inside) and radius < abs(centroid)), h**d)


def rotated(B: LinearOperator, theta: float) -> LinearOperator:
    return B.scaled(np.exp(1j * theta))


def hausdorff(a, b) -> float:
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if len(a) == 0 or len(b) == 0:
        return float("inf")
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def rotation_check(B, theta: float, n_angles: int = 64, eig_tol: float = 1e-10,
                   rtol: float = 1e-7, return_distance: bool = False):
    """Check F(e^{i theta} B) = e^{i theta} F(B) on the computed polygons.

    The rotated operator is swept at the shifted angles so both polygons are
    cut by the same family of lines.
    """
    B = as_operator(B)
    base = uniform_angles(n_angles)
    enc = compute_enclosure(B, angles=base, eig_tol=eig_tol)
    enc_rot = compute_enclosure(rotated(B, theta), angles=base - theta, eig_tol=eig_tol)
    dist = hausdorff(np.exp(1j * theta) * enc.polygon, enc_rot.polygon)
    ok = dist <= rtol * max(enc.scale, 1e-300)
    return (ok, dist) if return_distance else ok
