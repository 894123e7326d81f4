"""Minimal deterministic SVG output: convex set outlines, point sets and contour plots."""

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _fmt(v):
    return f"{v:.4f}".rstrip("0").rstrip(".")


class Scene:
    """A 2-D drawing in world coordinates, flipped to SVG's downward y axis."""

    def __init__(self, lo, hi, size=480, margin=0.05):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        pad = margin * float(np.max(hi - lo))
        self.lo = lo - pad
        self.hi = hi + pad
        span = float(np.max(self.hi - self.lo)) or 1.0
        self.scale = size / span
        self.width = (self.hi[0] - self.lo[0]) * self.scale
        self.height = (self.hi[1] - self.lo[1]) * self.scale
        self.items = []

    def _xy(self, p):
        return (p[0] - self.lo[0]) * self.scale, (self.hi[1] - p[1]) * self.scale

    def polygon(self, pts, color, opacity=0.25, label=None):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in map(self._xy, pts))
        title = f"<title>{label}</title>" if label else ""
        self.items.append(
            f'<polygon points="{coords}" fill="{color}" fill-opacity="{opacity}" stroke="{color}" stroke-width="1">{title}</polygon>'
        )

    def segment(self, p, q, color="#333333", width=1.0):
        (x1, y1), (x2, y2) = self._xy(p), self._xy(q)
        self.items.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" stroke="{color}" stroke-width="{width}"/>')

    def point(self, p, color="#000000", r=3.0, label=None):
        x, y = self._xy(p)
        title = f"<title>{label}</title>" if label else ""
        self.items.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{color}">{title}</circle>')

    def to_string(self):
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(self.width)}" height="{_fmt(self.height)}" '
            f'viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">'
        )
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


def convex_outline(member, origin, reach, n_angles=180, iters=48):
    """Boundary of a convex set containing ``origin`` by bisection along rays.

    ``member`` maps an ``(k, 2)`` array to booleans; ``reach`` bounds the
    set's extent from ``origin``.
    """
    origin = np.asarray(origin, dtype=float)
    theta = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lo = np.zeros(n_angles)
    hi = np.full(n_angles, float(reach))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = np.asarray(member(origin + mid[:, None] * dirs), dtype=bool)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return origin + lo[:, None] * dirs


def contour_segments(field, level):
    """Marching-squares segments (in index coordinates) of ``field == level``."""
    F = np.asarray(field, dtype=float)
    segs = []
    m0, m1 = F.shape
    for i in range(m0 - 1):
        for j in range(m1 - 1):
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            vals = [F[c] for c in corners]
            pts = []
            for k in range(4):
                (p, vp), (q, vq) = (corners[k], vals[k]), (corners[(k + 1) % 4], vals[(k + 1) % 4])
                if (vp < level) != (vq < level):
                    s = (level - vp) / (vq - vp)
                    pts.append((p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])))
            for k in range(0, len(pts) - 1, 2):
                segs.append((pts[k], pts[k + 1]))
    return segs


def contour_svg(field, n_levels=12):
    """Contour plot of a grid field on the unit square (``field[i, j]`` at ``(i h, j h)``)."""
    F = np.asarray(field, dtype=float)
    m = F.shape[0]
    h = 1.0 / (m - 1)
    scene = Scene((0.0, 0.0), (1.0, 1.0))
    scene.polygon([(0, 0), (1, 0), (1, 1), (0, 1)], "#999999", opacity=0.0)
    lo, hi = float(F.min()), float(F.max())
    if hi > lo:
        for k, level in enumerate(np.linspace(lo, hi, n_levels + 2)[1:-1]):
            color = PALETTE[k % len(PALETTE)]
            for p, q in contour_segments(F, level):
                scene.segment((p[0] * h, p[1] * h), (q[0] * h, q[1] * h), color)
    return scene.to_string()
