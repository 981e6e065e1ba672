"""Affine spatial-transformer kernel: grid generation, bilinear sampling and
its analytic gradients.

Coordinate convention: a feature map of width ``W`` has pixel centers at
normalized x = -1 + (2j + 1)/W, j = 0..W-1 (same along y with ``H``).  The
affine map sends normalized target coordinates to normalized source
coordinates, which are converted to pixel units before the tent kernel
``max(0, 1 - |d|)`` is applied.  Samples outside the source contribute zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# source coords this close to an integer pixel are snapped onto it, so the
# identity transform reproduces its input exactly despite rounding
_SNAP = 1e-9


@dataclass(frozen=True)
class AffineParams:
    theta: tuple[float, float, float, float, float, float] = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    def __post_init__(self):
        th = tuple(float(v) for v in np.asarray(self.theta, dtype=float).ravel())
        if len(th) != 6:
            raise ValueError(f"theta needs 6 entries, got {len(th)}")
        if not all(np.isfinite(th)):
            raise ValueError("theta must be finite")
        object.__setattr__(self, "theta", th)

    @classmethod
    def from_components(cls, scale=(1.0, 1.0), skew=(0.0, 0.0), translation=(0.0, 0.0)) -> "AffineParams":
        (sx, sy), (kx, ky), (tx, ty) = scale, skew, translation
        return cls((sx, kx, tx, ky, sy, ty))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.theta).reshape(2, 3)

    @property
    def scale(self):
        return self.theta[0], self.theta[4]

    @property
    def skew(self):
        return self.theta[1], self.theta[3]

    @property
    def translation(self):
        return self.theta[2], self.theta[5]

    def det(self) -> float:
        a = self.matrix
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])

    def check_invertible(self, delta_min: float = 1e-8) -> None:
        if abs(self.det()) <= delta_min:
            raise ValueError(f"affine block is (nearly) singular: det = {self.det():.3g}")


def compose(first: AffineParams, second: AffineParams) -> AffineParams:
    """Affine whose grid equals sampling with ``first`` and then ``second``.

    Warping U by ``first`` gives V(p) = U(A1 p); warping V by ``second``
    gives U(A1 A2 p), so the composed matrix is A1 @ A2 in homogeneous form.
    """
    a1 = np.vstack([first.matrix, [0, 0, 1]])
    a2 = np.vstack([second.matrix, [0, 0, 1]])
    return AffineParams(tuple((a1 @ a2)[:2].ravel()))


@dataclass(frozen=True)
class SamplingGrid:
    xs: np.ndarray  # normalized source x, shape (H, W)
    ys: np.ndarray
    xt: np.ndarray  # normalized target lattice the grid was generated from
    yt: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.xs.shape


def target_lattice(out_shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    h, w = out_shape
    xs = -1 + (2 * np.arange(w) + 1) / w
    ys = -1 + (2 * np.arange(h) + 1) / h
    return np.meshgrid(xs, ys)


def generate_grid(theta: AffineParams, out_shape: tuple[int, int]) -> SamplingGrid:
    xt, yt = target_lattice(out_shape)
    t = theta.theta
    xs = t[0] * xt + t[1] * yt + t[2]
    ys = t[3] * xt + t[4] * yt + t[5]
    return SamplingGrid(xs, ys, xt, yt)


def _as_map(U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim == 2:
        U = U[..., None]
    if U.ndim != 3 or U.shape[0] < 1 or U.shape[1] < 1:
        raise ValueError(f"feature map must be (H, W, C), got shape {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ValueError("feature map has non-finite entries")
    return U


def to_pixel(coord: np.ndarray, size: int) -> np.ndarray:
    p = ((coord + 1) * size - 1) / 2
    r = np.round(p)
    return np.where(np.abs(p - r) < _SNAP, r, p)


def _corners(px: np.ndarray, py: np.ndarray, h: int, w: int):
    x0 = np.floor(px).astype(int)
    y0 = np.floor(py).astype(int)
    fx = px - x0
    fy = py - y0
    for dy, wy, sy in ((0, 1 - fy, -1.0), (1, fy, 1.0)):
        for dx, wx, sx in ((0, 1 - fx, -1.0), (1, fx, 1.0)):
            xi, yi = x0 + dx, y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            # (wx, wy) are the tent weights; (sx * wy, sy * wx) their x/y slopes
            yield np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1), valid, wx, wy, sx, sy


def sample(U, G: SamplingGrid) -> np.ndarray:
    """Bilinear sampling V_i = sum_nm U_nm k(x_i - m) k(y_i - n)."""
    U = _as_map(U)
    h, w, _ = U.shape
    px, py = to_pixel(G.xs, w), to_pixel(G.ys, h)
    V = np.zeros(G.shape + (U.shape[2],))
    for yi, xi, valid, wx, wy, _, _ in _corners(px, py, h, w):
        V += np.where(valid, wx * wy, 0.0)[..., None] * U[yi, xi]
    return V


def sample_grad(U, G: SamplingGrid, upstream) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum(upstream * sample(U, G))`` w.r.t. U and theta.

    The kernel is piecewise linear, so the theta gradient is the one-sided
    derivative on the piece the sample lies in (exact away from integer
    pixel coordinates).
    """
    U = _as_map(U)
    up = np.asarray(upstream, dtype=float)
    if up.ndim == 2:
        up = up[..., None]
    h, w, c = U.shape
    if up.shape != G.shape + (c,):
        raise ValueError(f"upstream shape {up.shape} does not match output {G.shape + (c,)}")
    px, py = to_pixel(G.xs, w), to_pixel(G.ys, h)
    dU = np.zeros_like(U)
    gpx = np.zeros(G.shape)
    gpy = np.zeros(G.shape)
    for yi, xi, valid, wx, wy, sx, sy in _corners(px, py, h, w):
        wgt = np.where(valid, wx * wy, 0.0)
        np.add.at(dU, (yi, xi), wgt[..., None] * up)
        dot = np.where(valid, np.sum(U[yi, xi] * up, axis=-1), 0.0)
        gpx += sx * wy * dot
        gpy += sy * wx * dot
    gxs = gpx * w / 2
    gys = gpy * h / 2
    dtheta = np.array([
        np.sum(gxs * G.xt), np.sum(gxs * G.yt), np.sum(gxs),
        np.sum(gys * G.xt), np.sum(gys * G.yt), np.sum(gys),
    ])
    return dU, dtheta


def transform(U, theta: AffineParams, out_shape: tuple[int, int] | None = None) -> np.ndarray:
    U = _as_map(U)
    return sample(U, generate_grid(theta, out_shape or U.shape[:2]))
