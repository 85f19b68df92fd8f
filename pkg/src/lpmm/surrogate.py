"""Desk-scale stand-in for a talking-head model.

A seeded linear pose encoder with orthonormal rows maps centered landmark
vectors to a latent pose vector; its transpose decodes back; a
differentiable Gaussian-splat rasterizer turns decoded points into a
single-channel image. Everything is analytic, so the adaptor's training
losses have closed-form gradients and known optima.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError
from .landmarks import LandmarkSet

_ROW_ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class RasterConfig:
    height: int = 64
    width: int = 64
    sigma: float = 0.02  # splat stddev in canonical units

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise DomainError("raster must be at least 8x8", code="bad_raster_config")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive", code="bad_raster_config")


@dataclass(frozen=True, eq=False)
class SurrogateStack:
    """Seeded linear pose encoder/decoder plus rasterizer settings."""

    encode_matrix: np.ndarray  # (w, 2n), orthonormal rows
    anchor: np.ndarray         # (2n,), the encoder's centering point
    raster: RasterConfig
    seed: int

    def __post_init__(self):
        for name in ("encode_matrix", "anchor"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.encode_matrix.ndim != 2:
            raise FormatError("encode matrix must be 2-D", code="bad_surrogate_shape")
        w, dim = self.encode_matrix.shape
        if w > dim:
            raise DomainError(f"latent dimension w={w} exceeds 2n={dim}", code="bad_latent_dim")
        if self.anchor.shape != (dim,):
            raise FormatError("anchor dimension does not match encoder", code="bad_surrogate_shape")
        gram = self.encode_matrix @ self.encode_matrix.T
        if np.max(np.abs(gram - np.eye(w))) > _ROW_ORTHO_TOL:
            raise FormatError("encoder rows not orthonormal", code="encoder_not_orthonormal")

    @property
    def w(self) -> int:
        return self.encode_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.encode_matrix.shape[1] // 2


def make_surrogate(seed: int, w: int, n: int, raster_config: RasterConfig, anchor) -> SurrogateStack:
    """Build the stack from a seed; deterministic for a fixed seed.

    The encoder is the first w rows of the orthonormal factor of a seeded
    standard-normal (2n x 2n) matrix; the anchor is the centering landmark
    vector (normally the model mean).
    """
    dim = 2 * n
    if w > dim:
        raise DomainError(f"latent dimension w={w} exceeds 2n={dim}", code="bad_latent_dim")
    anchor = np.asarray(anchor, dtype=np.float64)
    if anchor.shape == (n, 2):
        anchor = anchor.reshape(-1)
    if anchor.shape != (dim,):
        raise FormatError(f"anchor must have dimension {dim}", code="bad_surrogate_shape")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return SurrogateStack(encode_matrix=q[:w], anchor=anchor, raster=raster_config, seed=int(seed))


def encode_landmarks(stack: SurrogateStack, lms: LandmarkSet) -> np.ndarray:
    """Latent pose vector v = E (vec(L) - anchor)."""
    if lms.n != stack.n:
        raise DomainError(f"landmark count {lms.n} does not match stack n={stack.n}", code="point_count")
    return stack.encode_matrix @ (lms.vector - stack.anchor)


def encode_batch(stack: SurrogateStack, vectors: np.ndarray) -> np.ndarray:
    """Encode stacked flattened landmarks (N, 2n) -> (N, w)."""
    return (vectors - stack.anchor) @ stack.encode_matrix.T


def decode_latent(stack: SurrogateStack, v: np.ndarray) -> LandmarkSet:
    """Landmarks from a latent vector: anchor + E^T v."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (stack.w,):
        raise DomainError(f"latent must have dimension {stack.w}, got {v.shape}", code="bad_latent_dim")
    return LandmarkSet.from_vector(stack.anchor + stack.encode_matrix.T @ v)


def decode_points_batch(stack: SurrogateStack, vs: np.ndarray) -> np.ndarray:
    """Latents (B, w) -> decoded points (B, n, 2)."""
    vecs = stack.anchor + vs @ stack.encode_matrix
    return vecs.reshape(vs.shape[0], stack.n, 2)


def _pixel_centers(cfg: RasterConfig) -> tuple[np.ndarray, np.ndarray]:
    xs = (np.arange(cfg.width) + 0.5) / cfg.width
    ys = (np.arange(cfg.height) + 0.5) / cfg.height
    return xs, ys


def _axis_factors(coords: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-(center - coord)^2 / (2 sigma^2)) for every (point, center) pair."""
    diff = centers - coords[..., None]
    return np.exp(-(diff**2) / (2.0 * sigma**2))


def render_points(points: np.ndarray, cfg: RasterConfig) -> np.ndarray:
    """Splat a batch of point sets (B, n, 2) into rasters (B, H, W).

    pixel(r, c) = sum_j exp(-||center_rc - point_j||^2 / (2 sigma^2));
    points outside the unit frame still contribute (no clipping). The
    squared distance factorizes per axis, which is what makes the batched
    training loop cheap.
    """
    xs, ys = _pixel_centers(cfg)
    ex = _axis_factors(points[..., 0], xs, cfg.sigma)  # (B, n, W)
    ey = _axis_factors(points[..., 1], ys, cfg.sigma)  # (B, n, H)
    return np.matmul(ey.transpose(0, 2, 1), ex)  # (B, H, W)


def render_points_vjp(points: np.ndarray, cfg: RasterConfig, cotangents: np.ndarray) -> np.ndarray:
    """d<cotangent, raster>/d points for a batch; returns (B, n, 2)."""
    xs, ys = _pixel_centers(cfg)
    sig2 = cfg.sigma**2
    ex = _axis_factors(points[..., 0], xs, cfg.sigma)
    ey = _axis_factors(points[..., 1], ys, cfg.sigma)
    # t[b,j,c] = sum_r U[b,r,c] ey[b,j,r];  s[b,j,r] = sum_c U[b,r,c] ex[b,j,c]
    t = np.matmul(ey, cotangents)                            # (B, n, W)
    s = np.matmul(ex, cotangents.transpose(0, 2, 1))         # (B, n, H)
    gx = (xs - points[..., 0][..., None]) / sig2             # (B, n, W)
    gy = (ys - points[..., 1][..., None]) / sig2             # (B, n, H)
    dx = np.sum(t * ex * gx, axis=-1)
    dy = np.sum(s * ey * gy, axis=-1)
    return np.stack([dx, dy], axis=-1)


def render_raster(stack: SurrogateStack, v: np.ndarray) -> np.ndarray:
    """Decode the latent and splat the points onto the configured grid."""
    pts = decode_latent(stack, np.asarray(v, dtype=np.float64)).points
    return render_points(pts[None], stack.raster)[0]


@dataclass(frozen=True, eq=False)
class RenderJacobian:
    """Derivative of render_raster at a fixed latent, as JVP/VJP closures."""

    stack: SurrogateStack
    v: np.ndarray
    points: np.ndarray  # decoded (n, 2)

    def jvp(self, dv: np.ndarray) -> np.ndarray:
        """Raster-space directional derivative for a latent tangent (w,)."""
        dv = np.asarray(dv, dtype=np.float64)
        if dv.shape != (self.stack.w,):
            raise DomainError(f"tangent must have dimension {self.stack.w}", code="bad_latent_dim")
        cfg = self.stack.raster
        xs, ys = _pixel_centers(cfg)
        sig2 = cfg.sigma**2
        dpts = (self.stack.encode_matrix.T @ dv).reshape(-1, 2)
        ex = _axis_factors(self.points[:, 0], xs, cfg.sigma)  # (n, W)
        ey = _axis_factors(self.points[:, 1], ys, cfg.sigma)  # (n, H)
        gx = (xs - self.points[:, 0][:, None]) / sig2
        gy = (ys - self.points[:, 1][:, None]) / sig2
        dr_x = ey.T @ (ex * gx * dpts[:, 0][:, None])
        dr_y = (ey * gy * dpts[:, 1][:, None]).T @ ex
        return dr_x + dr_y

    def vjp(self, cotangent: np.ndarray) -> np.ndarray:
        """Latent-space gradient of <cotangent, raster>; returns (w,)."""
        cotangent = np.asarray(cotangent, dtype=np.float64)
        cfg = self.stack.raster
        if cotangent.shape != (cfg.height, cfg.width):
            raise DomainError("cotangent shape does not match raster", code="bad_raster_shape")
        dpts = render_points_vjp(self.points[None], cfg, cotangent[None])[0]
        return self.stack.encode_matrix @ dpts.reshape(-1)


def render_jacobian(stack: SurrogateStack, v: np.ndarray) -> RenderJacobian:
    v = np.asarray(v, dtype=np.float64)
    pts = decode_latent(stack, v).points
    return RenderJacobian(stack=stack, v=v, points=np.asarray(pts))


def raster_to_pgm(raster: np.ndarray) -> bytes:
    """ASCII P2 graymap dump for inspection; the scale factor applied to
    reach 16-bit range is recorded in a comment."""
    raster = np.asarray(raster, dtype=np.float64)
    peak = float(raster.max()) if raster.size else 0.0
    scale = 65535.0 / peak if peak > 0 else 1.0
    values = np.clip(np.rint(raster * scale), 0, 65535).astype(np.int64)
    h, w = values.shape
    lines = ["P2", f"# scale {scale!r}", f"{w} {h}", "65535"]
    lines.extend(" ".join(str(v) for v in row) for row in values)
    return ("\n".join(lines) + "\n").encode("ascii")
