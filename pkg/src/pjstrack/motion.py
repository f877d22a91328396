"""Particle filter over affine states and candidate extraction from frames.

States are 6-vectors ``(tx, ty, rotation, scale, aspect, skew)``.  ``tx, ty``
is the target center in continuous frame coordinates, where pixel ``(r, c)``
covers ``[c, c+1) x [r, r+1)`` and has its center at ``(c + 0.5, r + 0.5)``.
``scale`` is the target width over the template side, so a state maps the
``T x T`` template grid onto the frame through

    A = R(rotation) @ [[scale, scale * skew], [0, scale * aspect]]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateWeightsError, InvalidStateError

STATE_FIELDS = ("tx", "ty", "rotation", "scale", "aspect", "skew")

#: luminance weights for RGB to gray conversion
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AffineState:
    tx: float
    ty: float
    rotation: float = 0.0
    scale: float = 1.0
    aspect: float = 1.0
    skew: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite(v) for v in self.as_array()):
            raise InvalidStateError(f"non-finite state {self}")
        if self.scale <= 0 or self.aspect <= 0:
            raise InvalidStateError(f"scale and aspect must be positive: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.rotation, self.scale, self.aspect, self.skew])

    @classmethod
    def from_array(cls, v) -> "AffineState":
        return cls(*(float(x) for x in v))

    @classmethod
    def from_box(cls, box, template_side: int) -> "AffineState":
        """Axis-aligned ``(x, y, w, h)`` box to a state with no rotation or skew."""
        x, y, w, h = (float(v) for v in box)
        return cls(x + w / 2, y + h / 2, 0.0, w / template_side, h / w, 0.0)


@dataclass
class ParticleSet:
    states: np.ndarray  # (N, 6)
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 6 or len(self.states) < 1:
            raise ValueError(f"states must be (N, 6) with N >= 1, got {self.states.shape}")
        if self.weights.shape != (len(self.states),):
            raise ValueError("one weight per particle required")

    def __len__(self) -> int:
        return len(self.states)

    @classmethod
    def replicate(cls, state: AffineState, n: int) -> "ParticleSet":
        return cls(np.tile(state.as_array(), (n, 1)), np.full(n, 1.0 / n))


def propagate(particles: ParticleSet, sigma, rng: np.random.Generator) -> ParticleSet:
    """Random-walk transition with independent Gaussian noise per component.

    Draws are taken particle by particle, component by component, so a given
    seed always perturbs the same particle the same way.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (6,) or np.any(sigma < 0):
        raise ConfigError(f"transition noise must be six nonnegative values, got {sigma}")
    n = len(particles)
    noise = rng.standard_normal((n, 6)) * sigma
    return ParticleSet(particles.states + noise, np.full(n, 1.0 / n))


def systematic_indices(weights: np.ndarray, u: float, n_out: int | None = None) -> np.ndarray:
    """Ancestor indices from systematic resampling.

    ``n_out`` offspring (default: one per particle) are placed at
    ``u + i / n_out`` on the cumulative weight function, ``u`` in [0, 1/n_out).
    """
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not np.isfinite(total) or total <= 0 or np.any(w < 0):
        raise DegenerateWeightsError("particle weights are all zero or invalid")
    n_out = len(w) if n_out is None else n_out
    cdf = np.cumsum(w) / total
    positions = u + np.arange(n_out) / n_out
    return np.minimum(np.searchsorted(cdf, positions, side="right"), len(w) - 1)


def resample(particles: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    n = len(particles)
    u = rng.uniform(0.0, 1.0 / n)
    idx = systematic_indices(particles.weights, u)
    return ParticleSet(particles.states[idx], np.full(n, 1.0 / n))


def affine_matrices(states: np.ndarray) -> np.ndarray:
    """Linear part of each state's template-to-frame map, shape ``(..., 2, 2)``."""
    states = np.asarray(states, dtype=float)
    rot, s, asp, skew = states[..., 2], states[..., 3], states[..., 4], states[..., 5]
    c, sn = np.cos(rot), np.sin(rot)
    # R @ [[s, s*skew], [0, s*asp]]
    A = np.empty(states.shape[:-1] + (2, 2))
    A[..., 0, 0] = c * s
    A[..., 0, 1] = c * s * skew - sn * s * asp
    A[..., 1, 0] = sn * s
    A[..., 1, 1] = sn * s * skew + c * s * asp
    return A


def template_grid(template_side: int) -> tuple[np.ndarray, np.ndarray]:
    """Template pixel-center offsets from the template midpoint (u, v), row-major."""
    off = np.arange(template_side) - (template_side - 1) / 2.0
    v, u = np.meshgrid(off, off, indexing="ij")
    return u.ravel(), v.ravel()


def bilinear_sample(frame: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``frame`` at continuous coordinates with clamp-to-edge bilinear interpolation."""
    h, w = frame.shape
    # continuous coordinate -> pixel index space (centers on integers)
    fx = np.clip(xs - 0.5, 0.0, w - 1.0)
    fy = np.clip(ys - 0.5, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(fx).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(fy).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = fx - x0
    ay = fy - y0
    top = frame[y0, x0] * (1 - ax) + frame[y0, x1] * ax
    bot = frame[y1, x0] * (1 - ax) + frame[y1, x1] * ax
    return top * (1 - ay) + bot * ay


def crop_warp_batch(frame: np.ndarray, states: np.ndarray, template_side: int) -> np.ndarray:
    """Warp every state's footprint into a ``T x T`` template; returns ``(P, T, T)``."""
    if template_side < 1:
        raise ConfigError(f"template_side must be >= 1, got {template_side}")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if not np.all(np.isfinite(states)):
        raise InvalidStateError("non-finite particle state")
    A = affine_matrices(states)
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    if np.any(det < 1e-9):
        raise InvalidStateError(f"degenerate affine warp (determinant {det.min():.3g})")
    u, v = template_grid(template_side)
    xs = A[:, 0, 0, None] * u + A[:, 0, 1, None] * v + states[:, 0, None]
    ys = A[:, 1, 0, None] * u + A[:, 1, 1, None] * v + states[:, 1, None]
    out = bilinear_sample(np.asarray(frame, dtype=float), xs, ys)
    return out.reshape(len(states), template_side, template_side)


def crop_warp(frame: np.ndarray, state: AffineState, template_side: int) -> np.ndarray:
    return crop_warp_batch(frame, state.as_array()[None], template_side)[0]


def partition(template: np.ndarray, patch_side: int) -> np.ndarray:
    """Split templates into non-overlapping square patches.

    Accepts a single ``(T, T)`` template or a stack ``(P, T, T)`` and returns
    ``(m, patch_side**2)`` or ``(P, m, patch_side**2)``.  Patches are ordered
    row-major over the patch grid and each is vectorized column-major.
    """
    template = np.asarray(template, dtype=float)
    single = template.ndim == 2
    if single:
        template = template[None]
    P, T, T2 = template.shape
    if T != T2 or patch_side < 1 or T % patch_side:
        raise ConfigError(f"template {T}x{T2} cannot be split into {patch_side}px patches")
    g = T // patch_side
    # (P, gr, pr, gc, pc) -> (P, gr, gc, pc, pr): column-major inside each patch
    blocks = template.reshape(P, g, patch_side, g, patch_side).transpose(0, 1, 3, 4, 2)
    out = blocks.reshape(P, g * g, patch_side * patch_side)
    return out[0] if single else out


def unpartition(patches: np.ndarray, template_side: int) -> np.ndarray:
    """Inverse of :func:`partition` for a single template."""
    patches = np.asarray(patches, dtype=float)
    m, M = patches.shape
    p = int(round(np.sqrt(M)))
    g = template_side // p
    if p * p != M or g * g != m:
        raise ConfigError("patch list does not tile the template")
    blocks = patches.reshape(g, g, p, p).transpose(0, 3, 1, 2)
    return blocks.reshape(template_side, template_side)


def state_to_box(state, template_side: int) -> tuple[float, float, float, float]:
    """Axis-aligned bounding box of the warped template corners."""
    s = state.as_array() if isinstance(state, AffineState) else np.asarray(state, dtype=float)
    A = affine_matrices(s)
    half = template_side / 2.0
    corners = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
    pts = corners @ A.T + s[:2]
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return float(x0), float(y0), float(x1 - x0), float(y1 - y0)


def to_gray(image: np.ndarray) -> np.ndarray:
    """8-bit gray or RGB(A) array to float luminance in [0, 1]."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 3:
        img = img[..., :3] @ LUMA
    return img / 255.0
