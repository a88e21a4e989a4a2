"""Face orientation matching and pool-based face blending.

A face's orientation is summarized by six 2-D difference vectors between
the eyes, nose and ears. Pool faces with the closest orientation are mixed
into the generated face, weighted by their similarity.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .data_io import JOINT, Frame, PoseKeypoints
from .errors import ConfigError, DataError, FaceNotExtractable

FACE_JOINTS = ("nose", "r_eye", "l_eye", "r_ear", "l_ear")

# (from, to) for v1..v6
FIELD_EDGES = (
    ("r_eye", "l_eye"),
    ("l_eye", "nose"),
    ("r_eye", "nose"),
    ("r_ear", "l_ear"),
    ("nose", "r_ear"),
    ("nose", "l_ear"),
)

DEFAULT_FACE_SIZE = 64
CROP_SCALE = 2.5


@dataclass(frozen=True)
class FaceVectorField:
    """Six 2-D vectors, stored as a read-only ``(6, 2)`` array."""

    v: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=np.float64)
        if v.shape != (6, 2):
            raise DataError(f"face vector field must be (6, 2), got {v.shape}")
        if not np.isfinite(v).all():
            raise DataError("face vector field has non-finite components")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)


def extract_field(pose: PoseKeypoints) -> FaceVectorField:
    for name in FACE_JOINTS:
        if not pose.detected(name):
            raise FaceNotExtractable(name, JOINT[name])
    pts = {name: pose.xy(name) for name in FACE_JOINTS}
    return FaceVectorField(np.stack([pts[dst] - pts[src] for src, dst in FIELD_EDGES]))


def similarity(a: FaceVectorField, b: FaceVectorField, epsilon: float = 1e-8) -> float:
    """``1 / (epsilon + sum_i ||a.v_i - b.v_i||_2)``."""
    gaps = np.sqrt(((a.v - b.v) ** 2).sum(axis=1))
    return float(1.0 / (epsilon + gaps.sum()))


@dataclass(frozen=True)
class BlendConfig:
    m: int = 3
    alpha: float = 0.5
    beta: float = 0.5
    epsilon: float = 1e-8

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"candidate count m must be >= 1, got {self.m}")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError("need alpha >= 0, beta >= 0 and alpha + beta > 0")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")


@dataclass(frozen=True)
class FacePoolEntry:
    field: FaceVectorField
    face_image: Frame
    frame_index: int


def select_candidates(query, pool, cfg=BlendConfig()):
    """Top ``min(m, len(pool))`` entries by similarity, descending.

    Ties on similarity go to the smaller ``frame_index``.
    """
    if not pool:
        raise DataError("face pool is empty")
    scored = [(entry, similarity(query, entry.field, cfg.epsilon)) for entry in pool]
    scored.sort(key=lambda es: (-es[1], es[0].frame_index))
    return scored[: min(cfg.m, len(scored))]


def candidate_weights(candidates):
    s = np.array([score for _, score in candidates], dtype=np.float64)
    return s / s.sum()


def blend(generated, candidates, cfg=BlendConfig()):
    """Per pixel ``alpha * sum_i w_i f_i + beta * f`` with ``w_i = S_i / sum_j S_j``.

    The result is clamped to [0, 255] and rounded half-to-even.
    """
    if not candidates:
        raise DataError("no candidates to blend")
    gen = generated.pixels if isinstance(generated, Frame) else np.asarray(generated)
    for entry, _ in candidates:
        if entry.face_image.shape != gen.shape:
            raise DataError(
                f"face image {entry.face_image.shape} does not match generated face {gen.shape}")
    weights = candidate_weights(candidates)
    mix = np.zeros(gen.shape, dtype=np.float64)
    for w, (entry, _) in zip(weights, candidates):
        mix += w * entry.face_image.pixels
    out = cfg.alpha * mix + cfg.beta * gen.astype(np.float64)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return Frame(out, "refined")


# -- crops ---------------------------------------------------------------


def face_crop_rect(pose, frame_shape, scale=CROP_SCALE):
    """Square ``(x, y, side, side)`` centered on the nose, side = scale * eye distance.

    The square is shifted, not shrunk, to stay inside the frame; it only
    shrinks if it is larger than the frame itself.
    """
    for name in ("nose", "r_eye", "l_eye"):
        if not pose.detected(name):
            raise FaceNotExtractable(name, JOINT[name])
    h, w = frame_shape[:2]
    eye_dist = float(np.linalg.norm(pose.xy("l_eye") - pose.xy("r_eye")))
    side = int(round(scale * eye_dist))
    side = max(2, min(side, h, w))
    cx, cy = pose.xy("nose")
    x0 = int(np.clip(round(cx - side / 2), 0, w - side))
    y0 = int(np.clip(round(cy - side / 2), 0, h - side))
    return x0, y0, side, side


def resize(pixels, width, height):
    """Bilinear resample of an ``(h, w, 3)`` uint8 image, done in float per channel."""
    pixels = np.asarray(pixels)
    if pixels.shape[1] == width and pixels.shape[0] == height:
        return pixels.copy()
    chans = []
    for c in range(pixels.shape[2]):
        img = Image.fromarray(pixels[..., c].astype(np.float32), mode="F")
        chans.append(np.asarray(img.resize((width, height), Image.BILINEAR)))
    out = np.stack(chans, axis=-1)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def crop_face(frame, pose, size=DEFAULT_FACE_SIZE):
    """Crop the face square and resample it to ``size x size`` (pool canonical form)."""
    x, y, side, _ = face_crop_rect(pose, frame.shape)
    return Frame(resize(frame.pixels[y:y + side, x:x + side], size, size), "ground_truth")


def make_pool_entry(frame, pose, size=DEFAULT_FACE_SIZE):
    return FacePoolEntry(extract_field(pose), crop_face(frame, pose, size), pose.frame_index)


def enhance_face(frame, pose, pool, cfg=BlendConfig()):
    """Blend the best-matching pool faces into the face region of ``frame``.

    Pool faces are resampled to the crop size so the generated face itself
    is never resampled. Returns ``(new_frame, chosen)`` where ``chosen`` is
    the list of ``(entry, similarity, weight)``.
    """
    query = extract_field(pose)
    candidates = select_candidates(query, pool, cfg)
    x, y, side, _ = face_crop_rect(pose, frame.shape)
    region = frame.pixels[y:y + side, x:x + side]
    scaled = [
        (FacePoolEntry(e.field, Frame(resize(e.face_image.pixels, side, side), e.face_image.role),
                       e.frame_index), s)
        for e, s in candidates
    ]
    face = blend(region, scaled, cfg)
    out = frame.pixels.copy()
    out[y:y + side, x:x + side] = face.pixels
    weights = candidate_weights(candidates)
    chosen = [(e, s, float(w)) for (e, s), w in zip(candidates, weights)]
    return Frame(out, "refined"), chosen
