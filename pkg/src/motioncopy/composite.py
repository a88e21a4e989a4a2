"""Body-part crops, residual refinement and foreground/background fusion."""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data_io import Frame, Mask
from .errors import DataError

# part -> governing keypoint
PART_JOINTS = {
    "face": "nose",
    "left_hand": "l_wrist",
    "right_hand": "r_wrist",
    "left_foot": "l_ankle",
    "right_foot": "r_ankle",
}
PARTS = tuple(PART_JOINTS)
DEFAULT_PART_SIZE = 64


@dataclass(frozen=True)
class BodyPartRegion:
    part: str
    rect: tuple  # (x, y, w, h)

    def __post_init__(self):
        if self.part not in PART_JOINTS:
            raise DataError(f"unknown body part {self.part!r}")
        x, y, w, h = self.rect
        if w <= 0 or h <= 0 or x < 0 or y < 0:
            raise DataError(f"invalid region rect {self.rect}")

    def inside(self, frame_shape):
        x, y, w, h = self.rect
        return x + w <= frame_shape[1] and y + h <= frame_shape[0]

    def slices(self):
        x, y, w, h = self.rect
        return slice(y, y + h), slice(x, x + w)


def part_rect(center, part_size, frame_shape):
    """Square of side ``part_size`` centered at ``center``, shifted to fit the frame."""
    h, w = frame_shape[:2]
    side = min(int(part_size), h, w)
    cx, cy = center
    x0 = int(np.clip(round(cx - side / 2), 0, w - side))
    y0 = int(np.clip(round(cy - side / 2), 0, h - side))
    return x0, y0, side, side


def crop_parts(frame, pose, part_size=DEFAULT_PART_SIZE):
    """One square crop per detectable part (face, hands, feet).

    Parts whose governing keypoint is undetected are skipped.
    """
    if part_size <= 0:
        raise DataError("part_size must be positive")
    out = []
    for part, joint in PART_JOINTS.items():
        if not pose.detected(joint):
            continue
        region = BodyPartRegion(part, part_rect(pose.xy(joint), part_size, frame.shape))
        ys, xs = region.slices()
        out.append((region, Frame(frame.pixels[ys, xs], frame.role)))
    return out


def apply_residual(base, residual, region):
    """Saturating add of a signed residual inside ``region``; pixels outside are untouched."""
    residual = np.asarray(residual)
    x, y, w, h = region.rect
    if residual.shape != (h, w, 3):
        raise DataError(f"residual shape {residual.shape} does not match region {(h, w, 3)}")
    if not region.inside(base.shape):
        raise DataError(f"region {region.rect} exceeds frame {base.shape[:2]}")
    out = base.pixels.copy()
    ys, xs = region.slices()
    out[ys, xs] = _kernels.saturating_add(np.ascontiguousarray(out[ys, xs]),
                                          np.ascontiguousarray(residual.astype(np.int16)))
    return Frame(out, "refined")


def fuse(foreground, background, mask):
    """Per pixel ``round_half_even(m * fg + (1 - m) * bg)``.

    Computed as ``bg + m * (fg - bg)`` so that binary masks reproduce the
    chosen source exactly.
    """
    m = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    if foreground.shape != background.shape or m.shape != foreground.shape[:2]:
        raise DataError(
            f"dimension mismatch: fg {foreground.shape}, bg {background.shape}, mask {m.shape}")
    out = _kernels.fuse(foreground.pixels, background.pixels, np.ascontiguousarray(m))
    return Frame(out, "composite")
