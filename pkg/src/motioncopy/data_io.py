"""On-disk data model: poses, frames, masks, feature tensors and residuals.

Joint layout is the 18-joint COCO/OpenPose ordering::

    0 nose      1 neck       2 r_shoulder  3 r_elbow   4 r_wrist
    5 l_shoulder 6 l_elbow   7 l_wrist     8 r_hip     9 r_knee
    10 r_ankle  11 l_hip     12 l_knee     13 l_ankle  14 r_eye
    15 l_eye    16 r_ear     17 l_ear

A joint with confidence 0 is undetected; its coordinates are kept but
ignored by every consumer.
"""

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

NUM_JOINTS = 18
JOINT_NAMES = (
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist", "r_hip", "r_knee",
    "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye",
    "l_eye", "r_ear", "l_ear",
)
JOINT = {name: i for i, name in enumerate(JOINT_NAMES)}

FRAME_ROLES = ("ground_truth", "generated", "residual", "refined", "background", "composite")

FEATURE_MAGIC = b"FTNS"
FEATURE_VERSION = 1
FEATURE_SOURCES = {0: "raw", 1: "phi", 2: "psi"}
FEATURE_SOURCE_CODES = {v: k for k, v in FEATURE_SOURCES.items()}
_FEATURE_HEADER = struct.Struct("<4sIBI")

RESIDUAL_MAGIC = b"RESD"
_RESIDUAL_HEADER = struct.Struct("<4sII")


# -- atomic writes -------------------------------------------------------


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` via a temp file in the same directory and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


# -- poses ---------------------------------------------------------------


@dataclass(frozen=True)
class PoseKeypoints:
    """18 ``(x, y, confidence)`` joints for one frame.

    ``joints`` is a read-only ``(18, 3)`` float64 array.
    """

    joints: np.ndarray
    frame_index: int

    def __post_init__(self):
        joints = np.array(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise DataError(f"frame {self.frame_index}: joints must be (x, y, confidence) triples",
                            frame_index=self.frame_index)
        if joints.shape[0] != NUM_JOINTS:
            raise DataError(
                f"frame {self.frame_index}: expected {NUM_JOINTS} joints, got {joints.shape[0]}",
                frame_index=self.frame_index)
        if not isinstance(self.frame_index, (int, np.integer)) or self.frame_index < 0:
            raise DataError(f"frame_index must be a non-negative integer, got {self.frame_index!r}")
        bad = ~np.isfinite(joints)
        if bad.any():
            j = int(np.argwhere(bad)[0, 0])
            raise DataError(f"frame {self.frame_index}, joint {j}: non-finite value",
                            frame_index=self.frame_index, joint_index=j)
        conf = joints[:, 2]
        out_of_range = (conf < 0) | (conf > 1)
        if out_of_range.any():
            j = int(np.argmax(out_of_range))
            raise DataError(f"frame {self.frame_index}, joint {j}: confidence {conf[j]} outside [0, 1]",
                            frame_index=self.frame_index, joint_index=j)
        joints.setflags(write=False)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "frame_index", int(self.frame_index))

    def detected(self, joint):
        """True when ``joint`` (index or name) has nonzero confidence."""
        if isinstance(joint, str):
            joint = JOINT[joint]
        return bool(self.joints[joint, 2] > 0)

    def xy(self, joint):
        if isinstance(joint, str):
            joint = JOINT[joint]
        return self.joints[joint, :2].copy()

    @property
    def undetected(self):
        """Boolean mask of joints with confidence 0."""
        return self.joints[:, 2] == 0

    def translated(self, dx, dy):
        joints = self.joints.copy()
        joints[:, 0] += dx
        joints[:, 1] += dy
        return PoseKeypoints(joints, self.frame_index)

    def to_json_obj(self):
        return {"frame_index": self.frame_index, "joints": self.joints.tolist()}


def parse_pose_sequence(obj, *, path=None):
    """Build a sorted list of :class:`PoseKeypoints` from the decoded pose JSON."""
    if not isinstance(obj, dict) or not isinstance(obj.get("frames"), list):
        raise DataError('pose JSON must be an object with a "frames" list', path=path)
    frames = []
    for pos, item in enumerate(obj["frames"]):
        if not isinstance(item, dict):
            raise DataError(f"frame entry {pos} is not an object", path=path)
        idx = item.get("frame_index")
        if isinstance(idx, bool) or not isinstance(idx, int) or idx < 0:
            raise DataError(f"frame entry {pos}: frame_index must be a non-negative integer", path=path)
        joints = item.get("joints")
        if not isinstance(joints, list):
            raise DataError(f"frame {idx}: joints must be a list", path=path, frame_index=idx)
        if len(joints) != NUM_JOINTS:
            raise DataError(f"frame {idx}: expected {NUM_JOINTS} joints, got {len(joints)}",
                            path=path, frame_index=idx)
        for j, triple in enumerate(joints):
            if not isinstance(triple, list) or len(triple) != 3:
                raise DataError(f"frame {idx}, joint {j}: expected [x, y, confidence]",
                                path=path, frame_index=idx, joint_index=j)
            for v in triple:
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise DataError(f"frame {idx}, joint {j}: non-finite or non-numeric coordinate",
                                    path=path, frame_index=idx, joint_index=j)
        try:
            frames.append(PoseKeypoints(np.asarray(joints, dtype=np.float64), idx))
        except DataError as exc:
            exc.path = path
            raise
    if not frames:
        raise DataError("pose file contains no frames", path=path)
    frames.sort(key=lambda p: p.frame_index)
    seen = [p.frame_index for p in frames]
    if len(set(seen)) != len(seen):
        raise DataError("duplicate frame_index in pose file", path=path)
    return frames


def load_pose_sequence(path):
    """Load a pose JSON file; frames come back sorted by ``frame_index``."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON: {exc}", path=path) from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"not UTF-8: {exc}", path=path) from exc
    return parse_pose_sequence(obj, path=path)


def save_pose_sequence(poses, path):
    obj = {"frames": [p.to_json_obj() for p in sorted(poses, key=lambda p: p.frame_index)]}
    atomic_write_text(path, json.dumps(obj))


# -- frames & masks ------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    """An 8-bit RGB raster of shape ``(height, width, 3)``."""

    pixels: np.ndarray
    role: str = "generated"

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"frame pixels must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise DataError("degenerate frame: zero width or height")
        if px.dtype != np.uint8:
            if not np.issubdtype(px.dtype, np.integer) or px.min() < 0 or px.max() > 255:
                raise DataError(f"frame pixels must be 8-bit samples, got dtype {px.dtype}")
            px = px.astype(np.uint8)
        if self.role not in FRAME_ROLES:
            raise DataError(f"unknown frame role {self.role!r}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape

    def with_pixels(self, pixels, role=None):
        return Frame(pixels, role or self.role)


@dataclass(frozen=True)
class Mask:
    """Per-pixel foreground weight in [0, 1], stored as 8-bit (0 -> 0.0, 255 -> 1.0)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise DataError(f"mask must be a non-empty 2-D array, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise DataError("mask contains non-finite values")
        v = np.clip(v, 0.0, 1.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_uint8(cls, samples):
        return cls(np.asarray(samples, dtype=np.float64) / 255.0)

    def to_uint8(self):
        return np.rint(self.values * 255.0).astype(np.uint8)

    @property
    def shape(self):
        return self.values.shape


def _open_png(path, mode):
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != mode:
                img = img.convert(mode)
            return np.asarray(img)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise DataError(f"cannot decode PNG: {exc}", path=path) from exc


def save_frame(frame, path):
    """Write ``frame`` as an 8-bit RGB PNG (lossless)."""
    if not isinstance(frame, Frame):
        frame = Frame(frame)
    buf = _png_bytes(Image.fromarray(np.asarray(frame.pixels), mode="RGB"))
    try:
        atomic_write_bytes(path, buf)
    except OSError as exc:
        raise DataError(f"cannot write frame: {exc}", path=path) from exc


def load_frame(path, role="generated"):
    return Frame(_open_png(path, "RGB"), role)


def save_mask(mask, path):
    buf = _png_bytes(Image.fromarray(mask.to_uint8(), mode="L"))
    try:
        atomic_write_bytes(path, buf)
    except OSError as exc:
        raise DataError(f"cannot write mask: {exc}", path=path) from exc


def load_mask(path):
    return Mask.from_uint8(_open_png(path, "L"))


def _png_bytes(img):
    import io

    bio = io.BytesIO()
    img.save(bio, format="PNG")
    return bio.getvalue()


# -- feature tensors -----------------------------------------------------


@dataclass(frozen=True)
class FeatureTensor:
    values: np.ndarray
    source: str = "raw"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size == 0:
            raise DataError("feature tensor must have dim > 0")
        bad = ~np.isfinite(v)
        if bad.any():
            i = int(np.argmax(bad))
            raise DataError(f"feature tensor element {i} is not finite", element_index=i)
        if self.source not in FEATURE_SOURCE_CODES:
            raise DataError(f"unknown feature source {self.source!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.values.size


def encode_feature_tensor(tensor):
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION,
                                  FEATURE_SOURCE_CODES[tensor.source], tensor.dim)
    return header + tensor.values.astype("<f4").tobytes()


def decode_feature_tensor(data, *, path=None):
    if len(data) < _FEATURE_HEADER.size:
        raise DataError(f"truncated header: {len(data)} bytes", path=path, offset=len(data))
    magic, version, code, dim = _FEATURE_HEADER.unpack_from(data, 0)
    if magic != FEATURE_MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {FEATURE_MAGIC!r}", path=path, offset=0)
    if version != FEATURE_VERSION:
        raise DataError(f"unsupported version {version}", path=path, offset=4)
    if code not in FEATURE_SOURCES:
        raise DataError(f"unknown source code {code}", path=path, offset=8)
    if dim == 0:
        raise DataError("dim must be > 0", path=path, offset=9)
    start = _FEATURE_HEADER.size
    need = start + 4 * dim
    if len(data) < need:
        raise DataError(f"truncated payload: expected {4 * dim} bytes, got {len(data) - start}",
                        path=path, offset=len(data))
    if len(data) > need:
        raise DataError(f"{len(data) - need} trailing bytes after payload", path=path, offset=need)
    values = np.frombuffer(data, dtype="<f4", count=dim, offset=start)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        raise DataError(f"element {i} is not finite", path=path, offset=start + 4 * i,
                        element_index=i)
    return FeatureTensor(values.astype(np.float64), FEATURE_SOURCES[code])


def load_feature_tensor(path):
    """Read a binary ``FTNS`` tensor file."""
    return decode_feature_tensor(Path(path).read_bytes(), path=path)


def save_feature_tensor(tensor, path):
    atomic_write_bytes(path, encode_feature_tensor(tensor))


# -- residuals -----------------------------------------------------------


def encode_residual(residual):
    r = np.asarray(residual)
    if r.ndim != 3 or r.shape[2] != 3 or r.shape[0] == 0 or r.shape[1] == 0:
        raise DataError(f"residual must have shape (h, w, 3), got {r.shape}")
    if r.min() < -32768 or r.max() > 32767:
        raise DataError("residual values exceed the int16 range")
    h, w = r.shape[:2]
    return _RESIDUAL_HEADER.pack(RESIDUAL_MAGIC, w, h) + r.astype("<i2").tobytes()


def decode_residual(data, *, path=None):
    if len(data) < _RESIDUAL_HEADER.size:
        raise DataError("truncated residual header", path=path, offset=len(data))
    magic, w, h = _RESIDUAL_HEADER.unpack_from(data, 0)
    if magic != RESIDUAL_MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {RESIDUAL_MAGIC!r}", path=path, offset=0)
    if w == 0 or h == 0:
        raise DataError("degenerate residual dimensions", path=path, offset=4)
    start = _RESIDUAL_HEADER.size
    need = start + 2 * 3 * w * h
    if len(data) != need:
        raise DataError(f"residual payload size {len(data) - start}, expected {need - start}",
                        path=path, offset=min(len(data), need))
    return np.frombuffer(data, dtype="<i2", offset=start).reshape(h, w, 3).astype(np.int16)


def load_residual(path):
    return decode_residual(Path(path).read_bytes(), path=path)


def save_residual(residual, path):
    atomic_write_bytes(path, encode_residual(residual))


# -- misc ----------------------------------------------------------------


def frame_index_from_name(path):
    """Frame files are named ``<frame_index>.png`` (any zero padding)."""
    stem = Path(path).stem
    try:
        return int(stem)
    except ValueError as exc:
        raise DataError(f"cannot derive frame index from file name {Path(path).name!r}",
                        path=path) from exc


@dataclass
class FrameDirectory:
    """Index of ``<frame_index>.png`` files in one directory."""

    root: Path
    files: dict = field(default_factory=dict)

    @classmethod
    def scan(cls, root, suffix=".png"):
        root = Path(root)
        files = {}
        for p in sorted(root.iterdir()):
            if p.suffix == suffix and not p.name.startswith("."):
                files[frame_index_from_name(p)] = p
        return cls(root, files)
