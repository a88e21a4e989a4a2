"""Per-frame refinement pipeline: face blend, part residuals, then fusion."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .composite import apply_residual, crop_parts, fuse, DEFAULT_PART_SIZE
from .data_io import DataError, load_frame, load_pose_sequence
from .errors import FaceNotExtractable
from .face_enhance import (
    DEFAULT_FACE_SIZE, BlendConfig, FacePoolEntry, enhance_face, extract_field,
)
from .replay_memory import WINDOW

log = logging.getLogger(__name__)


def load_face_pool(pool_dir, face_size=DEFAULT_FACE_SIZE):
    """Read ``<name>.json`` / ``<name>.png`` pairs into pool entries.

    Each JSON holds a single-frame pose file; entries whose face keypoints
    are missing are skipped with a warning.
    """
    pool = []
    for js in sorted(Path(pool_dir).glob("*.json")):
        png = js.with_suffix(".png")
        if not png.exists():
            raise DataError(f"pool entry {js.name} has no matching {png.name}", path=js)
        poses = load_pose_sequence(js)
        if len(poses) != 1:
            raise DataError(f"pool pose file must hold exactly one frame, got {len(poses)}", path=js)
        face = load_frame(png, "ground_truth")
        if face.shape != (face_size, face_size, 3):
            raise DataError(f"pool face is {face.shape[1]}x{face.shape[0]}, "
                            f"expected {face_size}x{face_size}", path=png)
        try:
            fld = extract_field(poses[0])
        except FaceNotExtractable as exc:
            log.warning("skipping pool entry %s: %s", js.name, exc)
            continue
        pool.append(FacePoolEntry(fld, face, poses[0].frame_index))
    return pool


def windows(indices, size=WINDOW):
    """Consecutive groups of ``size``; a trailing partial group is split into singles."""
    indices = list(indices)
    full = len(indices) // size * size
    groups = [indices[i:i + size] for i in range(0, full, size)]
    groups += [[i] for i in indices[full:]]
    return groups


@dataclass
class FrameResult:
    frame_index: int
    window: int
    output: object
    baseline: object
    enhanced: bool
    note: str = ""
    candidates: list = field(default_factory=list)

    def manifest(self):
        return {
            "frame_index": self.frame_index,
            "window": self.window,
            "enhanced": self.enhanced,
            "note": self.note,
            "candidates": [
                {"frame_index": e.frame_index, "similarity": s, "weight": w}
                for e, s, w in self.candidates
            ],
        }


def refine_frame(frame, pose, pool, cfg, *, background=None, mask=None, residuals=None,
                 part_size=DEFAULT_PART_SIZE):
    """Run one frame through blend -> residual -> fuse.

    Returns ``(output, baseline, chosen, note)``; ``baseline`` is the same
    chain with the face blend skipped.
    """
    chosen = []
    note = ""
    enhanced = frame
    if not pool:
        note = "empty face pool"
    else:
        try:
            enhanced, chosen = enhance_face(frame, pose, pool, cfg)
        except FaceNotExtractable as exc:
            note = str(exc)

    def finish(fg):
        if residuals:
            for region, _ in crop_parts(fg, pose, part_size):
                res = residuals.get(region.part)
                if res is not None:
                    fg = apply_residual(fg, res, region)
        if background is not None and mask is not None:
            fg = fuse(fg, background, mask)
        return fg

    baseline = finish(frame)
    output = finish(enhanced) if chosen else baseline
    return output, baseline, chosen, note


def enhance_sequence(frames, poses, pool, cfg=BlendConfig(), *, backgrounds=None, masks=None,
                     residuals=None, part_size=DEFAULT_PART_SIZE):
    """Refine every frame; ``frames``/``backgrounds``/``masks``/``residuals`` map frame_index -> value."""
    by_index = {p.frame_index: p for p in poses}
    missing = sorted(set(by_index) - set(frames))
    if missing:
        raise DataError(f"no frame file for frame indices {missing}")
    results = []
    for w, group in enumerate(windows(sorted(by_index))):
        for idx in group:
            out, base, chosen, note = refine_frame(
                frames[idx], by_index[idx], pool, cfg,
                background=(backgrounds or {}).get(idx),
                mask=(masks or {}).get(idx),
                residuals=(residuals or {}).get(idx),
                part_size=part_size,
            )
            if note:
                log.warning("frame %d passed through unenhanced: %s", idx, note)
            results.append(FrameResult(idx, w, out, base, bool(chosen), note, chosen))
    return results
