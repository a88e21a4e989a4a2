"""Deterministic synthetic fixture: a small figure turning its head over 12 frames.

Everything is drawn procedurally from a seed, so tests and the CLI can
regenerate the same bytes anywhere. The "generated" frames are the ground
truth with a degraded face and mild pixel noise, standing in for the
output of an imperfect generator.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import (
    NUM_JOINTS, FeatureTensor, Frame, Mask, PoseKeypoints, save_feature_tensor, save_frame,
    save_mask, save_pose_sequence,
)
from .composite import fuse
from .face_enhance import crop_face

HEIGHT = 128
WIDTH = 128
N_FRAMES = 12


@dataclass
class SyntheticSequence:
    poses: list
    truth_fg: list
    generated: list
    backgrounds: list
    masks: list
    truth: list  # ground-truth composites

    def __len__(self):
        return len(self.poses)


def _pose(t, n):
    phase = 2 * np.pi * t / n
    yaw = -0.5 + t / max(n - 1, 1)
    cx = 64.0 + 6.0 * np.sin(phase / 2)
    head_y = 34.0
    half_eye = 12.8 * np.cos(yaw)
    shift = 10.0 * np.sin(yaw)
    j = np.zeros((NUM_JOINTS, 3))
    j[:, 2] = 1.0

    def put(i, x, y):
        j[i, 0], j[i, 1] = x, y

    put(0, cx + shift, head_y + 6)                     # nose
    put(14, cx - half_eye + 0.5 * shift, head_y)       # r_eye
    put(15, cx + half_eye + 0.5 * shift, head_y)       # l_eye
    put(16, cx - 22 * np.cos(yaw) - 0.3 * shift, head_y + 2)  # r_ear
    put(17, cx + 22 * np.cos(yaw) - 0.3 * shift, head_y + 2)  # l_ear
    put(1, cx, 58)                                     # neck
    swing = 8 * np.sin(phase)
    put(2, cx - 16, 62); put(5, cx + 16, 62)
    put(3, cx - 22, 78 + swing); put(6, cx + 22, 78 - swing)
    put(4, cx - 26, 94 + swing); put(7, cx + 26, 94 - swing)
    put(8, cx - 9, 96); put(11, cx + 9, 96)
    put(9, cx - 11, 108 - swing / 2); put(12, cx + 11, 108 + swing / 2)
    put(10, cx - 12, 120); put(13, cx + 12, 120)
    return PoseKeypoints(j, t)


def _segment(yy, xx, p, q, r):
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    d = q - p
    t = np.clip(((xx - p[0]) * d[0] + (yy - p[1]) * d[1]) / max(d @ d, 1e-9), 0, 1)
    return (xx - p[0] - t * d[0]) ** 2 + (yy - p[1] - t * d[1]) ** 2 <= r * r


_LIMBS = ((1, 2), (1, 5), (2, 3), (3, 4), (5, 6), (6, 7), (1, 8), (1, 11), (8, 9), (9, 10),
          (11, 12), (12, 13), (8, 11))


def _render(pose):
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH].astype(float)
    J = pose.joints
    body = np.zeros((HEIGHT, WIDTH), bool)
    for a, b in _LIMBS:
        body |= _segment(yy, xx, J[a, :2], J[b, :2], 5)
    nx, ny = J[0, :2]
    head = ((xx - nx) / 20.0) ** 2 + ((yy - (ny - 4)) / 24.0) ** 2 <= 1.0
    mask = body | head

    img = np.zeros((HEIGHT, WIDTH, 3))
    img[body] = (60, 90, 160)
    # smooth shaded face; orientation shows up as a moving highlight
    shade = np.exp(-(((xx - nx) ** 2 + (yy - ny) ** 2) / (2 * 14.0 ** 2)))
    skin = np.stack([200 + 40 * shade, 150 + 40 * shade, 120 + 30 * shade], -1)
    img[head] = skin[head]
    for e in (14, 15):
        ex, ey = J[e, :2]
        g = np.exp(-(((xx - ex) ** 2 + (yy - ey) ** 2) / (2 * 2.5 ** 2)))
        img -= (g * 110)[..., None] * head[..., None]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), mask


def _background():
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH].astype(float)
    bg = np.stack([90 + 60 * xx / WIDTH, 120 + 40 * yy / HEIGHT, 140 + 0 * xx], -1)
    return np.clip(np.rint(bg), 0, 255).astype(np.uint8)


def make_sequence(n=N_FRAMES, seed=0):
    rng = np.random.default_rng(seed)
    bg = _background()
    seq = SyntheticSequence([], [], [], [], [], [])
    for t in range(n):
        pose = _pose(t, n)
        fg, mask = _render(pose)
        gen = fg.astype(float)
        # degraded face: washed out toward a flat tone plus heavy noise
        nx, ny = pose.joints[0, :2]
        yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
        face = (np.abs(xx - nx) <= 24) & (np.abs(yy - ny) <= 28)
        gen[face] = 0.4 * gen[face] + 0.6 * 170 + rng.normal(0, 18, gen[face].shape)
        gen += rng.normal(0, 2, gen.shape)
        gen = np.clip(np.rint(gen), 0, 255).astype(np.uint8)
        m = Mask(mask.astype(float))
        truth_fg = Frame(fg, "ground_truth")
        seq.poses.append(pose)
        seq.truth_fg.append(truth_fg)
        seq.generated.append(Frame(gen, "generated"))
        seq.backgrounds.append(Frame(bg, "background"))
        seq.masks.append(m)
        seq.truth.append(Frame(fuse(truth_fg, Frame(bg), m).pixels, "ground_truth"))
    return seq


def frame_features(frame, step=8):
    """Coarse raw feature vector: the frame block-averaged on a ``step`` grid."""
    px = frame.pixels.astype(float)
    h, w = px.shape[0] // step * step, px.shape[1] // step * step
    blocks = px[:h, :w].reshape(h // step, step, w // step, step, 3).mean(axis=(1, 3))
    return FeatureTensor(blocks.ravel() / 255.0, "raw")


def write_fixture(root, n=N_FRAMES, seed=0):
    """Write the synthetic fixture tree under ``root`` and return the sequence.

    Layout::

        poses.json  frames/  truth/  backgrounds/  masks/  pool/
        features/gen/  features/truth/  samples.json
    """
    root = Path(root)
    seq = make_sequence(n, seed)
    dirs = {k: root / k for k in ("frames", "truth", "backgrounds", "masks", "pool",
                                  "features/gen", "features/truth")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    save_pose_sequence(seq.poses, root / "poses.json")
    for t, pose in enumerate(seq.poses):
        name = f"{pose.frame_index:05d}"
        save_frame(seq.generated[t], dirs["frames"] / f"{name}.png")
        save_frame(seq.truth[t], dirs["truth"] / f"{name}.png")
        save_frame(seq.backgrounds[t], dirs["backgrounds"] / f"{name}.png")
        save_mask(seq.masks[t], dirs["masks"] / f"{name}.png")
        save_frame(crop_face(seq.truth_fg[t], pose), dirs["pool"] / f"{name}.png")
        save_pose_sequence([pose], dirs["pool"] / f"{name}.json")
        save_feature_tensor(frame_features(seq.generated[t]), dirs["features/gen"] / f"{name}.ftns")
        save_feature_tensor(frame_features(seq.truth_fg[t]), dirs["features/truth"] / f"{name}.ftns")
    losses = [0.1, 0.9, 0.5]
    samples = {
        "samples": [
            {"window": [t, t + 1, t + 2], "gw": 0.05, "perceptual": losses[t % 3]}
            for t in range(0, n - 2)
        ]
    }
    (root / "samples.json").write_text(json.dumps(samples, indent=1))
    return seq
