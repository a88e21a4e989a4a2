"""Command line entry point: ``motioncopy <command> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
Results go to stdout, diagnostics to stderr.

Option values resolve as command-line flag, then the matching table of the
TOML config file (``--config``, default ``./motioncopy.toml`` if present),
then the built-in default.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .data_io import (
    FrameDirectory, PoseKeypoints, Frame, atomic_write_text, load_feature_tensor,
    load_frame, load_mask, load_pose_sequence, load_residual, save_frame,
)
from .errors import ConfigError, DataError, MotionCopyError, NumericalDomainError
from .face_enhance import BlendConfig, DEFAULT_FACE_SIZE
from .composite import DEFAULT_PART_SIZE, PARTS, fuse
from .metrics import psnr, ssim
from .ot_gw import GWConfig, gw_distance, history_to_csv, plan_to_csv
from .pipeline import enhance_sequence, load_face_pool
from .replay_memory import AUTO, MemoryConfig, TrainingSample, run_training

log = logging.getLogger("motioncopy")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
CONFIG_NAME = "motioncopy.toml"

DEFAULTS = {
    "gw": {"lambda": 0.01, "outer": 20, "inner": 100, "floor": 1e-12},
    "enhance": {"alpha": 0.5, "beta": 0.5, "m": 3, "epsilon": 1e-8,
                "face_size": DEFAULT_FACE_SIZE, "part_size": DEFAULT_PART_SIZE},
    "replay-sim": {"epochs": 12, "K": 5, "threshold": AUTO, "seed": 0, "capacity": 512,
                   "m": 8, "random_prob": 0.05},
}


class UsageError(MotionCopyError):
    pass


def _load_config(path):
    if path is None:
        path = Path(CONFIG_NAME)
        if not path.exists():
            return {}
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from exc


def _resolve(args, section, name):
    val = getattr(args, name)
    if val is not None:
        return val
    table = args.config_data.get(section, {})
    if name in table:
        return table[name]
    return DEFAULTS[section][name]


def _read_dir(root, suffix, loader):
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    return {idx: loader(p) for idx, p in FrameDirectory.scan(root, suffix).files.items()}


# -- gw ------------------------------------------------------------------


def cmd_gw(args):
    cfg = GWConfig(
        lam=float(_resolve(args, "gw", "lambda")),
        projection_iters=int(_resolve(args, "gw", "outer")),
        sinkhorn_iters=int(_resolve(args, "gw", "inner")),
        stability_floor=float(_resolve(args, "gw", "floor")),
    )
    gen_files = sorted(Path(args.gen_dir).glob("*.ftns"))
    truth_files = sorted(Path(args.truth_dir).glob("*.ftns"))
    if len(gen_files) != len(truth_files):
        raise UsageError(f"feature count mismatch: {len(gen_files)} generated vs "
                         f"{len(truth_files)} ground truth")
    if len(gen_files) < 2:
        raise UsageError(f"need at least 2 feature tensors per directory, got {len(gen_files)}")
    gen = [load_feature_tensor(p) for p in gen_files]
    truth = [load_feature_tensor(p) for p in truth_files]
    res = gw_distance(gen, truth, cfg)
    print(f"gw_distance={res.distance:.12g}")
    print(f"max_marginal_violation={res.max_marginal_violation:.3e}")
    print(f"sinkhorn_violation={res.sinkhorn_violation:.3e}")
    print(f"outer_iters={res.outer_iters_run}")
    print(f"sequence_length={len(gen)}")
    if args.dump_plan:
        atomic_write_text(args.dump_plan, plan_to_csv(res.plan))
    if args.dump_history:
        atomic_write_text(args.dump_history, history_to_csv(res.objective_history))
    return EXIT_OK


# -- enhance -------------------------------------------------------------


def cmd_enhance(args):
    cfg = BlendConfig(
        m=int(_resolve(args, "enhance", "m")),
        alpha=float(_resolve(args, "enhance", "alpha")),
        beta=float(_resolve(args, "enhance", "beta")),
        epsilon=float(_resolve(args, "enhance", "epsilon")),
    )
    face_size = int(_resolve(args, "enhance", "face_size"))
    part_size = int(_resolve(args, "enhance", "part_size"))
    poses = load_pose_sequence(args.poses)
    frames = _read_dir(args.frames_dir, ".png", lambda p: load_frame(p, "generated"))
    pool = load_face_pool(args.pool_dir, face_size) if Path(args.pool_dir).is_dir() else []
    if not Path(args.pool_dir).is_dir():
        log.warning("face pool directory %s does not exist; treating pool as empty", args.pool_dir)
    backgrounds = masks = residuals = None
    if (args.backgrounds is None) != (args.masks is None):
        raise UsageError("--backgrounds and --masks must be given together")
    if args.backgrounds is not None:
        backgrounds = _read_dir(args.backgrounds, ".png", lambda p: load_frame(p, "background"))
        masks = _read_dir(args.masks, ".png", load_mask)
    if args.residuals is not None:
        residuals = {}
        for p in sorted(Path(args.residuals).glob("*.resd")):
            idx, _, part = p.stem.partition("_")
            if part not in PARTS:
                raise DataError("residual file name must be <frame>_<part>.resd", path=p)
            residuals.setdefault(int(idx), {})[part] = load_residual(p)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = enhance_sequence(frames, poses, pool, cfg, backgrounds=backgrounds, masks=masks,
                               residuals=residuals, part_size=part_size)
    for r in results:
        save_frame(r.output, out_dir / f"{r.frame_index:05d}.png")
    manifest = {
        "alpha": cfg.alpha, "beta": cfg.beta, "m": cfg.m, "epsilon": cfg.epsilon,
        "pool_size": len(pool),
        "frames": [r.manifest() for r in results],
    }
    manifest_path = Path(args.manifest) if args.manifest else out_dir / "manifest.json"
    atomic_write_text(manifest_path, json.dumps(manifest, indent=1) + "\n")
    n_enh = sum(r.enhanced for r in results)
    print(f"frames={len(results)} enhanced={n_enh} passthrough={len(results) - n_enh}")
    return EXIT_OK


# -- replay-sim ----------------------------------------------------------


def _placeholder_sample(window):
    poses = tuple(PoseKeypoints(np.zeros((18, 3)), i) for i in window)
    frames = tuple(Frame(np.zeros((1, 1, 3), np.uint8)) for _ in window)
    return TrainingSample(poses, frames)


def load_stub_samples(path):
    """Read the replay-sim samples file.

    ``{"samples": [{"window": [t-1, t, t+1], "gw": g, "perceptual": p}, ...]}``
    where ``p`` is a number or a list cycled through on successive trainer
    calls for that window.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON: {exc}", path=path) from exc
    items = obj.get("samples") if isinstance(obj, dict) else None
    if not isinstance(items, list) or not items:
        raise DataError('samples file needs a nonempty "samples" list', path=path)
    samples, table = [], {}
    for k, item in enumerate(items):
        try:
            window = [int(i) for i in item["window"]]
            gw = float(item.get("gw", 0.0))
            perc = item["perceptual"]
            perc = [float(v) for v in perc] if isinstance(perc, list) else [float(perc)]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"sample {k}: {exc}", path=path) from exc
        if not perc:
            raise DataError(f"sample {k}: empty perceptual list", path=path)
        s = _placeholder_sample(window)
        samples.append(s)
        table[s.key] = (gw, perc)
    return samples, table


class StubTrainer:
    """Deterministic trainer hook replaying losses from a table."""

    def __init__(self, table):
        self.table = table
        self.calls = {}

    def __call__(self, batch):
        out = []
        for poses, _ in batch:
            key = tuple(p.frame_index for p in poses)
            gw, perc = self.table[key]
            n = self.calls.get(key, 0)
            self.calls[key] = n + 1
            out.append((gw, perc[n % len(perc)]))
        return out


def cmd_replay_sim(args):
    thr = _resolve(args, "replay-sim", "threshold")
    if thr != AUTO:
        try:
            thr = float(thr)
        except ValueError as exc:
            raise ConfigError(f"threshold must be a number or 'auto', got {thr!r}") from exc
    cfg = MemoryConfig(
        replay_interval_K=int(_resolve(args, "replay-sim", "K")),
        loss_threshold=thr,
        replay_sample_m=int(_resolve(args, "replay-sim", "m")),
        capacity=int(_resolve(args, "replay-sim", "capacity")),
        random_store_prob=float(_resolve(args, "replay-sim", "random_prob")),
        rng_seed=int(_resolve(args, "replay-sim", "seed")),
    )
    epochs = int(_resolve(args, "replay-sim", "epochs"))
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    samples, table = load_stub_samples(args.samples)
    trace = run_training(samples, epochs, cfg, StubTrainer(table))
    atomic_write_text(args.trace, trace.to_jsonl())
    print("replay_epochs=" + ",".join(str(e) for e in trace.replay_epochs))
    print(f"final_memory_size={len(trace.memory)}")
    print(f"loss_threshold={trace.loss_threshold:.12g}")
    print("stored_windows=" + ";".join(
        "-".join(str(i) for i in e.key) for e in sorted(trace.memory, key=lambda e: e.key)))
    return EXIT_OK


# -- metrics / fuse --------------------------------------------------------


def cmd_metrics(args):
    a = _read_dir(args.a_dir, ".png", load_frame)
    b = _read_dir(args.b_dir, ".png", load_frame)
    common = sorted(set(a) & set(b))
    if not common:
        raise DataError("no frame indices in common between the two directories")
    for only in sorted(set(a) ^ set(b)):
        log.warning("frame %d present in only one directory; skipped", only)
    rows = ["frame_index,psnr,ssim"]
    ps, ss = [], []
    for idx in common:
        p, s = psnr(a[idx], b[idx]), ssim(a[idx], b[idx])
        ps.append(p)
        ss.append(s)
        rows.append(f"{idx},{p:.6f},{s:.6f}")
    rows.append(f"mean,{np.mean(ps):.6f},{np.mean(ss):.6f}")
    text = "\n".join(rows) + "\n"
    if args.csv:
        atomic_write_text(args.csv, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fuse(args):
    fg_p, bg_p, mask_p, out_p = map(Path, (args.foreground, args.background, args.mask, args.out))
    if fg_p.is_dir():
        fgs = _read_dir(fg_p, ".png", load_frame)
        bgs = _read_dir(bg_p, ".png", load_frame)
        masks = _read_dir(mask_p, ".png", load_mask)
        out_p.mkdir(parents=True, exist_ok=True)
        for idx in sorted(fgs):
            if idx not in bgs or idx not in masks:
                raise DataError(f"frame {idx}: missing background or mask")
            save_frame(fuse(fgs[idx], bgs[idx], masks[idx]), out_p / f"{idx:05d}.png")
        print(f"fused={len(fgs)}")
    else:
        save_frame(fuse(load_frame(fg_p), load_frame(bg_p), load_mask(mask_p)), out_p)
        print("fused=1")
    return EXIT_OK


def cmd_fixture(args):
    from .fixtures import write_fixture

    seq = write_fixture(args.out_dir, n=args.frames, seed=args.seed)
    print(f"frames={len(seq)} root={args.out_dir}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="motioncopy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help=f"TOML config file (default: ./{CONFIG_NAME} if present)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = DEFAULTS["gw"]
    g = sub.add_parser("gw", help="entropic Gromov-Wasserstein distance between two tensor dirs")
    g.add_argument("gen_dir")
    g.add_argument("truth_dir")
    g.add_argument("--lambda", dest="lambda", type=float,
                   help=f"entropy regularization (default {d['lambda']})")
    g.add_argument("--outer", type=int, help=f"projection iterations P (default {d['outer']})")
    g.add_argument("--inner", type=int, help=f"Sinkhorn iterations S (default {d['inner']})")
    g.add_argument("--floor", type=float, help=f"stability floor (default {d['floor']})")
    g.add_argument("--dump-plan", help="write the final plan as CSV")
    g.add_argument("--dump-history", help="write the per-iteration objective as CSV")
    g.set_defaults(func=cmd_gw)

    d = DEFAULTS["enhance"]
    e = sub.add_parser("enhance", help="face enhancement, residual refinement and fusion")
    e.add_argument("frames_dir")
    e.add_argument("poses")
    e.add_argument("pool_dir")
    e.add_argument("out_dir")
    e.add_argument("--alpha", type=float, help=f"pool-face weight (default {d['alpha']})")
    e.add_argument("--beta", type=float, help=f"generated-face weight (default {d['beta']})")
    e.add_argument("--m", type=int, help=f"candidate faces to blend (default {d['m']})")
    e.add_argument("--epsilon", type=float, help=f"similarity guard (default {d['epsilon']})")
    e.add_argument("--face-size", dest="face_size", type=int,
                   help=f"pool face side in pixels (default {d['face_size']})")
    e.add_argument("--part-size", dest="part_size", type=int,
                   help=f"body-part crop side (default {d['part_size']})")
    e.add_argument("--backgrounds", help="directory of inpainted backgrounds")
    e.add_argument("--masks", help="directory of foreground masks")
    e.add_argument("--residuals", help="directory of <frame>_<part>.resd residuals")
    e.add_argument("--manifest", help="manifest path (default OUT_DIR/manifest.json)")
    e.set_defaults(func=cmd_enhance)

    d = DEFAULTS["replay-sim"]
    r = sub.add_parser("replay-sim", help="simulate the episodic replay schedule with stub losses")
    r.add_argument("samples")
    r.add_argument("trace")
    r.add_argument("--epochs", type=int, help=f"epochs N (default {d['epochs']})")
    r.add_argument("--K", dest="K", type=int, help=f"replay interval (default {d['K']})")
    r.add_argument("--threshold", help=f"perceptual-loss threshold or 'auto' (default {d['threshold']})")
    r.add_argument("--seed", type=int, help=f"RNG seed (default {d['seed']})")
    r.add_argument("--capacity", type=int, help=f"memory capacity (default {d['capacity']})")
    r.add_argument("--m", type=int, help=f"items replayed per replay (default {d['m']})")
    r.add_argument("--random-prob", dest="random_prob", type=float,
                   help=f"random storage probability (default {d['random_prob']})")
    r.set_defaults(func=cmd_replay_sim)

    m = sub.add_parser("metrics", help="per-frame PSNR/SSIM between two frame dirs, as CSV")
    m.add_argument("a_dir")
    m.add_argument("b_dir")
    m.add_argument("--csv", help="write CSV here instead of stdout")
    m.set_defaults(func=cmd_metrics)

    f = sub.add_parser("fuse", help="mask fusion of foreground and background (files or dirs)")
    f.add_argument("foreground")
    f.add_argument("background")
    f.add_argument("mask")
    f.add_argument("out")
    f.set_defaults(func=cmd_fuse)

    x = sub.add_parser("fixture", help="write the synthetic 12-frame fixture")
    x.add_argument("out_dir")
    x.add_argument("--frames", type=int, default=12)
    x.add_argument("--seed", type=int, default=0)
    x.set_defaults(func=cmd_fixture)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="motioncopy: %(levelname)s: %(message)s", stream=sys.stderr)
    log.debug("kernel backend: %s", _kernels.backend())
    try:
        args.config_data = _load_config(args.config)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (DataError, NumericalDomainError, FileNotFoundError, IsADirectoryError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
