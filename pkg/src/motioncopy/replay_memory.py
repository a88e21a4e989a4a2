"""Episodic memory of hard training windows and the replay schedule around it.

The scheduler knows nothing about the model. A *trainer hook* receives a
batch of ``(pose_window, frame_window)`` pairs, does whatever training it
wants, and returns one ``(gw_loss, perceptual_loss)`` pair per item.
"""

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError

WINDOW = 3
AUTO = "auto"
AUTO_PERCENTILE = 90.0


@dataclass(frozen=True)
class TrainingSample:
    """Three consecutive poses and the matching frames (t-1, t, t+1)."""

    pose_window: tuple
    frame_window: tuple

    def __post_init__(self):
        object.__setattr__(self, "pose_window", tuple(self.pose_window))
        object.__setattr__(self, "frame_window", tuple(self.frame_window))
        if len(self.pose_window) != WINDOW or len(self.frame_window) != WINDOW:
            raise DataError(f"windows must hold exactly {WINDOW} items")
        idx = [p.frame_index for p in self.pose_window]
        if idx != list(range(idx[0], idx[0] + WINDOW)):
            raise DataError(f"pose window frame indices must be consecutive, got {idx}")

    @property
    def key(self):
        return tuple(p.frame_index for p in self.pose_window)


@dataclass(frozen=True)
class MemoryEntry:
    sample: TrainingSample
    recorded_loss: float
    origin: str  # "threshold" or "random"

    def __post_init__(self):
        if self.origin not in ("threshold", "random"):
            raise DataError(f"unknown memory origin {self.origin!r}")
        if not (self.recorded_loss >= 0 and math.isfinite(self.recorded_loss)):
            raise DataError(f"recorded loss must be finite and >= 0, got {self.recorded_loss}")

    @property
    def key(self):
        return self.sample.key

    @property
    def pose_window(self):
        return self.sample.pose_window

    @property
    def frame_window(self):
        return self.sample.frame_window


@dataclass(frozen=True)
class MemoryConfig:
    replay_interval_K: int = 5
    loss_threshold: object = AUTO  # float > 0 or "auto"
    replay_sample_m: int = 8
    capacity: int = 512
    random_store_prob: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.replay_interval_K) != self.replay_interval_K or self.replay_interval_K < 1:
            raise ConfigError("replay_interval_K must be an integer >= 1")
        if self.loss_threshold != AUTO:
            try:
                thr = float(self.loss_threshold)
            except (TypeError, ValueError) as exc:
                raise ConfigError("loss_threshold must be a number or 'auto'") from exc
            if not thr > 0:
                raise ConfigError("loss_threshold must be > 0")
        if int(self.replay_sample_m) != self.replay_sample_m or self.replay_sample_m < 1:
            raise ConfigError("replay_sample_m must be an integer >= 1")
        if int(self.capacity) != self.capacity or self.capacity < 1:
            raise ConfigError("capacity must be an integer >= 1")
        if self.replay_sample_m > self.capacity:
            raise ConfigError("replay_sample_m cannot exceed capacity")
        if not (0.0 <= self.random_store_prob <= 1.0):
            raise ConfigError("random_store_prob must lie in [0, 1]")
        if not (-(2 ** 63) <= int(self.rng_seed) < 2 ** 64):
            raise ConfigError("rng_seed must fit in 64 bits")


class EpisodicMemory:
    """Bounded store keyed by window identity.

    Re-storing a window replaces its previous entry in place. When full,
    the entry with the lowest recorded loss is evicted (oldest first on
    ties), so the hardest generations survive.
    """

    def __init__(self, capacity=512):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._entries = {}

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())

    def __contains__(self, key):
        return key in self._entries

    def entries(self):
        return list(self._entries.values())

    def store(self, entry):
        self._entries[entry.key] = entry
        while len(self._entries) > self.capacity:
            victim = min(self._entries, key=lambda k: self._entries[k].recorded_loss)
            del self._entries[victim]

    def sample(self, m, rng):
        if m < 1:
            raise ConfigError("sample size must be >= 1")
        entries = self.entries()
        k = min(m, len(entries))
        if k == 0:
            return []
        idx = rng.choice(len(entries), size=k, replace=False)
        return [entries[i] for i in idx]


def store(memory, entry):
    memory.store(entry)


def sample(memory, m, rng):
    return memory.sample(m, rng)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    replay_performed: bool
    items_replayed: int
    items_trained: int
    items_stored: int
    memory_size_after: int


@dataclass
class ScheduleTrace:
    records: list
    loss_threshold: float
    memory: EpisodicMemory

    @property
    def replay_epochs(self):
        return [r.epoch for r in self.records if r.replay_performed]

    @property
    def total_replayed(self):
        return sum(r.items_replayed for r in self.records)

    def to_jsonl(self):
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)


TrainerHook = Callable[[Sequence[tuple]], Sequence[tuple]]


def _call_trainer(trainer, batch):
    losses = list(trainer([(s.pose_window, s.frame_window) for s in batch]))
    if len(losses) != len(batch):
        raise DataError(f"trainer returned {len(losses)} loss pairs for {len(batch)} items")
    out = []
    for pair in losses:
        gw, perceptual = (float(v) for v in pair)
        if not (math.isfinite(gw) and math.isfinite(perceptual)):
            raise DataError("trainer returned non-finite losses")
        out.append((gw, perceptual))
    return out


def run_training(samples, epochs, cfg, trainer, memory=None):
    """Drive ``trainer`` over ``epochs`` epochs with periodic replay.

    Epochs are numbered from 1. On every epoch divisible by
    ``cfg.replay_interval_K`` up to ``replay_sample_m`` stored windows are
    replayed before the regular pass. After each regular sample, the window
    is stored when its perceptual loss exceeds the threshold, or otherwise
    with probability ``random_store_prob``. Replayed items are never
    re-stored.

    With ``loss_threshold="auto"`` storage decisions of epoch 1 are made at
    the end of that epoch, against the 90th percentile of its perceptual
    losses.
    """
    if not samples:
        raise DataError("no training samples")
    if int(epochs) != epochs or epochs < 1:
        raise ConfigError("epochs must be an integer >= 1")
    samples = [s if isinstance(s, TrainingSample) else TrainingSample(*s) for s in samples]
    rng = np.random.default_rng(int(cfg.rng_seed) % 2 ** 64)
    memory = memory if memory is not None else EpisodicMemory(cfg.capacity)
    threshold = None if cfg.loss_threshold == AUTO else float(cfg.loss_threshold)

    def consider(sample, perceptual, draw):
        if perceptual > threshold:
            memory.store(MemoryEntry(sample, perceptual, "threshold"))
            return 1
        if draw < cfg.random_store_prob:
            memory.store(MemoryEntry(sample, max(perceptual, 0.0), "random"))
            return 1
        return 0

    records = []
    for epoch in range(1, epochs + 1):
        replay = epoch % cfg.replay_interval_K == 0
        replayed = memory.sample(cfg.replay_sample_m, rng) if replay else []
        if replayed:
            _call_trainer(trainer, [e.sample for e in replayed])

        stored = 0
        pending = []
        for s in samples:
            (_, perceptual), = _call_trainer(trainer, [s])
            draw = rng.random()
            if threshold is None:
                pending.append((s, perceptual, draw))
            else:
                stored += consider(s, perceptual, draw)
        if pending:
            threshold = float(np.percentile([p for _, p, _ in pending], AUTO_PERCENTILE))
            for s, perceptual, draw in pending:
                stored += consider(s, perceptual, draw)

        records.append(EpochRecord(
            epoch=epoch,
            replay_performed=replay,
            items_replayed=len(replayed),
            items_trained=len(replayed) + len(samples),
            items_stored=stored,
            memory_size_after=len(memory),
        ))
    return ScheduleTrace(records, threshold, memory)
