"""Event-sequence schema, JSON dataset IO, splitting and mini-batching.

Dataset file format (language-neutral JSON):

    {"dim_process": K, "sequences": [[{"k": 1, "t": 0.5}, ...], ...]}

Event types are integers in [1, K]; times are strictly increasing within a
sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    """Dataset violates the schema or the sequence invariants."""


@dataclass
class EventSequence:
    """Ordered marked events: types in [1, K], strictly increasing times."""

    types: np.ndarray   # int array, shape (N,)
    times: np.ndarray   # float array, shape (N,)

    def __post_init__(self):
        self.types = np.asarray(self.types, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.types.shape != self.times.shape or self.types.ndim != 1:
            raise DatasetError("types and times must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return len(self.times)

    def validate(self, num_types: int, index: int | None = None) -> None:
        where = f" (sequence {index})" if index is not None else ""
        if len(self) < 1:
            raise DatasetError(f"empty sequence{where}")
        if np.any(np.diff(self.times) <= 0.0):
            raise DatasetError(f"event times are not strictly increasing{where}")
        if np.any(self.types < 1) or np.any(self.types > num_types):
            bad = int(self.types[(self.types < 1) | (self.types > num_types)][0])
            raise DatasetError(f"event type {bad} outside [1, {num_types}]{where}")

    def inter_arrivals(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass
class Dataset:
    num_types: int
    sequences: list[EventSequence] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sequences)

    def stats(self) -> dict:
        """Summary in the usual dataset-table shape: K, length range, event count."""
        lengths = [len(s) for s in self.sequences]
        return {
            "num_types": self.num_types,
            "num_sequences": len(self.sequences),
            "num_events": int(sum(lengths)),
            "min_length": int(min(lengths)) if lengths else 0,
            "mean_length": float(np.mean(lengths)) if lengths else 0.0,
            "max_length": int(max(lengths)) if lengths else 0,
        }


def load_dataset(path, jitter: float = 0.0, time_scale: float = 1.0) -> Dataset:
    """Load and validate a JSON dataset.

    jitter: if > 0, sequences with duplicate timestamps get increasing
        multiples of ``jitter`` added to break ties (for dirty data); by
        default such sequences are rejected.
    time_scale: optional affine rescaling, every time divided by this
        constant.  Default 1.0 (raw times).
    """
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, dict) or "dim_process" not in raw or "sequences" not in raw:
        raise DatasetError(f"{path}: expected top-level dim_process and sequences")
    num_types = int(raw["dim_process"])
    if num_types < 1:
        raise DatasetError(f"{path}: dim_process must be >= 1")

    sequences = []
    for i, events in enumerate(raw["sequences"]):
        types = np.array([int(e["k"]) for e in events], dtype=np.int64)
        times = np.array([float(e["t"]) for e in events], dtype=np.float64)
        if time_scale != 1.0:
            times = times / time_scale
        if jitter > 0.0 and len(times) > 1:
            dup = np.diff(times) <= 0.0
            if np.any(dup):
                times = times + jitter * np.arange(len(times))
        seq = EventSequence(types, times)
        seq.validate(num_types, index=i)
        sequences.append(seq)
    observed_max = max((int(s.types.max()) for s in sequences), default=1)
    if observed_max > num_types:
        raise DatasetError(f"{path}: observed type {observed_max} exceeds dim_process {num_types}")
    return Dataset(num_types, sequences)


def save_dataset(dataset: Dataset, path) -> None:
    """Write the JSON schema; times stored with full float precision."""
    payload = {
        "dim_process": dataset.num_types,
        "sequences": [
            [{"k": int(k), "t": float(t)} for k, t in zip(s.types, s.times)]
            for s in dataset.sequences
        ],
    }
    with open(path, "w") as f:
        json.dump(payload, f)


@dataclass
class Batch:
    """Sequences padded to a common length with a validity mask.

    Padded positions repeat the last real time (so segment lengths vanish)
    and carry type 1; the mask is 1 exactly on real events and padded
    positions never reach any loss or metric.
    """

    types: np.ndarray    # (S, L) int, 1-based types
    times: np.ndarray    # (S, L) float
    mask: np.ndarray     # (S, L) float, 1.0 on real events
    lengths: np.ndarray  # (S,) int

    @property
    def size(self) -> int:
        return self.types.shape[0]

    @property
    def max_len(self) -> int:
        return self.types.shape[1]


def make_batch(sequences: list[EventSequence], pad_to: int | None = None) -> Batch:
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    L = int(lengths.max()) if pad_to is None else int(pad_to)
    if L < int(lengths.max()):
        raise DatasetError("pad_to is shorter than the longest sequence")
    S = len(sequences)
    types = np.ones((S, L), dtype=np.int64)
    times = np.zeros((S, L), dtype=np.float64)
    mask = np.zeros((S, L), dtype=np.float64)
    for i, s in enumerate(sequences):
        n = len(s)
        types[i, :n] = s.types
        times[i, :n] = s.times
        times[i, n:] = s.times[-1]
        mask[i, :n] = 1.0
    return Batch(types, times, mask, lengths)


def split_dataset(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffle-split; every sequence lands in exactly one side."""
    if not dataset.sequences:
        raise DatasetError("cannot split an empty dataset")
    n = len(dataset.sequences)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xD5)))
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return (
        Dataset(dataset.num_types, [dataset.sequences[i] for i in train_idx]),
        Dataset(dataset.num_types, [dataset.sequences[i] for i in test_idx]),
    )


def epoch_batches(dataset: Dataset, batch_size: int, seed: int, epoch: int) -> list[Batch]:
    """Mini-batches for one epoch, shuffled under a per-epoch derived seed."""
    if batch_size < 1:
        raise DatasetError("batch_size must be >= 1")
    n = len(dataset.sequences)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xBA, int(epoch))))
    order = rng.permutation(n)
    batches = []
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        batches.append(make_batch([dataset.sequences[i] for i in idx]))
    return batches
