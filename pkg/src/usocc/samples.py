"""Supervision samples collected along simulated scanlines."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from ._io import load_npz, save_npz


class AcousticSample(NamedTuple):
    x: np.ndarray
    theta: np.ndarray
    label: int
    transmittance: float
    occupancy: int
    sweep_id: int
    frame_id: int
    scanline_id: int
    depth: float


@dataclass
class SampleSet:
    """Column store of :class:`AcousticSample` rows.

    ``label`` is what an annotator marks in the image (bone only where it is
    visible); ``occupancy`` is the phantom's true indicator.
    """

    x: np.ndarray
    theta: np.ndarray
    label: np.ndarray
    transmittance: np.ndarray
    occupancy: np.ndarray
    sweep_id: np.ndarray
    frame_id: np.ndarray
    scanline_id: np.ndarray
    depth: np.ndarray

    def __len__(self):
        return len(self.label)

    def __getitem__(self, i) -> AcousticSample:
        return AcousticSample(*(getattr(self, f.name)[i] for f in fields(self)))

    def take(self, idx) -> "SampleSet":
        return SampleSet(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    def replace(self, **changes) -> "SampleSet":
        cols = {f.name: getattr(self, f.name) for f in fields(self)}
        cols.update(changes)
        return SampleSet(**cols)

    @property
    def frame_keys(self) -> np.ndarray:
        """One integer per (sweep, frame) pair."""
        return self.sweep_id.astype(np.int64) * 1_000_000 + self.frame_id.astype(np.int64)

    @classmethod
    def empty(cls) -> "SampleSet":
        f, i = np.zeros(0), np.zeros(0, dtype=np.int64)
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), i.astype(np.int8), f,
                   i.astype(np.int8), i, i, i, f)

    @classmethod
    def concatenate(cls, parts) -> "SampleSet":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(**{f.name: np.concatenate([getattr(p, f.name) for p in parts])
                      for f in fields(cls)})

    def save(self, path):
        save_npz(path, {f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def load(cls, path) -> "SampleSet":
        return cls(**load_npz(path))
