"""Per-video feature storage.

One binary file per video: a header (magic, version, video id, row and
column counts) followed by the S x D float64 matrix, little endian,
row major.  A directory index file lists every video in the store.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import StoreFormatError

MAGIC = b"AEFS"
VERSION = 1
INDEX_NAME = "index.tsv"


class FeatureStore:
    """In-memory map of video id to its S x D per-second feature matrix."""

    def __init__(self):
        self._data: dict[str, np.ndarray] = {}
        self.feat_dim: int | None = None

    def __len__(self):
        return len(self._data)

    def __contains__(self, video_id: str):
        return video_id in self._data

    def video_ids(self) -> list[str]:
        return sorted(self._data)

    def get(self, video_id: str) -> np.ndarray:
        if video_id not in self._data:
            raise KeyError(f"unknown video {video_id!r}")
        return self._data[video_id]

    def add(self, video_id: str, features: np.ndarray) -> None:
        features = np.ascontiguousarray(features, dtype=float)
        if features.ndim != 2:
            raise StoreFormatError(f"{video_id}: features must be 2-D")
        if self.feat_dim is None:
            self.feat_dim = features.shape[1]
        elif features.shape[1] != self.feat_dim:
            raise StoreFormatError(
                f"{video_id}: feature dim {features.shape[1]} != store dim {self.feat_dim}")
        if video_id in self._data:
            raise StoreFormatError(f"duplicate video {video_id!r}")
        self._data[video_id] = features

    # -- persistence ---------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        os.makedirs(directory, exist_ok=True)
        index_lines = ["# video_id\tfile\trows\tcols\n"]
        for vid in self.video_ids():
            fname = f"{vid}.feat"
            arr = self._data[vid]
            write_feature_file(directory / fname, vid, arr)
            index_lines.append(f"{vid}\t{fname}\t{arr.shape[0]}\t{arr.shape[1]}\n")
        with open(directory / INDEX_NAME, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(index_lines)

    @classmethod
    def load(cls, directory) -> "FeatureStore":
        directory = Path(directory)
        index = directory / INDEX_NAME
        if not index.exists():
            raise StoreFormatError(f"no feature index at {index}")
        store = cls()
        with open(index, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise StoreFormatError(f"{index}:{lineno}: expected 4 fields")
                vid, fname, rows, cols = parts
                file_vid, arr = read_feature_file(directory / fname)
                if file_vid != vid:
                    raise StoreFormatError(
                        f"{fname}: header video id {file_vid!r} != index id {vid!r}")
                if arr.shape != (int(rows), int(cols)):
                    raise StoreFormatError(
                        f"{fname}: shape {arr.shape} != index ({rows}, {cols})")
                store.add(vid, arr)
        return store


def write_feature_file(path, video_id: str, features: np.ndarray) -> None:
    vid_bytes = video_id.encode("utf-8")
    arr = np.ascontiguousarray(features, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, len(vid_bytes), 0))
        fh.write(vid_bytes)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_feature_file(path) -> tuple[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise StoreFormatError(f"{path}: bad magic {magic!r}")
        version, vid_len, _ = struct.unpack("<III", fh.read(12))
        if version != VERSION:
            raise StoreFormatError(f"{path}: unsupported version {version}")
        vid = fh.read(vid_len).decode("utf-8")
        rows, cols = struct.unpack("<II", fh.read(8))
        payload = fh.read(rows * cols * 8)
        if len(payload) != rows * cols * 8:
            raise StoreFormatError(f"{path}: truncated payload")
        arr = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
    return vid, arr
