"""Binary checkpoints: parameters, optimizer state, generator state.

Layout: magic, a length-prefixed JSON header (round metadata, config,
vocabulary structure, per-parameter step counts, generator state), a
sequence of named little-endian float64 matrices, and a trailing sha256
of everything before it.  Loading a saved checkpoint reproduces training
bit-exactly from the saved epoch.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .autodiff import Parameter
from .errors import CheckpointError
from .model import ModelHyper, ModelParams
from .training import TrainConfig
from .vocab import ActionVocabulary, AdverbVocabulary

MAGIC = b"ADVEMBC1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: ModelParams
    config: TrainConfig
    rng_state: dict
    epoch: int


def _write_matrix(parts: list[bytes], name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f8")
    name_b = name.encode("utf-8")
    parts.append(struct.pack("<I", len(name_b)))
    parts.append(name_b)
    parts.append(struct.pack("<I", data.ndim))
    parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
    parts.append(data.tobytes())


def checkpoint_save(path, mp: ModelParams, cfg: TrainConfig, rng_state: dict,
                    epoch: int) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "epoch": epoch,
        "rng_state": rng_state,
        "config": asdict(cfg),
        "hyper": asdict(mp.hyper),
        "actions": mp.actions.names,
        "adverb_names": mp.adverbs.names,
        "adverb_antonym": mp.adverbs.antonym,
        "has_adverb_vectors": mp.adverbs.vectors is not None,
        "steps": {name: p.step for name, p in sorted(mp.params.items())},
        "digests": {"actions": mp.actions.digest(), "adverbs": mp.adverbs.digest()},
    }
    header_b = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    matrices: list[tuple[str, np.ndarray]] = [("vocab.action_vectors", mp.actions.vectors)]
    if mp.adverbs.vectors is not None:
        matrices.append(("vocab.adverb_vectors", mp.adverbs.vectors))
    for name, p in sorted(mp.params.items()):
        matrices.append((f"param.{name}", p.value))
        matrices.append((f"adam_m.{name}", p.adam_m))
        matrices.append((f"adam_v.{name}", p.adam_v))

    parts: list[bytes] = [MAGIC, struct.pack("<I", len(header_b)), header_b,
                          struct.pack("<I", len(matrices))]
    for name, arr in matrices:
        _write_matrix(parts, name, arr)
    blob = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(hashlib.sha256(blob).digest())


def checkpoint_load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 36 or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: corrupt (digest mismatch)")

    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", body, off)
    off += 4
    header = json.loads(body[off:off + hlen].decode("utf-8"))
    off += hlen
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')}")

    (n_mats,) = struct.unpack_from("<I", body, off)
    off += 4
    matrices: dict[str, np.ndarray] = {}
    for _ in range(n_mats):
        (nlen,) = struct.unpack_from("<I", body, off)
        off += 4
        name = body[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", body, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off)
        off += count * 8
        matrices[name] = arr.reshape(shape).copy()
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes in matrix section")

    actions = ActionVocabulary(header["actions"], matrices["vocab.action_vectors"])
    adverbs = AdverbVocabulary(header["adverb_names"], header["adverb_antonym"],
                               matrices.get("vocab.adverb_vectors"))
    hyper = ModelHyper(**header["hyper"])
    params: dict[str, Parameter] = {}
    for name, step in header["steps"].items():
        p = Parameter(matrices[f"param.{name}"], name)
        p.adam_m = matrices[f"adam_m.{name}"]
        p.adam_v = matrices[f"adam_v.{name}"]
        p.step = step
        params[name] = p
    mp = ModelParams(hyper, actions, adverbs, params)
    cfg = TrainConfig(**header["config"])
    return Checkpoint(mp, cfg, header["rng_state"], header["epoch"])
