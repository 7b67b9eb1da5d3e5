"""Bit-exact persistence of trained simulators.

A checkpoint is a UTF-8 text manifest followed by a binary payload::

    usersim-checkpoint 1
    config {...json...}
    items i000 i001 ...            (optional)
    array gen/encoder.w_z 8,10 0 80
    ...
    payload 123456 sha256 <hex>
    end
    <payload bytes>

Each ``array`` line gives a name, its shape, and its element offset and
count in the payload, which is a run of little-endian IEEE-754 doubles.
The checksum covers the payload.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ItemCatalog
from .errors import (
    CheckpointError,
    CheckpointVersionError,
    ChecksumError,
    DimensionError,
    TruncatedCheckpointError,
)
from .training import TrainConfig, build_models

MAGIC = "usersim-checkpoint"
VERSION = 1
_LE = np.dtype("<f8")


def checkpoint_filename(stem, round_number):
    return f"{stem}.r{round_number:04d}.ckpt"


@dataclass
class Checkpoint:
    generator: object
    discriminator: object
    config: TrainConfig
    catalog: ItemCatalog | None = None
    extras: dict = field(default_factory=dict)
    round: int | None = None


def _arrays_for(gen, disc, catalog, extras):
    arrays = {}
    for name, t in gen.store.items():
        arrays[f"gen/{name}"] = t.data
    for name, t in disc.store.items():
        arrays[f"disc/{name}"] = t.data
    if catalog is not None:
        arrays["catalog/embeddings"] = catalog.embeddings
    for name, value in (extras or {}).items():
        arrays[f"extra/{name}"] = np.asarray(value, dtype=np.float64)
    return arrays


def save_checkpoint(path, gen, disc, config, catalog=None, extras=None, round_number=None):
    """Write generator, discriminator, config and optional catalog/extra arrays."""
    arrays = _arrays_for(gen, disc, catalog, extras)
    lines = [f"{MAGIC} {VERSION}",
             "config " + json.dumps(config.to_dict(), sort_keys=True)]
    if round_number is not None:
        lines.append(f"round {int(round_number)}")
    if catalog is not None:
        lines.append("items " + " ".join(catalog.ids))
    chunks = []
    offset = 0
    for name, value in arrays.items():
        value = np.ascontiguousarray(value, dtype=_LE)
        shape = ",".join(str(d) for d in value.shape)
        lines.append(f"array {name} {shape} {offset} {value.size}")
        chunks.append(value.tobytes())
        offset += value.size
    payload = b"".join(chunks)
    lines.append(f"payload {len(payload)} sha256 {hashlib.sha256(payload).hexdigest()}")
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        fh.write(payload)
    return Path(path)


def _read_manifest(blob):
    lines = []
    pos = 0
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise TruncatedCheckpointError("checkpoint manifest is incomplete")
        try:
            line = blob[pos:nl].decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("checkpoint manifest is not valid UTF-8") from None
        pos = nl + 1
        if line == "end":
            return lines, pos
        lines.append(line)


def read_checkpoint_arrays(path):
    """Low-level read: ``(header dict, {name: array})`` after all integrity checks."""
    blob = Path(path).read_bytes()
    if not blob:
        raise TruncatedCheckpointError(f"{path}: empty file")
    first = blob.split(b"\n", 1)[0].decode("utf-8", "replace").split()
    if len(first) != 2 or first[0] != MAGIC:
        raise CheckpointError(f"{path}: not a usersim checkpoint")
    if first[1] != str(VERSION):
        raise CheckpointVersionError(f"{path}: checkpoint format version {first[1]}, "
                                     f"this build reads version {VERSION}")
    lines, start = _read_manifest(blob)
    header = {"arrays": [], "items": None, "config": None, "round": None, "payload": None}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        if key == "config":
            header["config"] = json.loads(rest)
        elif key == "items":
            header["items"] = rest.split(" ") if rest else []
        elif key == "round":
            header["round"] = int(rest)
        elif key == "array":
            name, shape, offset, count = rest.split(" ")
            dims = tuple(int(d) for d in shape.split(",")) if shape else ()
            header["arrays"].append((name, dims, int(offset), int(count)))
        elif key == "payload":
            size, algo, digest = rest.split(" ")
            header["payload"] = (int(size), algo, digest)
        else:
            raise CheckpointError(f"{path}: unknown manifest entry {key!r}")
    if header["config"] is None or header["payload"] is None:
        raise CheckpointError(f"{path}: manifest lacks config or payload entry")
    size, algo, digest = header["payload"]
    payload = blob[start:]
    if len(payload) < size:
        raise TruncatedCheckpointError(f"{path}: payload has {len(payload)} of {size} bytes")
    if len(payload) > size:
        raise CheckpointError(f"{path}: {len(payload) - size} unexpected trailing bytes")
    if algo != "sha256" or hashlib.sha256(payload).hexdigest() != digest:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    data = np.frombuffer(payload, dtype=_LE)
    arrays = {}
    end = 0
    for name, dims, offset, count in sorted(header["arrays"], key=lambda a: a[2]):
        if offset < end or offset + count > data.size or int(np.prod(dims)) != count:
            raise CheckpointError(f"{path}: bad layout for array {name!r}")
        arrays[name] = data[offset:offset + count].reshape(dims).astype(np.float64)
        end = offset + count
    return header, arrays


def load_checkpoint(path, catalog=None):
    """Rebuild the models saved by :func:`save_checkpoint`.

    If ``catalog`` is given its embedding dimension must match the saved
    config, otherwise :class:`DimensionError` is raised.
    """
    header, arrays = read_checkpoint_arrays(path)
    config = TrainConfig.from_dict(header["config"])
    saved_catalog = None
    if header["items"] is not None and "catalog/embeddings" in arrays:
        emb = arrays["catalog/embeddings"]
        if emb.shape[1] != config.embedding_dim:
            raise DimensionError(f"{path}: stored catalog has |E|={emb.shape[1]} but "
                                 f"config says embedding_dim={config.embedding_dim}")
        saved_catalog = ItemCatalog(header["items"], emb)
    if catalog is not None and catalog.dim != config.embedding_dim:
        raise DimensionError(f"catalog has |E|={catalog.dim} but checkpoint {path} was "
                             f"trained with embedding_dim={config.embedding_dim}")
    gen, disc = build_models(config)
    try:
        gen.store.load({k[4:]: v for k, v in arrays.items() if k.startswith("gen/")})
        disc.store.load({k[5:]: v for k, v in arrays.items() if k.startswith("disc/")})
    except Exception as exc:
        raise CheckpointError(f"{path}: parameters do not match the saved config: {exc}") from exc
    extras = {k[6:]: v for k, v in arrays.items() if k.startswith("extra/")}
    return Checkpoint(gen, disc, config, catalog if catalog is not None else saved_catalog,
                      extras, header["round"])


def simulator_extras(train, test):
    """Arrays the environment needs: test start states and item popularity."""
    counts = np.bincount(np.asarray(train.actions), minlength=len(train.catalog))
    return {
        "start_items": np.asarray(test.state_items, dtype=np.float64),
        "start_feedback": np.asarray(test.state_feedback, dtype=np.float64),
        "popularity": counts.astype(np.float64),
    }


def save_simulator(path, result, dataset):
    """Checkpoint a :class:`~usersim.training.TrainResult` with its catalog and extras."""
    from .data import split_train_test

    train, test = split_train_test(dataset.with_window(result.config.n))
    return save_checkpoint(path, result.generator, result.discriminator, result.config,
                           catalog=dataset.catalog, extras=simulator_extras(train, test),
                           round_number=len(result.trace))
