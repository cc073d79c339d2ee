"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..3    magic b"TCHK"
    bytes 4..7    uint32 format version (currently 1)
    bytes 8..15   uint64 header length in bytes
    header        UTF-8 JSON (sorted keys)
    payload       raw float64 little-endian array data, back to back

The header carries the encoder config, scaler bounds, optimizer scalar
state, run metadata (epoch, seed, RNG stream states), and an index of the
payload arrays as (name, shape, offset, count). Array payloads are written
in sorted name order. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import Scaler
from .model import EncoderConfig

MAGIC = b"TCHK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    encoder_config: EncoderConfig
    gen_params: dict[str, np.ndarray]
    disc_params: dict[str, np.ndarray]
    opt_gen: dict
    opt_disc: dict
    opt_gen_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    opt_disc_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    scaler: Scaler | None = None
    metadata: dict = field(default_factory=dict)


def _flatten_arrays(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for group, items in (
        ("gen", ckpt.gen_params),
        ("disc", ckpt.disc_params),
        ("opt_gen", ckpt.opt_gen_arrays),
        ("opt_disc", ckpt.opt_disc_arrays),
    ):
        for name, arr in items.items():
            arrays[f"{group}.{name}"] = np.asarray(arr, dtype=np.float64)
    return arrays


def dumps(ckpt: Checkpoint) -> bytes:
    arrays = _flatten_arrays(ckpt)
    index = []
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": arr.size})
        offset += arr.size
    header = {
        "encoder_config": asdict(ckpt.encoder_config),
        "scaler": {k: list(v) for k, v in ckpt.scaler.bounds.items()} if ckpt.scaler else None,
        "opt_gen": ckpt.opt_gen,
        "opt_disc": ckpt.opt_disc,
        "metadata": ckpt.metadata,
        "arrays": index,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [
        MAGIC,
        np.uint32(FORMAT_VERSION).tobytes(),
        np.uint64(len(header_bytes)).tobytes(),
        header_bytes,
    ]
    for name in sorted(arrays):
        parts.append(np.ascontiguousarray(arrays[name]).astype("<f8").tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> Checkpoint:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header_len = int(np.frombuffer(blob[8:16], dtype="<u8")[0])
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"corrupt checkpoint header: {err}") from err

    payload = np.frombuffer(blob[16 + header_len:], dtype="<f8")
    groups: dict[str, dict[str, np.ndarray]] = {"gen": {}, "disc": {}, "opt_gen": {}, "opt_disc": {}}
    for entry in header["arrays"]:
        start, count = entry["offset"], entry["count"]
        if start + count > payload.size:
            raise CheckpointError(f"truncated payload for array {entry['name']}")
        arr = payload[start:start + count].reshape(entry["shape"]).copy()
        group, _, name = entry["name"].partition(".")
        groups[group][name] = arr

    scaler = None
    if header.get("scaler"):
        scaler = Scaler({k: (float(v[0]), float(v[1])) for k, v in header["scaler"].items()})
    return Checkpoint(
        encoder_config=EncoderConfig(**header["encoder_config"]),
        gen_params=groups["gen"],
        disc_params=groups["disc"],
        opt_gen=header["opt_gen"],
        opt_disc=header["opt_disc"],
        opt_gen_arrays=groups["opt_gen"],
        opt_disc_arrays=groups["opt_disc"],
        scaler=scaler,
        metadata=header["metadata"],
    )


def save(path, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return loads(fh.read())
