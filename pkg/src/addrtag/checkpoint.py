"""Checkpoint files: a text manifest followed by raw little-endian parameter blocks.

Layout::

    ADDRTAG-CHECKPOINT 1
    key=value                       (manifest, sorted by key)
    ...
    %block <name> <dtype> <shape> <offset> <nbytes>
    ...
    %payload <nbytes> <sha256>
    %end
    <payload bytes>

The checksum covers the payload only, so an edited manifest is caught by the
shape check against the blocks (``ManifestMismatch``) while damaged or
truncated payloads raise ``CorruptFile``.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import DEFAULT_VOCAB, Tag
from .errors import CorruptFile, ManifestMismatch
from .tagger import AddressTagger, ModelConfig

MAGIC = "ADDRTAG-CHECKPOINT"
FORMAT_VERSION = "1"


@dataclass
class Checkpoint:
    state: dict[str, np.ndarray]
    manifest: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: AddressTagger, **extra) -> Checkpoint:
        state = {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
        manifest = model_manifest(model.config)
        manifest.update({k: _fmt(v) for k, v in extra.items()})
        return cls(state, manifest)

    @property
    def model_config(self) -> ModelConfig:
        return config_from_manifest(self.manifest)

    def build_model(self) -> AddressTagger:
        cfg = self.model_config
        model = AddressTagger(cfg)
        if self.state:
            dtype = next(iter(self.state.values())).dtype
            if dtype == np.float64:
                model.double()
        _check_shapes(model, self.state)
        model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.state.items()})
        model.eval()
        return model

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.manifest == other.manifest
            and self.state.keys() == other.state.keys()
            and all(
                self.state[k].dtype == other.state[k].dtype
                and self.state[k].shape == other.state[k].shape
                and self.state[k].tobytes() == other.state[k].tobytes()
                for k in self.state
            )
        )


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def model_manifest(cfg: ModelConfig) -> dict[str, str]:
    names = [t.name for t in Tag] + ["BOS", "PAD"]
    return {
        "format_version": FORMAT_VERSION,
        "variant": cfg.variant,
        "adversarial": _fmt(cfg.adversarial),
        "embeddings": cfg.embeddings,
        "input_dim": str(cfg.input_dim),
        "hidden_dim": str(cfg.hidden_dim),
        "tag_dim": str(cfg.tag_dim),
        "attention_dim": str(cfg.attention_dim),
        "tag_repr": cfg.tag_repr,
        "tag_vocabulary": ",".join(names),
        "bos_index": str(DEFAULT_VOCAB.bos_index),
        "pad_index": str(DEFAULT_VOCAB.pad_index),
    }


def config_from_manifest(m: dict[str, str]) -> ModelConfig:
    try:
        if m["tag_vocabulary"] != model_manifest(ModelConfig())["tag_vocabulary"]:
            raise ManifestMismatch(f"tag vocabulary differs: {m['tag_vocabulary']}")
        return ModelConfig(
            variant=m["variant"],
            adversarial=m["adversarial"] == "true",
            embeddings=m["embeddings"],
            input_dim=int(m["input_dim"]),
            hidden_dim=int(m["hidden_dim"]),
            tag_dim=int(m["tag_dim"]),
            attention_dim=int(m["attention_dim"]),
            tag_repr=m["tag_repr"],
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ManifestMismatch):
            raise
        raise ManifestMismatch(f"manifest cannot describe a model: {exc}") from None


def _check_shapes(model: AddressTagger, state: dict[str, np.ndarray]) -> None:
    expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    got = {k: tuple(v.shape) for k, v in state.items()}
    if expected.keys() != got.keys():
        diff = sorted(set(expected) ^ set(got))
        raise ManifestMismatch(f"parameter blocks do not match the manifest: {diff}")
    bad = [k for k in expected if expected[k] != got[k]]
    if bad:
        k = bad[0]
        raise ManifestMismatch(f"block {k}: manifest implies {expected[k]}, file has {got[k]}")


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    lines = [f"{MAGIC} {FORMAT_VERSION}"]
    for key in sorted(ckpt.manifest):
        value = ckpt.manifest[key]
        if "\n" in key or "\n" in value or "=" in key or key.startswith("%"):
            raise ValueError(f"manifest entry not representable: {key!r}")
        lines.append(f"{key}={value}")
    payload = bytearray()
    for name in sorted(ckpt.state):
        arr = np.ascontiguousarray(ckpt.state[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        raw = arr.tobytes()
        lines.append(f"%block {name} {arr.dtype.str} {shape} {len(payload)} {len(raw)}")
        payload.extend(raw)
    lines.append(f"%payload {len(payload)} {hashlib.sha256(payload).hexdigest()}")
    lines.append("%end")
    return ("\n".join(lines) + "\n").encode("utf-8") + bytes(payload)


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(ckpt))
    os.replace(tmp, path)
    return path


def parse_checkpoint(data: bytes) -> Checkpoint:
    end = data.find(b"\n%end\n")
    if end < 0:
        raise CorruptFile("checkpoint header is incomplete")
    try:
        header = data[:end].decode("utf-8").split("\n")
    except UnicodeDecodeError:
        raise CorruptFile("checkpoint header is not UTF-8") from None
    payload = data[end + len(b"\n%end\n") :]
    if header[0] != f"{MAGIC} {FORMAT_VERSION}":
        raise CorruptFile(f"not a checkpoint (header {header[0][:40]!r})")
    manifest: dict[str, str] = {}
    blocks = []
    payload_info = None
    try:
        for line in header[1:]:
            if line.startswith("%block "):
                _, name, dtype, shape, offset, nbytes = line.split(" ")
                dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
                blocks.append((name, np.dtype(dtype), dims, int(offset), int(nbytes)))
            elif line.startswith("%payload "):
                _, size, digest = line.split(" ")
                payload_info = (int(size), digest)
            else:
                key, value = line.split("=", 1)
                manifest[key] = value
    except (ValueError, TypeError):
        raise CorruptFile(f"unreadable header line: {line[:80]!r}") from None
    if payload_info is None:
        raise CorruptFile("checkpoint has no payload record")
    size, digest = payload_info
    if len(payload) != size:
        raise CorruptFile(f"payload is {len(payload)} bytes, expected {size}")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise CorruptFile("payload checksum mismatch")
    state = {}
    for name, dtype, dims, offset, nbytes in blocks:
        if offset + nbytes > size or int(np.prod(dims, dtype=np.int64)) * dtype.itemsize != nbytes:
            raise CorruptFile(f"block {name} does not fit its declared shape")
        state[name] = np.frombuffer(payload, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset).reshape(dims).copy()
    return Checkpoint(state, manifest)


def load_checkpoint(path, validate: bool = True) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptFile(f"cannot read checkpoint {path}: {exc}") from None
    ckpt = parse_checkpoint(data)
    if validate:
        _check_shapes(AddressTagger(ckpt.model_config), ckpt.state)
    return ckpt
