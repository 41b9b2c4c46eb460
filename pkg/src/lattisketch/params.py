"""Named parameter arrays plus the binary checkpoint container.

Checkpoint layout: one line of JSON (UTF-8, newline-terminated) describing
the arrays as {name, shape, offset, trainable} with offsets in elements,
followed by every array's data concatenated as little-endian float32.
The header also carries the model configs, the training iteration, and
any optimizer scalars, so a file is self-describing.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from .errors import CheckpointFormatError, CheckpointWriteFailure

CHECKPOINT_MAGIC = "lattisketch-checkpoint"
CHECKPOINT_VERSION = 1


class ParameterStore:
    """Ordered name -> ndarray mapping with a per-array trainable flag.

    Buffers (running statistics, optimizer moments) live alongside weights
    with trainable=False so one container serializes everything.
    """

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, array, trainable: bool = True) -> None:
        if name in self._arrays:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._arrays[name] = np.asarray(array)
        self._trainable[name] = bool(trainable)

    def __contains__(self, name) -> bool:
        return name in self._arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        # assignment only updates data; declaring new arrays goes through add()
        if name not in self._arrays:
            raise KeyError(name)
        self._arrays[name] = np.asarray(value)

    def names(self) -> list:
        return list(self._arrays)

    def trainable_names(self) -> list:
        return [n for n, t in self._trainable.items() if t]

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def items(self):
        return self._arrays.items()

    def n_elements(self, trainable_only: bool = False) -> int:
        names = self.trainable_names() if trainable_only else self.names()
        return int(sum(self._arrays[n].size for n in names))

    def astype(self, dtype) -> "ParameterStore":
        out = ParameterStore()
        for name, arr in self._arrays.items():
            out.add(name, arr.astype(dtype), self._trainable[name])
        return out

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for name, arr in self._arrays.items():
            out.add(name, arr.copy(), self._trainable[name])
        return out

    def zero_grads(self) -> dict:
        return {n: np.zeros_like(self._arrays[n]) for n in self.trainable_names()}


def save_checkpoint(path, store: ParameterStore, iteration: int,
                    configs: dict | None = None, extra: dict | None = None) -> None:
    """Write the container atomically (temp file + rename)."""
    entries = []
    offset = 0
    for name, arr in store.items():
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "offset": offset,
                "trainable": store.is_trainable(name),
            }
        )
        offset += int(arr.size)
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "iteration": int(iteration),
        "configs": configs or {},
        "extra": extra or {},
        "arrays": entries,
    }
    directory = os.path.dirname(os.fspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".ckpt.tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            for _, arr in store.items():
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointWriteFailure(f"cannot write {path}: {exc}") from exc


def load_checkpoint(path) -> tuple:
    """Read a container; returns (store, header dict)."""
    try:
        with open(path, "rb") as fh:
            first = fh.readline()
            payload = fh.read()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read {path}: {exc}") from exc
    try:
        header = json.loads(first.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"bad checkpoint header: {exc}") from exc
    if header.get("format") != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("not a checkpoint file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported version {header.get('version')}")
    data = np.frombuffer(payload, dtype="<f4")
    store = ParameterStore()
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        if start + size > data.size:
            raise CheckpointFormatError(f"array {entry['name']!r} overruns payload")
        arr = data[start : start + size].reshape(shape).copy()
        store.add(entry["name"], arr, entry.get("trainable", True))
    return store, header


def checkpoint_hash(path) -> str:
    """Content hash of a checkpoint file (sha256 hex)."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
