"""File formats: embeddings, history CSV, metrics CSV, configs, labels.

Everything is written atomically (temp file in the same directory, then
rename) so an interrupted run never leaves a partial artifact under the
final name.
"""

from __future__ import annotations

import csv
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from .errors import MalformedRecord, MissingHistory


@contextmanager
def atomic_open(path, mode="w"):
    """Open a temp file next to ``path`` and rename it into place on success."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, temp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        binary = "b" in mode
        with os.fdopen(fd, "wb" if binary else "w", encoding=None if binary else "utf-8") as handle:
            yield handle
        os.replace(temp, path)
        temp = None
    finally:
        if temp is not None and os.path.exists(temp):
            os.unlink(temp)


def save_embeddings_text(vectors: np.ndarray, names: list[str], path) -> None:
    """word2vec-style text: a "count dim" header, then one node per line."""
    with atomic_open(path) as handle:
        handle.write(f"{len(names)} {vectors.shape[1]}\n")
        for name, row in zip(names, vectors):
            handle.write(name + " " + " ".join(f"{x:.8g}" for x in row) + "\n")


def load_embeddings_text(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise MalformedRecord(f"{path}: bad embedding header")
        count, dim = int(header[0]), int(header[1])
        names, rows = [], np.empty((count, dim))
        for i in range(count):
            fields = handle.readline().split()
            if len(fields) != dim + 1:
                raise MalformedRecord(f"{path}: embedding line {i + 2} has {len(fields)} fields")
            names.append(fields[0])
            rows[i] = [float(x) for x in fields[1:]]
    return names, rows


def save_embeddings_binary(vectors: np.ndarray, names: list[str], path) -> None:
    """Raw little-endian float32 rows plus a sidecar ``<path>.index`` of names."""
    with atomic_open(path, "wb") as handle:
        handle.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())
    with atomic_open(f"{os.fspath(path)}.index") as handle:
        handle.write(f"{len(names)} {vectors.shape[1]}\n")
        handle.writelines(name + "\n" for name in names)


def load_embeddings_binary(path) -> tuple[list[str], np.ndarray]:
    with open(f"{os.fspath(path)}.index", "r", encoding="utf-8") as handle:
        count, dim = (int(x) for x in handle.readline().split())
        names = [handle.readline().strip() for _ in range(count)]
    data = np.fromfile(path, dtype="<f4").astype(np.float64)
    return names, data.reshape(count, dim)


HISTORY_COLUMNS = ("epoch", "step", "source_type", "target_type", "probability")


def write_history_csv(rows, path) -> None:
    with atomic_open(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        writer.writerows(rows)


def read_history_csv(path):
    """Yield (epoch, step, source_type, target_type, probability) tuples."""
    if not os.path.exists(path):
        raise MissingHistory(f"history file {path} does not exist")
    out = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != HISTORY_COLUMNS:
            raise MissingHistory(f"history file {path} has no valid header")
        for fields in reader:
            if len(fields) != 5:
                raise MalformedRecord(f"{path}: history row with {len(fields)} fields")
            out.append((int(fields[0]), int(fields[1]), fields[2], fields[3], float(fields[4])))
    if not out:
        raise MissingHistory(f"history file {path} is empty")
    return out


def write_metrics_csv(rows, path) -> None:
    """Rows of (task, metric, value, std-over-repeats)."""
    with atomic_open(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("task", "metric", "value", "std_over_repeats"))
        for task, metric, value, std in rows:
            writer.writerow((task, metric, f"{value:.6f}", f"{std:.6f}"))


def write_transition_matrix_csv(values: np.ndarray, type_names: list[str], path) -> None:
    with atomic_open(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("source_type", "target_type", "probability"))
        for i, src in enumerate(type_names):
            for j, tgt in enumerate(type_names):
                writer.writerow((src, tgt, f"{values[i, j]:.10g}"))


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments allowed."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise MalformedRecord(f"{path} line {number}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_manifest(mapping: dict, path) -> None:
    with atomic_open(path) as handle:
        for key, value in mapping.items():
            handle.write(f"{key} = {value}\n")


def read_labels(path) -> dict[str, str]:
    """Label file: one ``node-id <tab> class-name`` per line."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise MalformedRecord(f"{path} line {number}: expected 2 fields")
            out[fields[0]] = fields[1]
    return out
