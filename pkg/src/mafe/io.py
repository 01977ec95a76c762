"""Delimited-text readers and writers, key=value configs and run manifests.

Floats are written with 17 significant digits so that every file re-loads
to bit-identical values.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np
from scipy import sparse

from .datasets import PixelDataset
from .exceptions import DataFormatError, ValidationError
from .graph import NeighborhoodGraph

FLOAT_FMT = ".17g"


def fmt(x):
    return format(float(x), FLOAT_FMT)


def _open_write(path):
    return open(path, "w", newline="", encoding="utf-8")


def _parse_float(cell, path, line, col):
    try:
        value = float(cell)
    except ValueError:
        raise DataFormatError(f"{path}:{line}: column {col}: not a number: {cell!r}") from None
    if not np.isfinite(value):
        raise DataFormatError(f"{path}:{line}: column {col}: non-finite value {cell!r}")
    return value


def _read_rows(path):
    """Yield (line_number, cells), skipping blank and '#' lines."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, next(csv.reader([stripped]))


def _read_table(path, check_header):
    rows = _read_rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    check_header(header, lineno)
    body = []
    for lineno, cells in rows:
        if len(cells) != len(header):
            raise DataFormatError(
                f"{path}:{lineno}: expected {len(header)} columns, found {len(cells)}"
            )
        body.append([_parse_float(c, path, lineno, header[k]) for k, c in enumerate(cells)])
    return header, np.array(body, dtype=np.float64).reshape(len(body), len(header))


# pixels -------------------------------------------------------------------

def load_pixels_csv(path):
    """Read ``row,col,b0,...,b{d-1}[,label]`` into a :class:`PixelDataset`."""

    def check(header, lineno):
        has_label = header[-1] == "label"
        bands = header[2:-1] if has_label else header[2:]
        expected = ["row", "col"] + [f"b{k}" for k in range(len(bands))]
        if header[:2 + len(bands)] != expected or not bands:
            raise DataFormatError(
                f"{path}:{lineno}: header must be row,col,b0,...,b{{d-1}}[,label]"
            )

    header, data = _read_table(path, check)
    if data.shape[0] == 0:
        raise DataFormatError(f"{path}: no pixel rows")
    labels = None
    if header[-1] == "label":
        labels = data[:, -1]
        data = data[:, :-1]
        bad = np.flatnonzero(labels != np.round(labels))
        if bad.size:
            raise DataFormatError(f"{path}: non-integer label in data row {bad[0] + 1}")
        labels = labels.astype(np.int64)
    return PixelDataset(data[:, :2], data[:, 2:], labels)


def save_pixels_csv(dataset, path):
    d = dataset.n_bands
    header = ["row", "col"] + [f"b{k}" for k in range(d)]
    if dataset.labels is not None:
        header.append("label")
    with _open_write(path) as fh:
        fh.write(",".join(header) + "\n")
        for i in range(dataset.n_pixels):
            cells = [fmt(v) for v in dataset.coords[i]] + [fmt(v) for v in dataset.spectra[i]]
            if dataset.labels is not None:
                cells.append(str(int(dataset.labels[i])))
            fh.write(",".join(cells) + "\n")


# graphs -------------------------------------------------------------------

def save_graph_csv(graph, path):
    """Edge list ``i,j,w`` with i < j, preceded by a ``#`` metadata line."""
    meta = {"n": graph.n, "k": graph.k, "kind": graph.kind}
    if graph.sigma_s is not None:
        meta["sigma_s"] = fmt(graph.sigma_s)
    rows, cols, vals = graph.edges()
    with _open_write(path) as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write("i,j,w\n")
        for i, j, w in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{i},{j},{fmt(w)}\n")


def _graph_meta(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        raise DataFormatError(f"{path}:1: missing '# n=...' metadata line")
    meta = {}
    for token in first[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise DataFormatError(f"{path}:1: malformed metadata token {token!r}")
        meta[key] = value
    if "n" not in meta:
        raise DataFormatError(f"{path}:1: metadata lacks n=")
    return meta


def load_graph_csv(path):
    if not Path(path).is_file():
        raise ValidationError(f"no such file: {path}")
    meta = _graph_meta(path)

    def check(header, lineno):
        if header != ["i", "j", "w"]:
            raise DataFormatError(f"{path}:{lineno}: header must be i,j,w")

    _, data = _read_table(path, check)
    try:
        n = int(meta["n"])
        k = int(meta.get("k", 0))
    except ValueError:
        raise DataFormatError(f"{path}:1: n and k must be integers") from None
    i = data[:, 0].astype(np.int64)
    j = data[:, 1].astype(np.int64)
    w = data[:, 2]
    if np.any(i != data[:, 0]) or np.any(j != data[:, 1]):
        raise DataFormatError(f"{path}: vertex ids must be integers")
    if np.any(i >= j) or np.any(i < 0) or np.any(j >= n):
        raise DataFormatError(f"{path}: edges must satisfy 0 <= i < j < n={n}")
    if np.any(w < 0):
        raise DataFormatError(f"{path}: negative edge weight")
    upper = sparse.csr_matrix((w, (i, j)), shape=(n, n))
    W = (upper + upper.T).tocsr()
    W.sort_indices()
    sigma_s = float(meta["sigma_s"]) if "sigma_s" in meta else None
    return NeighborhoodGraph(W, k, meta.get("kind", "unknown"), sigma_s=sigma_s)


# embeddings and trajectories ----------------------------------------------

def save_embedding_csv(Z, path):
    Z = np.atleast_2d(Z)
    with _open_write(path) as fh:
        fh.write(",".join(["id"] + [f"z{k + 1}" for k in range(Z.shape[1])]) + "\n")
        for i, row in enumerate(Z):
            fh.write(",".join([str(i)] + [fmt(v) for v in row]) + "\n")


def load_embedding_csv(path):
    def check(header, lineno):
        m = len(header) - 1
        if header != ["id"] + [f"z{k + 1}" for k in range(m)] or m < 1:
            raise DataFormatError(f"{path}:{lineno}: header must be id,z1,...,zm")

    _, data = _read_table(path, check)
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise DataFormatError(f"{path}: ids must run 0..N-1 in order")
    return data[:, 1:]


def save_trajectory_csv(trajectory, path):
    """One line per (snapshot, vertex): ``t,id,z1..zm,energy,gradnorm``."""
    m = trajectory[0].Z.shape[1]
    with _open_write(path) as fh:
        fh.write(",".join(["t", "id"] + [f"z{k + 1}" for k in range(m)] + ["energy", "gradnorm"]) + "\n")
        for snap in trajectory.snapshots:
            tail = [fmt(snap.energy), fmt(snap.grad_norm)]
            for i, row in enumerate(snap.Z):
                fh.write(",".join([str(snap.t), str(i)] + [fmt(v) for v in row] + tail) + "\n")


def load_trajectory_csv(path):
    """Return a list of (t, Z, energy, gradnorm) tuples."""

    def check(header, lineno):
        m = len(header) - 4
        expected = ["t", "id"] + [f"z{k + 1}" for k in range(m)] + ["energy", "gradnorm"]
        if m < 1 or header != expected:
            raise DataFormatError(f"{path}:{lineno}: header must be t,id,z1..zm,energy,gradnorm")

    _, data = _read_table(path, check)
    out = []
    for t in np.unique(data[:, 0]):
        block = data[data[:, 0] == t]
        out.append((int(t), block[:, 2:-2], float(block[0, -2]), float(block[0, -1])))
    return out


# reports ------------------------------------------------------------------

def save_report_csv(report, path):
    with _open_write(path) as fh:
        fh.write("item,value,stderr\n")
        for c, a, s in zip(report.classes, report.per_class_accuracy, report.per_class_se):
            fh.write(f"class_{c},{fmt(a)},{fmt(s)}\n")
        fh.write(f"overall_accuracy,{fmt(report.overall_accuracy)},{fmt(report.overall_accuracy_se)}\n")
        fh.write(f"kappa,{fmt(report.kappa)},{fmt(report.kappa_se)}\n")
        if report.frobenius is not None:
            fh.write(f"frobenius,{fmt(report.frobenius)},\n")
        fh.write(f"runs,{report.runs},\n")
        fh.write(f"dimension,{report.dimension},\n")
        fh.write(f"metric,{report.metric},\n")


def save_sweep_csv(rows, path):
    with _open_write(path) as fh:
        fh.write("m,mean_error,std_error,metric\n")
        for r in rows:
            fh.write(f"{r.m},{fmt(r.mean_error)},{fmt(r.std_error)},{r.metric}\n")


# config and manifest ------------------------------------------------------

def load_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment.

    Keys are normalised to use underscores, so ``xi-a`` and ``xi_a`` are
    the same key.  Values are returned as strings.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such config file: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise DataFormatError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def write_manifest(path, payload):
    """JSON manifest with sorted keys (no timestamps, so it is reproducible)."""
    with _open_write(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, os.PathLike):
        return os.fspath(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
