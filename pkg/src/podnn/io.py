"""Little-endian binary formats for snapshots, bases and models, plus CSV/JSON output.

All three binary files start with a 4-byte magic, a u32 version and a u32
flag word (bit 0: complex payload). Complex arrays are written as
interleaved (re, im) f64 pairs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import asdict

import numpy as np

from .analysis import REPORT_COLUMNS, StudyReport
from .config import problem_from_dict, problem_to_dict
from .nn import Mlp, Normalization, TrainHistory
from .pod import ReducedBasis, SnapshotSet

VERSION = 1
FLAG_COMPLEX = 1

SNAPSHOT_MAGIC = b"PSNP"
BASIS_MAGIC = b"PRBS"
MODEL_MAGIC = b"PMLP"


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def values(self, count: int, complex_: bool) -> np.ndarray:
        if complex_:
            raw = self.f64(2 * count)
            return raw[0::2] + 1j * raw[1::2]
        return self.f64(count)

    def text(self) -> str:
        return self.take(self.u64()).decode("utf-8")

    def header(self, magic: bytes) -> int:
        found = self.take(4)
        if found != magic:
            raise FormatError(f"{self.path}: expected magic {magic!r}, found {found!r}")
        version = self.u32()
        if version != VERSION:
            raise FormatError(f"{self.path}: unsupported version {version}")
        return self.u32()


def _pack_values(arr: np.ndarray, complex_: bool) -> bytes:
    arr = np.asarray(arr).ravel()
    if complex_:
        out = np.empty(2 * arr.size, dtype="<f8")
        out[0::2] = arr.real
        out[1::2] = arr.imag
        return out.tobytes()
    return np.asarray(arr.real, dtype="<f8").tobytes()


def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<Q", len(raw)) + raw


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def file_id(path) -> str:
    """SHA-256 of the file contents, used to tie a model to its basis."""
    return hashlib.sha256(_read_bytes(path)).hexdigest()


def write_snapshots(path, snap: SnapshotSet) -> None:
    cplx = snap.is_complex
    parts = [
        SNAPSHOT_MAGIC,
        struct.pack("<II", VERSION, FLAG_COMPLEX if cplx else 0),
        struct.pack("<QQQ", snap.n_dof, snap.n_samples, snap.s),
        _pack_values(snap.params, False),  # row-major
        _pack_values(snap.snapshots.T, cplx),  # column-major
    ]
    meta = {} if snap.problem_meta is None else problem_to_dict(snap.problem_meta)
    # trailing provenance block: u64 length + UTF-8 JSON of the problem config
    parts.append(_pack_text(json.dumps(meta, sort_keys=True)))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_snapshots(path) -> SnapshotSet:
    r = _Reader(_read_bytes(path), path)
    flags = r.header(SNAPSHOT_MAGIC)
    n_dof, n, s = r.u64(), r.u64(), r.u64()
    params = r.f64(n * s).reshape(n, s)
    snaps = r.values(n_dof * n, bool(flags & FLAG_COMPLEX)).reshape(n, n_dof).T
    meta = None
    if r.pos < len(r.data):
        d = json.loads(r.text())
        meta = problem_from_dict(d) if d else None
    return SnapshotSet(params, np.ascontiguousarray(snaps, dtype=np.complex128), meta)


def write_basis(path, basis: ReducedBasis) -> None:
    cplx = bool(np.any(basis.basis.imag != 0))
    tol = basis.tolerance
    tol_val = tol if isinstance(tol, float) else math.nan
    parts = [
        BASIS_MAGIC,
        struct.pack("<II", VERSION, FLAG_COMPLEX if cplx else 0),
        struct.pack("<QQQQQ", basis.basis.shape[0], basis.n_samples, basis.s, basis.rank,
                    basis.full_rank),
        struct.pack("<d", tol_val),
        _pack_text("" if tol is None or isinstance(tol, float) else str(tol)),
        _pack_values(basis.singular_values, False),
        _pack_values(basis.basis.T, cplx),  # column-major
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_basis(path) -> ReducedBasis:
    r = _Reader(_read_bytes(path), path)
    flags = r.header(BASIS_MAGIC)
    n_dof, n, s, J, n_sv = (r.u64() for _ in range(5))
    tol_val = struct.unpack("<d", r.take(8))[0]
    tol_tag = r.text()
    sigma = r.f64(n_sv)
    phi = r.values(n_dof * J, bool(flags & FLAG_COMPLEX)).reshape(J, n_dof).T
    tol = tol_tag if tol_tag else (None if math.isnan(tol_val) else tol_val)
    return ReducedBasis(np.ascontiguousarray(phi, dtype=np.complex128), sigma, tol, n, s)


def write_model(path, model: Mlp, basis_id: str) -> None:
    dims = model.dims
    parts = [
        MODEL_MAGIC,
        struct.pack("<II", VERSION, 0),
        struct.pack("<Q", len(dims)),
        struct.pack(f"<{len(dims)}Q", *dims),
    ]
    for W, b in zip(model.weights, model.biases):
        parts.append(_pack_values(W, False))  # row-major
        parts.append(_pack_values(b, False))
    for norm in (model.input_norm, model.output_norm):
        parts.append(_pack_values(norm.center, False))
        parts.append(_pack_values(norm.scale, False))
    parts.append(_pack_text(basis_id))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_model(path) -> tuple[Mlp, str]:
    r = _Reader(_read_bytes(path), path)
    r.header(MODEL_MAGIC)
    n_dims = r.u64()
    dims = [r.u64() for _ in range(n_dims)]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(r.f64(fan_in * fan_out).reshape(fan_out, fan_in))
        biases.append(r.f64(fan_out))
    norms = [Normalization(r.f64(w), r.f64(w)) for w in (dims[0], dims[-1])]
    return Mlp(weights, biases, norms[0], norms[1]), r.text()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_points_csv(path, points) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(points):
            w.writerow([repr(float(v)) for v in row])


def read_points_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_history_csv(path, hist: TrainHistory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "lr"])
        for k, (loss, lr) in enumerate(zip(hist.loss, hist.lr), start=1):
            w.writerow([k, repr(loss), repr(lr)])


def write_report_csv(path, report: StudyReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in report.rows:
            d = asdict(row)
            w.writerow([_fmt(d[c]) for c in REPORT_COLUMNS])


def read_report_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ints = {"N", "s", "J", "n", "width", "hidden_layers"}
    return [{k: int(v) if k in ints else float(v) for k, v in r.items()} for r in rows]


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, tuple):
        return list(v)
    return v


def write_report_json(path, report: StudyReport, run_config: dict | None = None) -> None:
    cfg = report.config
    payload = {
        "slopes": {k: _jsonable(v) for k, v in report.slopes.items()},
        "study": {
            "problem": problem_to_dict(cfg.problem),
            "s": cfg.s,
            "n_grid": list(cfg.n_grid),
            "alpha": cfg.rates.alpha,
            "p": cfg.rates.p,
            "rank_mode": cfg.rank_mode,
            "tolerance": cfg.tolerance,
            "test_size": cfg.test_size,
            "test_start": cfg.test_begin,
            "start_index": cfg.start_index,
            "train": {k: _jsonable(v) for k, v in asdict(cfg.train).items()},
            "train_nn": cfg.train_nn,
        },
    }
    if run_config is not None:
        payload["config"] = {
            sec: {k: _jsonable(v) for k, v in keys.items()} for sec, keys in run_config.items()
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
