"""Readers and writers for the model, dataset and system file formats.

All formats are line-oriented, versioned and self-describing; floats are
written with 17 significant digits so values round-trip bit-exactly.
Dataset sample blocks may be stored as decimal text (default) or as a
little-endian float64 binary block; both readers are provided.

Model file grammar (``greybox-model v1``)::

    greybox-model v1
    n: <int>            m: <int>          p: <int>        s: <int>
    sample_period: <float>
    basis: (ch,order,exp)[*(...)] [; ...]
    meta: <key>=<value>                      # zero or more
    A:                                        # then n rows of n values
    ... B: (n x m), C: (p x n), D: (p x m), E: (n x s), F: (p x s)

Dataset file grammar (``greybox-dataset v1``)::

    greybox-dataset v1
    format: text | binary
    fs: <float>
    samples_per_period: <int>
    periods: <int>
    channels: <name> ...
    units: <unit> ...
    inputs: <name> ...
    excited_lines: <a:b or k> ...            # optional
    seed: <int>                               # optional
    meta: <key>=<value>                       # zero or more
    data:
    channel <name>                            # text mode, per channel
    <one sample per line>
    ...                                       # binary mode: raw '<f8',
                                              # channel-major, C*P*N values

System file grammar (``greybox-system v1``)::

    greybox-system v1
    n_dof: <int>
    m: <int>
    outputs: q<i> | qd<i> ...
    meta: <key>=<value>
    M: / C_v: / K: / S:                       # each followed by value rows
    nonlinear_elements:
    <coefficient> ; <load values> ; <monomial>
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisFunctionSet, Monomial
from .exceptions import DataFormatError
from .model import GreyBoxModel
from .signals import SignalRecord
from .simulate import MechanicalSystemSpec, NonlinearElement

__all__ = [
    "Dataset",
    "write_model",
    "read_model",
    "write_dataset",
    "read_dataset",
    "write_system",
    "read_system",
]

MODEL_MAGIC = "greybox-model v1"
DATASET_MAGIC = "greybox-dataset v1"
SYSTEM_MAGIC = "greybox-system v1"


def _fmt(x):
    return f"{float(x):.17g}"


def _fmt_matrix(mat):
    return [" ".join(_fmt(v) for v in row) for row in np.atleast_2d(mat)]


def _meta_lines(meta):
    lines = []
    for key in sorted(meta or {}):
        val = str(meta[key])
        if "\n" in val:
            raise DataFormatError(f"meta value for {key!r} contains a newline")
        lines.append(f"meta: {key}={val}")
    return lines


class _HeaderParser:
    """Sequential reader over decoded header lines."""

    def __init__(self, lines, path):
        self.lines = lines
        self.pos = 0
        self.path = path
        self.meta = {}

    def fail(self, msg):
        raise DataFormatError(f"{self.path}: {msg} (line {self.pos})")

    def next_line(self):
        while self.pos < len(self.lines):
            raw = self.lines[self.pos]
            self.pos += 1
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("meta:"):
                body = line[len("meta:"):].strip()
                key, _, val = body.partition("=")
                self.meta[key.strip()] = val
                continue
            return line
        return None

    def expect(self, key):
        line = self.next_line()
        if line is None or not line.startswith(key + ":"):
            self.fail(f"expected {key!r} entry, got {line!r}")
        return line[len(key) + 1:].strip()

    def matrix(self, name, rows, cols):
        tag = self.next_line()
        if tag != f"{name}:":
            self.fail(f"expected matrix header {name}:, got {tag!r}")
        out = np.empty((rows, cols))
        for i in range(rows):
            if self.pos >= len(self.lines):
                self.fail(f"matrix {name} is truncated")
            vals = self.lines[self.pos].split()
            self.pos += 1
            if len(vals) != cols:
                self.fail(f"matrix {name} row {i} has {len(vals)} values, expected {cols}")
            out[i] = [float(v) for v in vals]
        return out


def write_model(path, model, meta=None):
    """Write a GreyBoxModel as decimal text."""
    lines = [
        MODEL_MAGIC,
        f"n: {model.n}",
        f"m: {model.m}",
        f"p: {model.p}",
        f"s: {model.s}",
        f"sample_period: {_fmt(model.sample_period)}",
        f"basis: {model.basis.to_text()}",
    ]
    lines += _meta_lines(meta)
    for name in "ABCDEF":
        lines.append(f"{name}:")
        lines += _fmt_matrix(getattr(model, name))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model(path):
    """Read a model file; returns (GreyBoxModel, meta dict)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    hp = _HeaderParser(lines, str(path))
    if hp.next_line() != MODEL_MAGIC:
        hp.fail(f"not a {MODEL_MAGIC!r} file")
    try:
        n = int(hp.expect("n"))
        m = int(hp.expect("m"))
        p = int(hp.expect("p"))
        s = int(hp.expect("s"))
        sample_period = float(hp.expect("sample_period"))
        basis = BasisFunctionSet.from_text(hp.expect("basis"))
        A = hp.matrix("A", n, n)
        B = hp.matrix("B", n, m)
        C = hp.matrix("C", p, n)
        D = hp.matrix("D", p, m)
        E = hp.matrix("E", n, s)
        F = hp.matrix("F", p, s)
        model = GreyBoxModel(A, B, C, D, E, F, basis, sample_period)
    except (ValueError, DataFormatError) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"{path}: {exc}") from None
    if len(basis) != s:
        raise DataFormatError(f"{path}: basis has {len(basis)} entries, header says {s}")
    return model, hp.meta


@dataclass
class Dataset:
    """A signal record split into input and output roles."""

    record: SignalRecord
    input_channels: tuple
    units: tuple = ()
    excited_lines: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    seed: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in self.input_channels:
            if name not in self.record.labels:
                raise DataFormatError(f"input channel {name!r} not in record")
        object.__setattr__(self, "excited_lines",
                           np.asarray(self.excited_lines, dtype=int))

    @property
    def output_channels(self):
        return tuple(s for s in self.record.labels if s not in self.input_channels)

    def input_record(self):
        return self.record.select(self.input_channels)

    def output_record(self):
        return self.record.select(self.output_channels)


def _compact_lines(lines):
    """Render sorted line indices as space-separated a:b runs."""
    lines = np.asarray(lines, dtype=int)
    if lines.size == 0:
        return ""
    parts = []
    start = prev = int(lines[0])
    for k in lines[1:]:
        k = int(k)
        if k == prev + 1:
            prev = k
            continue
        parts.append(f"{start}:{prev}" if prev > start else f"{start}")
        start = prev = k
    parts.append(f"{start}:{prev}" if prev > start else f"{start}")
    return " ".join(parts)


def _parse_lines(text):
    out = []
    for tok in text.split():
        if ":" in tok:
            a, b = tok.split(":")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    return np.asarray(out, dtype=int)


def write_dataset(path, dataset, fmt="text"):
    """Write a Dataset; ``fmt`` selects the sample block encoding."""
    if fmt not in ("text", "binary"):
        raise DataFormatError(f"unknown dataset format {fmt!r}")
    rec = dataset.record
    units = dataset.units or tuple("-" for _ in rec.labels)
    if len(units) != rec.n_channels:
        raise DataFormatError("one unit per channel required")
    header = [
        DATASET_MAGIC,
        f"format: {fmt}",
        f"fs: {_fmt(rec.fs)}",
        f"samples_per_period: {rec.period_length}",
        f"periods: {rec.periods}",
        "channels: " + " ".join(rec.labels),
        "units: " + " ".join(units),
        "inputs: " + " ".join(dataset.input_channels),
    ]
    if dataset.excited_lines.size:
        header.append("excited_lines: " + _compact_lines(dataset.excited_lines))
    if dataset.seed is not None:
        header.append(f"seed: {dataset.seed}")
    header += _meta_lines(dataset.meta)
    header.append("data:")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if fmt == "binary":
            fh.write(np.ascontiguousarray(rec.data, dtype="<f8").tobytes())
        else:
            for label, row in zip(rec.labels, rec.data):
                fh.write(f"channel {label}\n".encode("ascii"))
                fh.write("\n".join(_fmt(v) for v in row).encode("ascii"))
                fh.write(b"\n")


def read_dataset(path):
    """Read a dataset file in either encoding."""
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = b"data:\n"
    cut = blob.find(marker)
    if cut < 0:
        raise DataFormatError(f"{path}: missing 'data:' section")
    header_lines = blob[:cut].decode("ascii", errors="replace").splitlines()
    body = blob[cut + len(marker):]
    hp = _HeaderParser(header_lines, str(path))
    if hp.next_line() != DATASET_MAGIC:
        hp.fail(f"not a {DATASET_MAGIC!r} file")
    fmt = hp.expect("format")
    if fmt not in ("text", "binary"):
        hp.fail(f"unknown format {fmt!r}")
    try:
        fs = float(hp.expect("fs"))
        N = int(hp.expect("samples_per_period"))
        P = int(hp.expect("periods"))
    except ValueError as exc:
        hp.fail(str(exc))
    channels = hp.expect("channels").split()
    units = tuple(hp.expect("units").split())
    inputs = tuple(hp.expect("inputs").split())
    excited = np.array([], dtype=int)
    seed = None
    while True:
        line = hp.next_line()
        if line is None:
            break
        if line.startswith("excited_lines:"):
            excited = _parse_lines(line[len("excited_lines:"):])
        elif line.startswith("seed:"):
            seed = int(line[len("seed:"):])
        else:
            hp.fail(f"unexpected header entry {line!r}")
    total = len(channels) * P * N
    if fmt == "binary":
        if len(body) != 8 * total:
            raise DataFormatError(
                f"{path}: binary block has {len(body)} bytes, expected {8 * total}"
            )
        data = np.frombuffer(body, dtype="<f8").reshape(len(channels), P * N)
    else:
        data = np.empty((len(channels), P * N))
        text_lines = body.decode("ascii", errors="replace").splitlines()
        pos = 0
        for i, label in enumerate(channels):
            if pos >= len(text_lines) or text_lines[pos].split() != ["channel", label]:
                raise DataFormatError(
                    f"{path}: expected 'channel {label}' block at data line {pos}"
                )
            pos += 1
            chunk = text_lines[pos: pos + P * N]
            if len(chunk) != P * N:
                raise DataFormatError(f"{path}: channel {label} block is truncated")
            try:
                data[i] = np.asarray(chunk, dtype=float)
            except ValueError:
                raise DataFormatError(
                    f"{path}: channel {label} contains non-numeric samples"
                ) from None
            pos += P * N
    rec = SignalRecord(data, fs, N, labels=channels)
    return Dataset(rec, inputs, units, excited, seed, hp.meta)


def write_system(path, sys, meta=None):
    """Write a MechanicalSystemSpec as decimal text."""
    lines = [
        SYSTEM_MAGIC,
        f"n_dof: {sys.n_dof}",
        f"m: {sys.n_inputs}",
        "outputs: " + " ".join(sys.output_labels()),
    ]
    lines += _meta_lines(meta)
    for name, mat in (("M", sys.mass), ("C_v", sys.damping),
                      ("K", sys.stiffness), ("S", sys.input_matrix)):
        lines.append(f"{name}:")
        lines += _fmt_matrix(mat)
    lines.append("nonlinear_elements:")
    for el in sys.nonlinear_elements:
        load = " ".join(_fmt(v) for v in el.load)
        lines.append(f"{_fmt(el.coefficient)} ; {load} ; {el.monomial.to_text()}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_output_token(tok):
    if tok.startswith("qd"):
        return ("vel", int(tok[2:]))
    if tok.startswith("q"):
        return ("disp", int(tok[1:]))
    raise DataFormatError(f"bad output selector {tok!r}")


def read_system(path):
    """Read a system file; returns (MechanicalSystemSpec, meta dict)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    hp = _HeaderParser(lines, str(path))
    if hp.next_line() != SYSTEM_MAGIC:
        hp.fail(f"not a {SYSTEM_MAGIC!r} file")
    try:
        n = int(hp.expect("n_dof"))
        m = int(hp.expect("m"))
        outputs = [_parse_output_token(t) for t in hp.expect("outputs").split()]
        M = hp.matrix("M", n, n)
        Cv = hp.matrix("C_v", n, n)
        K = hp.matrix("K", n, n)
        S = hp.matrix("S", n, m)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    tag = hp.next_line()
    if tag != "nonlinear_elements:":
        hp.fail(f"expected 'nonlinear_elements:', got {tag!r}")
    elements = []
    while hp.pos < len(hp.lines):
        line = hp.next_line()
        if line is None:
            break
        parts = [s.strip() for s in line.split(";")]
        if len(parts) != 3:
            hp.fail(f"bad nonlinear element line {line!r}")
        try:
            coeff = float(parts[0])
            load = [float(v) for v in parts[1].split()]
            mono = Monomial.from_text(parts[2])
        except ValueError as exc:
            hp.fail(str(exc))
        elements.append(NonlinearElement(coeff, mono, load))
    try:
        sys = MechanicalSystemSpec(M, Cv, K, elements, S, outputs)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    return sys, hp.meta
