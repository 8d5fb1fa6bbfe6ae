"""Serialisation of lattice sample streams.

Binary layout (little endian), version 1::

    magic    4 bytes  b"DGLS"
    version  uint16
    d        uint16
    count    uint64
    records  count x {M: d*d float64 row-major, xi: d float64,
                      class tag: uint8 (0 integer, 1 rational, 2 irrational),
                      approximate: uint8, s: uint32 (denominator, 0 unless rational),
                      m: d int32 (class representative, 0 unless rational)}

CSV has a header row ``M00,...,xi0,...,class,s,m0,...,approximate``.
"""

from __future__ import annotations

import csv
import io
import struct

import numpy as np

from .errors import ConfigError
from .haar import LatticeSample
from .lattice import AffineLattice, OffsetClass, UnimodularMatrix

MAGIC = b"DGLS"
VERSION = 1
_TAGS = {0: "integer", 1: "rational", 2: "irrational"}


def _record_dtype(d: int):
    return np.dtype([("M", "<f8", (d * d,)), ("xi", "<f8", (d,)), ("tag", "u1"), ("approx", "u1"), ("s", "<u4"), ("m", "<i4", (d,))])


def _class_of(tag: int, s: int, m) -> OffsetClass:
    kind = _TAGS[int(tag)]
    if kind == "rational":
        return OffsetClass.rational(int(s), [int(v) for v in m])
    return OffsetClass(kind)


def write_binary(samples, fh) -> None:
    samples = list(samples)
    d = samples[0].spec.dim if samples else 0
    rec = np.zeros(len(samples), dtype=_record_dtype(max(d, 1)))
    for i, smp in enumerate(samples):
        rec["M"][i] = smp.spec.basis.entries.ravel()
        rec["xi"][i] = smp.spec.offset
        rec["tag"][i] = smp.offset_class.tag
        rec["approx"][i] = int(smp.approximate)
        rec["s"][i] = smp.offset_class.s or 0
        rec["m"][i] = smp.offset_class.m or 0
    fh.write(MAGIC + struct.pack("<HHQ", VERSION, d, len(samples)))
    fh.write(rec.tobytes())


def read_binary(fh) -> list[LatticeSample]:
    head = fh.read(16)
    if len(head) != 16 or head[:4] != MAGIC:
        raise ConfigError("not a lattice sample stream")
    version, d, count = struct.unpack("<HHQ", head[4:])
    if version != VERSION:
        raise ConfigError(f"unsupported stream version {version}")
    dt = _record_dtype(max(d, 1))
    rec = np.frombuffer(fh.read(dt.itemsize * count), dtype=dt, count=count)
    out = []
    for r in rec:
        lat = AffineLattice(UnimodularMatrix(r["M"].reshape(d, d)), r["xi"])
        out.append(LatticeSample(lat, _class_of(r["tag"], r["s"], r["m"]), 1.0, bool(r["approx"])))
    return out


def write_csv(samples, fh) -> None:
    samples = list(samples)
    d = samples[0].spec.dim if samples else 0
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"M{i}{j}" for i in range(d) for j in range(d)] + [f"xi{i}" for i in range(d)] + ["class", "s"] + [f"m{i}" for i in range(d)] + ["approximate"])
    for smp in samples:
        w.writerow(
            [repr(float(x)) for x in smp.spec.basis.entries.ravel()]
            + [repr(float(x)) for x in smp.spec.offset]
            + [smp.offset_class.kind, smp.offset_class.s or 0]
            + list(smp.offset_class.m or [0] * d)
            + [int(smp.approximate)]
        )


def read_csv(fh) -> list[LatticeSample]:
    rows = list(csv.reader(fh))
    if not rows:
        return []
    header = rows[0]
    d = sum(1 for h in header if h.startswith("xi"))
    out = []
    for row in rows[1:]:
        M = np.array([float(x) for x in row[: d * d]]).reshape(d, d)
        xi = np.array([float(x) for x in row[d * d : d * d + d]])
        rest = row[d * d + d :]
        kind, s, m, approx = rest[0], int(rest[1]), [int(x) for x in rest[2 : 2 + d]], bool(int(rest[2 + d]))
        tag = {v: k for k, v in _TAGS.items()}[kind]
        out.append(LatticeSample(AffineLattice(UnimodularMatrix(M), xi), _class_of(tag, s, m), 1.0, approx))
    return out


def to_bytes(samples) -> bytes:
    buf = io.BytesIO()
    write_binary(samples, buf)
    return buf.getvalue()


def from_bytes(data: bytes) -> list[LatticeSample]:
    return read_binary(io.BytesIO(data))
