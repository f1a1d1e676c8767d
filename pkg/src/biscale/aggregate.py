"""Packet-count series ``X_{Delta0}(t)`` and inter-arrival summaries."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyStream, TooFewPackets
from .ingest import PacketArrays

DEFAULT_DELTA0 = 2.0 ** -3 * 1e-3  # 0.125 ms

_MAGIC_COUNTS = b"BSC1"
_MAGIC_FLOAT = b"BSF1"
_HEADER = struct.Struct("<4sdQ")


@dataclass(frozen=True)
class BinnedSeries:
    delta0: float
    counts: np.ndarray
    start_time: float = 0.0
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError("delta0 must be > 0")
        arr = np.asarray(self.counts)
        if arr.dtype.kind in "iub":
            if arr.size and arr.min() < 0:
                raise ValueError("counts must be non-negative")
            arr = arr.astype(np.uint32, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    def __len__(self):
        return self.counts.size

    @property
    def is_count(self) -> bool:
        return self.counts.dtype.kind == "u"

    @property
    def total(self):
        return int(self.counts.sum(dtype=np.int64)) if self.is_count else float(self.counts.sum())

    @property
    def duration(self) -> float:
        return self.counts.size * self.delta0

    def coarsen(self) -> "BinnedSeries":
        """Pairwise-summed series at ``2 * delta0`` (a trailing odd bin is kept alone)."""
        c = self.counts.astype(np.int64 if self.is_count else np.float64)
        if c.size % 2:
            c = np.append(c, 0)
        return BinnedSeries(2 * self.delta0, c.reshape(-1, 2).sum(axis=1), self.start_time,
                            self.label, dict(self.meta))


def _timestamps(packets) -> np.ndarray:
    if isinstance(packets, PacketArrays):
        return packets.timestamp
    if isinstance(packets, np.ndarray):
        return np.asarray(packets, dtype=float)
    return np.fromiter((p.timestamp for p in packets), dtype=float)


def aggregate(packets, delta0: float = DEFAULT_DELTA0, label: str = "",
              n_bins: int | None = None, drop_partial: bool = False) -> BinnedSeries:
    """Count packets per bin of width ``delta0``.

    ``packets`` is a :class:`PacketArrays`, an iterable of
    :class:`~biscale.ingest.PacketRecord`, or an array of rebased
    timestamps.  Bin ``i`` covers ``[i delta0, (i+1) delta0)``; the series
    ends with the bin holding the last packet unless ``n_bins`` fixes the
    length (packets beyond it are then discarded).  ``drop_partial`` trims
    the last bin when it extends past the last timestamp.
    """
    if not delta0 > 0:
        raise ValueError("delta0 must be > 0")
    t = _timestamps(packets)
    if t.size == 0:
        raise EmptyStream("no packets to aggregate")
    idx = np.floor(t / delta0).astype(np.int64)
    if idx.min() < 0:
        raise ValueError("timestamps must be rebased to >= 0")
    if n_bins is None:
        n_bins = int(idx.max()) + 1
        if drop_partial and n_bins * delta0 > t.max() and n_bins > 1:
            n_bins -= 1
    idx = idx[idx < n_bins]
    counts = np.bincount(idx, minlength=n_bins)
    return BinnedSeries(delta0, counts.astype(np.uint32), 0.0, label)


def median_iat(packets) -> float:
    """Median of successive inter-arrival times, in seconds."""
    t = _timestamps(packets)
    if t.size < 2:
        raise TooFewPackets(f"need >= 2 packets for an inter-arrival time, got {t.size}")
    return float(np.median(np.diff(np.sort(t))))


def iat_octave(iat: float, delta0: float = DEFAULT_DELTA0) -> int:
    """Octave ``j_tau = round(log2(iat / delta0))``."""
    if iat <= 0:
        return 0
    return int(round(math.log2(iat / delta0)))


# --------------------------------------------------------------------------
# serialisation


def write_series(path, series: BinnedSeries):
    """Flat binary: ``magic, delta0 (f8), N (u8)`` then little-endian body.

    Count series store uint32 bins (magic ``BSC1``); real-valued series
    store float64 (``BSF1``).
    """
    if series.is_count:
        magic, body = _MAGIC_COUNTS, series.counts.astype("<u4").tobytes()
    else:
        magic, body = _MAGIC_FLOAT, series.counts.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, series.delta0, series.counts.size))
        fh.write(body)


def read_series(path, label: str | None = None) -> BinnedSeries:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated series header")
        magic, delta0, n = _HEADER.unpack(head)
        if magic == _MAGIC_COUNTS:
            dtype = "<u4"
        elif magic == _MAGIC_FLOAT:
            dtype = "<f8"
        else:
            raise ValueError(f"{path}: not a series file (magic {magic!r})")
        body = np.frombuffer(fh.read(), dtype=dtype)
    if body.size != n:
        raise ValueError(f"{path}: header says {n} bins, body has {body.size}")
    return BinnedSeries(delta0, body.copy(), label=label if label is not None else str(path))


def write_series_csv(path, series: BinnedSeries):
    """Write ``t,count`` rows after a ``# delta0=`` line; ``path`` may be an open file."""
    if hasattr(path, "write"):
        _write_series_rows(path, series)
        return
    with open(path, "w", newline="") as fh:
        _write_series_rows(fh, series)


def _write_series_rows(fh, series: BinnedSeries):
    fh.write(f"# delta0={series.delta0!r}\n")
    t = (series.start_time + np.arange(len(series)) * series.delta0).tolist()
    c = series.counts.tolist()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "count"])
    w.writerows(zip(map(repr, t), c if series.is_count else map(repr, c)))


def read_series_csv(path) -> BinnedSeries:
    """Read ``t,count`` rows; ``path`` may also be an open text file."""
    delta0 = None
    if hasattr(path, "read"):
        lines = path.read().splitlines()
        path = getattr(path, "name", "<stream>")
    else:
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
    if lines and lines[0].startswith("# delta0="):
        delta0 = float(lines[0].split("=", 1)[1])
        lines = lines[1:]
    rows = [r for r in csv.reader(lines[1:]) if r]
    t = np.array([float(r[0]) for r in rows])
    raw = [r[1] for r in rows]
    if all(v.lstrip("-").isdigit() for v in raw):
        counts = np.array([int(v) for v in raw], dtype=np.int64)
    else:
        counts = np.array([float(v) for v in raw])
    if delta0 is None:
        delta0 = float(t[1] - t[0]) if t.size > 1 else 1.0
    return BinnedSeries(delta0, counts, float(t[0]) if t.size else 0.0, label=str(path))


def load_series(path) -> BinnedSeries:
    if str(path).lower().endswith(".csv"):
        return read_series_csv(path)
    return read_series(path)
