"""From pellet recordings to gesture tokens.

A recording holds 2-D pellet tracks sampled at a uniform rate (160 Hz
in the source corpus). Four scalar channels are derived from them:

``LA``  lip aperture, |UL_y - LL_y|
``TT``  tongue tip, first principal component of T1
``TD``  tongue dorsum, first principal component of T3
``TR``  tongue root, first principal component of T4

Channel signals are differentiated with second-order stencils, cut at
velocity zero crossings inside inter-pause intervals, and the
resulting tokens are screened by duration and by multiple velocity
peaks. Tokens serialize to one CSV each plus a manifest JSON.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks

from .errors import DataFormatError, DegenerateTrackError

__all__ = [
    "Recording",
    "GestureToken",
    "CHANNELS",
    "read_recording",
    "read_pauses",
    "lip_aperture",
    "pca_first_component",
    "channel_signal",
    "estimate_derivatives",
    "segment",
    "segment_recording",
    "filter_tokens",
    "write_tokens",
    "read_tokens",
]

CHANNELS = ("LA", "TT", "TD", "TR")
PELLETS = ("UL", "LL", "T1", "T3", "T4")
ZERO_TOL = 1e-9
MAX_DURATION = 0.200
PEAK_PROMINENCE = 0.05
MANIFEST_SCHEMA = "gesture-tokens/1"

STATUS_KEPT = "kept"
STATUS_DURATION = "excluded_duration"
STATUS_MULTIPEAK = "excluded_multipeak"


@dataclass(frozen=True)
class Recording:
    """Uniformly sampled pellet tracks, one (n, 2) array per pellet."""

    t: np.ndarray
    pellets: dict
    sample_rate: float

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("t must be 1-D with at least two samples")
        steps = np.diff(t)
        if not np.all(steps > 0):
            raise ValueError("t must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-9:
            raise ValueError("t must be uniformly sampled")
        pellets = {}
        for name, track in self.pellets.items():
            track = np.asarray(track, dtype=float)
            if track.shape != (t.size, 2):
                raise ValueError(f"pellet {name} must be (n, 2)")
            if not np.all(np.isfinite(track)):
                raise ValueError(f"pellet {name} contains non-finite samples")
            track = track.copy()
            track.flags.writeable = False
            pellets[name] = track
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pellets", pellets)

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class GestureToken:
    """One segmented gesture: signal slice, channel label, metadata."""

    token_id: str
    channel: str
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    sample_rate: float
    t0: float = 0.0
    speaker: str = ""
    status: str = STATUS_KEPT

    def __post_init__(self):
        arrays = {}
        for name in ("x", "v", "a"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            arr = arr.copy()
            arr.flags.writeable = False
            arrays[name] = arr
        if len({arr.size for arr in arrays.values()}) != 1:
            raise ValueError("x, v, a must share one length")
        if arrays["x"].size < 2:
            raise ValueError("a token needs at least two samples")
        if self.sample_rate <= 0 or not math.isfinite(self.sample_rate):
            raise ValueError(f"bad sample rate {self.sample_rate!r}")
        if self.status not in (STATUS_KEPT, STATUS_DURATION, STATUS_MULTIPEAK):
            raise ValueError(f"unknown status {self.status!r}")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def duration(self):
        return (self.x.size - 1) / self.sample_rate

    def __len__(self):
        return self.x.size


def read_recording(path):
    """Parse a pellet CSV (t plus <pellet>_x/<pellet>_y columns).

    Extra pellet columns are accepted and ignored; the required set is
    UL, LL, T1, T3, T4. The sample rate is inferred from t.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", path=path, line=1) from None
        if not header or header[0] != "t":
            raise DataFormatError("first column must be t", path=path, line=1)
        col_idx = {name: i for i, name in enumerate(header)}
        for pellet in PELLETS:
            for axis in ("x", "y"):
                if f"{pellet}_{axis}" not in col_idx:
                    raise DataFormatError(
                        f"missing column {pellet}_{axis}", path=path, line=1
                    )
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"expected {width} fields, got {len(row)}", path=path, line=lineno
                )
            try:
                rows.append([float(field) for field in row])
            except ValueError:
                raise DataFormatError("non-numeric field", path=path, line=lineno) from None
    if len(rows) < 2:
        raise DataFormatError("fewer than two data rows", path=path, line=1)
    data = np.asarray(rows)
    t = data[:, 0]
    pellets = {
        pellet: np.column_stack(
            [data[:, col_idx[f"{pellet}_x"]], data[:, col_idx[f"{pellet}_y"]]]
        )
        for pellet in PELLETS
    }
    try:
        rate = 1.0 / float(t[1] - t[0])
        return Recording(t=t, pellets=pellets, sample_rate=rate)
    except ValueError as exc:
        raise DataFormatError(str(exc), path=path) from exc


def read_pauses(path):
    """Parse a start,end CSV of pause intervals; must be sorted and disjoint."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", path=path, line=1) from None
        if header != ["start", "end"]:
            raise DataFormatError("expected header start,end", path=path, line=1)
        pauses = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(
                    f"expected 2 fields, got {len(row)}", path=path, line=lineno
                )
            try:
                start, end = float(row[0]), float(row[1])
            except ValueError:
                raise DataFormatError("non-numeric field", path=path, line=lineno) from None
            if not start < end:
                raise DataFormatError("pause start must precede end", path=path, line=lineno)
            if pauses and start < pauses[-1][1]:
                raise DataFormatError(
                    "pauses must be sorted and non-overlapping", path=path, line=lineno
                )
            pauses.append((start, end))
    return pauses


def lip_aperture(ul, ll):
    """|UL_y - LL_y| from the two lip pellet tracks."""
    ul = np.asarray(ul, dtype=float)
    ll = np.asarray(ll, dtype=float)
    if ul.shape != ll.shape or ul.ndim != 2 or ul.shape[1] != 2:
        raise ValueError("lip tracks must both be (n, 2)")
    return np.abs(ul[:, 1] - ll[:, 1])


def pca_first_component(track):
    """Project a 2-D track onto its dominant axis.

    The track is centered, the 2x2 covariance eigendecomposed, and the
    projection onto the leading eigenvector returned. The axis sign is
    chosen so the projection correlates positively with the pellet's
    y coordinate (with x breaking an exactly-zero correlation). A
    track with no spatial variance raises DegenerateTrackError.
    """
    track = np.asarray(track, dtype=float)
    if track.ndim != 2 or track.shape[1] != 2 or track.shape[0] < 2:
        raise ValueError("track must be (n, 2) with n >= 2")
    centered = track - track.mean(axis=0)
    cov = centered.T @ centered / (track.shape[0] - 1)
    if np.trace(cov) == 0.0:
        raise DegenerateTrackError("track has zero variance; no principal axis")
    eigvals, eigvecs = np.linalg.eigh(cov)
    axis = eigvecs[:, int(np.argmax(eigvals))]
    signal = centered @ axis
    cy = float(signal @ centered[:, 1])
    if cy < 0.0:
        signal = -signal
    elif cy == 0.0 and float(signal @ centered[:, 0]) < 0.0:
        signal = -signal
    return signal


def channel_signal(recording, channel):
    """Scalar signal for one of the LA/TT/TD/TR channels."""
    if channel == "LA":
        return lip_aperture(recording.pellets["UL"], recording.pellets["LL"])
    if channel == "TT":
        return pca_first_component(recording.pellets["T1"])
    if channel == "TD":
        return pca_first_component(recording.pellets["T3"])
    if channel == "TR":
        return pca_first_component(recording.pellets["T4"])
    raise ValueError(f"unknown channel {channel!r}")


def estimate_derivatives(x, sample_rate):
    """Velocity and acceleration by second-order finite differences.

    Central differences inside, one-sided second-order stencils at the
    edges; the acceleration applies the same operator to the velocity.
    Needs at least 3 samples.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("need a 1-D signal with at least 3 samples")
    v = _differentiate(x, sample_rate)
    a = _differentiate(v, sample_rate)
    return v, a


def _differentiate(x, rate):
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - x[:-2]) * (0.5 * rate)
    d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) * (0.5 * rate)
    d[-1] = (3.0 * x[-1] - 4.0 * x[-2] + x[-3]) * (0.5 * rate)
    return d


def _interval_index_ranges(t, pauses):
    """Maximal sample runs falling outside the pause intervals."""
    if not pauses:
        return [(0, t.size - 1)]
    paused = np.zeros(t.size, dtype=bool)
    for start, end in pauses:
        paused |= (t >= start) & (t <= end)
    ranges = []
    i = 0
    n = t.size
    while i < n:
        if paused[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and not paused[j + 1]:
            j += 1
        ranges.append((i, j))
        i = j + 1
    return ranges


def _zero_crossing_boundaries(v):
    """Sample indices of velocity zeros, interpolated and snapped."""
    bounds = set()
    m = v.size
    for i in range(m):
        if abs(v[i]) <= ZERO_TOL:
            bounds.add(i)
    for i in range(m - 1):
        vi, vj = v[i], v[i + 1]
        if abs(vi) <= ZERO_TOL or abs(vj) <= ZERO_TOL:
            continue
        if (vi > 0) != (vj > 0):
            frac = vi / (vi - vj)
            bounds.add(i + int(math.floor(frac + 0.5)))
    return bounds


def segment(signal, sample_rate, pauses=None, t=None, channel="", speaker="",
            id_prefix=None):
    """Cut a channel signal into gesture tokens at velocity zeros.

    Derivatives are estimated per inter-pause interval; boundaries are
    the interval edges plus every velocity zero crossing (linearly
    interpolated between samples and snapped to the nearest one).
    Consecutive boundaries delimit tokens, adjacent tokens sharing the
    boundary sample, so each interval is tiled exactly. Intervals
    shorter than 3 samples are skipped.
    """
    x = np.asarray(signal, dtype=float)
    if t is None:
        t = np.arange(x.size) / sample_rate
    else:
        t = np.asarray(t, dtype=float)
        if t.shape != x.shape:
            raise ValueError("t must match the signal length")
    if id_prefix is None:
        id_prefix = channel if channel else "token"
    tokens = []
    counter = 0
    for lo, hi in _interval_index_ranges(t, pauses):
        if hi - lo + 1 < 3:
            continue
        xi = x[lo:hi + 1]
        v, a = estimate_derivatives(xi, sample_rate)
        bounds = _zero_crossing_boundaries(v)
        bounds.update((0, v.size - 1))
        ordered = sorted(bounds)
        for bi in range(len(ordered) - 1):
            start, end = ordered[bi], ordered[bi + 1]
            if end - start < 1:
                continue
            tokens.append(GestureToken(
                token_id=f"{id_prefix}-{counter:05d}",
                channel=channel,
                x=xi[start:end + 1],
                v=v[start:end + 1],
                a=a[start:end + 1],
                sample_rate=sample_rate,
                t0=float(t[lo + start]),
                speaker=speaker,
            ))
            counter += 1
    return tokens


def segment_recording(recording, pauses=None, channels=CHANNELS, speaker=""):
    """Segment every requested channel of a recording."""
    tokens = []
    for channel in channels:
        if channel not in CHANNELS:
            raise ValueError(f"unknown channel {channel!r}")
        signal = channel_signal(recording, channel)
        tokens.extend(segment(
            signal, recording.sample_rate, pauses=pauses, t=recording.t,
            channel=channel, speaker=speaker,
        ))
    return tokens


def filter_tokens(tokens, max_duration=MAX_DURATION, prominence=PEAK_PROMINENCE):
    """Apply the exclusion rules, returning re-statused tokens.

    Duration is tested first: tokens longer than max_duration seconds
    are excluded outright. Survivors with two or more strict local
    maxima of |v|, each with prominence at least ``prominence`` of the
    token's peak |v|, are excluded as multipeak.
    """
    out = []
    for token in tokens:
        if token.duration > max_duration:
            out.append(replace(token, status=STATUS_DURATION))
            continue
        speed = np.abs(token.v)
        peak = float(speed.max())
        n_peaks = 0
        if peak > 0.0:
            idx, _ = find_peaks(speed, prominence=prominence * peak)
            n_peaks = idx.size
        if n_peaks >= 2:
            out.append(replace(token, status=STATUS_MULTIPEAK))
        else:
            out.append(replace(token, status=STATUS_KEPT))
    return out


def _token_entry(token, filename):
    return {
        "id": token.token_id,
        "file": filename,
        "channel": token.channel,
        "speaker": token.speaker,
        "t0": float(token.t0),
        "duration": float(token.duration),
        "status": token.status,
    }


def write_tokens(directory, tokens, extra=None, truths=None):
    """Write one CSV per token plus manifest.json.

    Token CSVs hold track-relative time (t starts at 0); the absolute
    onset is the manifest's t0. ``truths`` may map token id -> dict of
    ground-truth parameters to embed (synthetic corpora). ``extra``
    merges additional top-level manifest keys.
    """
    os.makedirs(directory, exist_ok=True)
    entries = []
    for token in tokens:
        filename = f"{token.token_id}.csv"
        dt = 1.0 / token.sample_rate
        with open(os.path.join(directory, filename), "w", newline="") as fh:
            fh.write("t,x,v,a\n")
            for i in range(len(token)):
                fh.write(",".join([
                    repr(i * dt),
                    repr(float(token.x[i])),
                    repr(float(token.v[i])),
                    repr(float(token.a[i])),
                ]) + "\n")
        entry = _token_entry(token, filename)
        if truths and token.token_id in truths:
            entry["truth"] = truths[token.token_id]
        entries.append(entry)
    manifest = {"schema": MANIFEST_SCHEMA, "tokens": entries}
    if extra:
        manifest.update(extra)
    path = os.path.join(directory, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_tokens(directory, statuses=None):
    """Load tokens (optionally restricted to given statuses) + manifest."""
    path = os.path.join(directory, "manifest.json")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataFormatError("manifest.json not found", path=directory) from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad manifest: {exc}", path=path) from None
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise DataFormatError(
            f"unexpected manifest schema {manifest.get('schema')!r}", path=path
        )
    tokens = []
    for entry in manifest["tokens"]:
        if statuses is not None and entry["status"] not in statuses:
            continue
        csv_path = os.path.join(directory, entry["file"])
        columns = _read_token_csv(csv_path)
        t = columns[0]
        if len(t) < 2:
            raise DataFormatError("token shorter than 2 samples", path=csv_path)
        dt = t[1] - t[0]
        tokens.append(GestureToken(
            token_id=entry["id"],
            channel=entry["channel"],
            x=columns[1],
            v=columns[2],
            a=columns[3],
            sample_rate=1.0 / dt,
            t0=float(entry.get("t0", 0.0)),
            speaker=entry.get("speaker", ""),
            status=entry["status"],
        ))
    return tokens, manifest


def _read_token_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", path=path, line=1) from None
        if header != ["t", "x", "v", "a"]:
            raise DataFormatError("expected header t,x,v,a", path=path, line=1)
        columns = [[], [], [], []]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataFormatError(
                    f"expected 4 fields, got {len(row)}", path=path, line=lineno
                )
            try:
                values = [float(field) for field in row]
            except ValueError:
                raise DataFormatError("non-numeric field", path=path, line=lineno) from None
            for col, value in zip(columns, values):
                col.append(value)
    return [np.asarray(c) for c in columns]
