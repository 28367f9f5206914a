"""Patch text spotting behind a pluggable backend interface.

Three backends ship with the package:

``oracle``
    echoes ground-truth labels from a sidecar file (exact by construction);
``noise``
    the oracle plus seeded character substitutions and vertex jitter;
``external``
    a child process speaking newline-delimited JSON on stdin/stdout, which is
    how a real neural text spotter is plugged in.

Every backend returns :class:`TextDetection` objects in the *patch* frame.
"""
from __future__ import annotations

import json
import logging
import os
import queue
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import geometry
from ._validation import check_ring
from .exceptions import DegenerateGeometryError, InputError, StageError
from .raster import PatchWindow, RasterImage, save_png

log = logging.getLogger(__name__)

STAGE = "spotter-interface"
N_VERTICES = 16
DEFAULT_SLACK_PX = 8.0
DEFAULT_TIMEOUT_S = 120.0
NOISE_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


@dataclass(frozen=True)
class TextDetection:
    polygon_px: tuple[tuple[float, float], ...]
    text: str
    score: float
    patch_row: int = 0
    patch_col: int = 0
    seq_in_patch: int = 0

    def __post_init__(self):
        poly = tuple((float(x), float(y)) for x, y in self.polygon_px)
        if len(poly) != N_VERTICES:
            raise InputError(f"detection polygon needs {N_VERTICES} vertices, got {len(poly)}")
        if not self.text or not self.text.strip():
            raise InputError("detection text is empty")
        if not 0.0 <= float(self.score) <= 1.0:
            raise InputError(f"detection score {self.score} outside [0, 1]")
        object.__setattr__(self, "polygon_px", poly)
        object.__setattr__(self, "score", float(self.score))

    @property
    def area(self) -> float:
        return abs(geometry.signed_area(self.polygon_px))


@dataclass(frozen=True)
class GroundTruthLabel:
    text: str
    polygon_map_px: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ring = check_ring(self.polygon_map_px, "truth polygon")
        object.__setattr__(self, "polygon_map_px", tuple(map(tuple, ring.tolist())))


def resample_polygon(vertices, target_count: int = N_VERTICES) -> list[tuple[float, float]]:
    """Place ``target_count`` points at equal arc length along a closed ring.

    The walk starts at the first input vertex and follows the input order, so
    orientation is preserved.
    """
    pts = check_ring(vertices)
    if target_count < 1:
        raise InputError("target_count must be positive")
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    total = seg.sum()
    if total <= 0.0:
        raise DegenerateGeometryError("cannot resample a zero-perimeter ring")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(target_count) * (total / target_count)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    # skip zero-length segments by construction: searchsorted lands past them
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(seg[idx] > 0, (targets - cum[idx]) / seg[idx], 0.0)
    out = closed[idx] + t[:, None] * (closed[idx + 1] - closed[idx])
    return [(float(x), float(y)) for x, y in out]


def load_truth(path) -> list[GroundTruthLabel]:
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                labels.append(GroundTruthLabel(text=rec["text"], polygon_map_px=rec["polygon"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: bad truth record ({exc})") from exc
    return labels


def write_truth(labels: Iterable[GroundTruthLabel], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lab in labels:
            rec = {"text": lab.text, "polygon": [list(p) for p in lab.polygon_map_px]}
            fh.write(json.dumps(rec) + "\n")


def _truth_centroids(truth: Sequence[GroundTruthLabel]) -> np.ndarray:
    if not truth:
        return np.zeros((0, 2))
    return np.array([geometry.centroid(t.polygon_map_px) for t in truth])


def _assigned_indices(centroids: np.ndarray, window: PatchWindow) -> np.ndarray:
    if len(centroids) == 0:
        return np.zeros(0, dtype=int)
    x, y = centroids[:, 0], centroids[:, 1]
    mask = (
        (x >= window.origin_x_px)
        & (x < window.origin_x_px + window.width_px)
        & (y >= window.origin_y_px)
        & (y < window.origin_y_px + window.height_px)
    )
    return np.flatnonzero(mask)


def _to_patch_ring(label: GroundTruthLabel, window: PatchWindow) -> list[tuple[float, float]]:
    ring = np.asarray(label.polygon_map_px) - (window.origin_x_px, window.origin_y_px)
    return resample_polygon(ring, N_VERTICES)


def oracle_assign(truth: Sequence[GroundTruthLabel], window: PatchWindow) -> list[TextDetection]:
    """Emit each truth label whose centroid falls inside ``window``, in patch coordinates."""
    return OracleSpotter(truth).spot(None, window)


def perturb_text(text: str, rng: np.random.Generator, p_sub: float, alphabet: str = NOISE_ALPHABET,
                 max_edits: int | None = None) -> tuple[str, list[int]]:
    """Substitute characters independently with probability ``p_sub``.

    Returns the new string and the substituted positions. Replacement
    characters are drawn from ``alphabet`` minus the original character; a
    position with no alternative is left alone. At most ``max_edits``
    substitutions are realized.
    """
    chars = list(text)
    changed = []
    for i, ch in enumerate(chars):
        if max_edits is not None and len(changed) >= max_edits:
            break
        if rng.random() >= p_sub:
            continue
        choices = [c for c in alphabet if c != ch]
        if not choices:
            continue
        chars[i] = choices[int(rng.integers(len(choices)))]
        changed.append(i)
    return "".join(chars), changed


class SpotterBackend:
    """Interface for text spotters. Subclasses implement :meth:`spot`."""

    name = "base"

    def spot(self, patch: RasterImage, window: PatchWindow) -> list[TextDetection]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class OracleSpotter(SpotterBackend):
    name = "oracle"

    def __init__(self, truth: Sequence[GroundTruthLabel]):
        self.truth = list(truth)
        self._centroids = _truth_centroids(self.truth)

    def spot(self, patch, window):
        return [
            TextDetection(_to_patch_ring(self.truth[i], window), self.truth[i].text, 1.0,
                          window.row_index, window.col_index)
            for i in _assigned_indices(self._centroids, window)
        ]


class NoiseSpotter(OracleSpotter):
    """Oracle output degraded by seeded substitutions and vertex jitter.

    The random stream is keyed by ``(seed, truth index)``, so a label reads the
    same in every patch that sees it and the result does not depend on how
    patches are scheduled.
    """

    name = "noise"

    def __init__(self, truth, seed: int = 0, p_sub: float = 0.1, jitter_px: float = 1.0,
                 alphabet: str = NOISE_ALPHABET, max_edits: int | None = 2):
        super().__init__(truth)
        if not 0.0 <= p_sub <= 1.0:
            raise InputError(f"p_sub must be in [0, 1], got {p_sub}")
        if jitter_px < 0:
            raise InputError("jitter_px must be non-negative")
        self.seed = int(seed)
        self.p_sub = float(p_sub)
        self.jitter_px = float(jitter_px)
        self.alphabet = alphabet
        self.max_edits = max_edits

    def rng_for(self, truth_index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, int(truth_index)])

    def spot(self, patch, window):
        out = []
        for i in _assigned_indices(self._centroids, window):
            rng = self.rng_for(i)
            text, edits = perturb_text(self.truth[i].text, rng, self.p_sub, self.alphabet, self.max_edits)
            ring = np.asarray(_to_patch_ring(self.truth[i], window))
            ring = ring + rng.uniform(-self.jitter_px, self.jitter_px, size=ring.shape)
            score = max(0.0, 1.0 - 0.1 * len(edits))
            out.append(TextDetection(ring.tolist(), text, score, window.row_index, window.col_index))
        return out


class _ChildProcess:
    """One external spotter process plus a reader thread for its stdout."""

    def __init__(self, argv: list[str]):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1,
        )
        self.lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def request(self, payload: dict, timeout: float) -> str | None:
        self.proc.stdin.write(json.dumps(payload) + "\n")
        self.proc.stdin.flush()
        return self.lines.get(timeout=timeout)

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
                self.proc.wait()


class ExternalSpotter(SpotterBackend):
    """Runs an external spotter command; each worker thread owns one child.

    Protocol, one JSON object per line::

        -> {"patch_id": ..., "image_path": ..., "width": W, "height": H}
        <- {"patch_id": ..., "detections": [{"polygon": [[x, y] x16], "text": ..., "score": ...}]}
    """

    name = "external"

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT_S, slack_px: float = DEFAULT_SLACK_PX):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise InputError("external spotter command is empty")
        self.timeout = float(timeout)
        self.slack_px = float(slack_px)
        self._local = threading.local()
        self._children: list[_ChildProcess] = []
        self._lock = threading.Lock()

    def _child(self) -> _ChildProcess:
        child = getattr(self._local, "child", None)
        if child is None or child.proc.poll() is not None:
            try:
                child = _ChildProcess(self.argv)
            except OSError as exc:
                raise StageError(STAGE, f"cannot start external spotter {self.argv[0]!r}: {exc}") from exc
            self._local.child = child
            with self._lock:
                self._children.append(child)
        return child

    def _discard_child(self):
        child = getattr(self._local, "child", None)
        if child is not None:
            child.proc.kill()
            self._local.child = None

    def spot(self, patch, window):
        child = self._child()
        fd, tmp = tempfile.mkstemp(suffix=".png", prefix=f"{patch.id}_")
        os.close(fd)
        try:
            save_png(patch, tmp)
            payload = {"patch_id": patch.id, "image_path": tmp,
                       "width": patch.width_px, "height": patch.height_px}
            try:
                line = child.request(payload, self.timeout)
            except queue.Empty:
                self._discard_child()
                raise StageError(STAGE, f"external spotter timed out after {self.timeout:g} s", patch.id)
            except (BrokenPipeError, OSError) as exc:
                self._discard_child()
                raise StageError(STAGE, f"external spotter pipe failed: {exc}", patch.id) from exc
        finally:
            Path(tmp).unlink(missing_ok=True)
        if line is None:
            self._discard_child()
            raise StageError(STAGE, f"external spotter exited (code {child.proc.poll()})", patch.id)
        return self._parse_reply(line, patch, window)

    def _parse_reply(self, line: str, patch: RasterImage, window: PatchWindow) -> list[TextDetection]:
        def bad(msg):
            return StageError(STAGE, f"malformed spotter reply: {msg}", patch.id)

        try:
            reply = json.loads(line)
        except ValueError as exc:
            raise bad(f"not JSON ({exc})") from exc
        if not isinstance(reply, dict) or reply.get("patch_id") != patch.id:
            raise bad("missing or mismatched patch_id")
        raw = reply.get("detections")
        if not isinstance(raw, list):
            raise bad("'detections' must be a list")
        m = self.slack_px
        out = []
        for k, rec in enumerate(raw):
            try:
                det = TextDetection(rec["polygon"], rec["text"], rec["score"], window.row_index, window.col_index)
            except (KeyError, TypeError, ValueError) as exc:
                raise bad(f"detection {k}: {exc}") from exc
            poly = np.asarray(det.polygon_px)
            if not np.all(np.isfinite(poly)):
                raise bad(f"detection {k}: non-finite vertex")
            if (poly[:, 0].min() < -m or poly[:, 1].min() < -m
                    or poly[:, 0].max() > patch.width_px + m or poly[:, 1].max() > patch.height_px + m):
                raise bad(f"detection {k}: vertex beyond the {m:g} px slack margin")
            out.append(det)
        return out

    def close(self):
        with self._lock:
            for child in self._children:
                child.close()
            self._children.clear()


def spot_patch(backend: SpotterBackend, patch: RasterImage, window: PatchWindow) -> list[TextDetection]:
    """Run ``backend`` on one patch and return detections in canonical order.

    Zero-area polygons are dropped. The rest are sorted by centroid (y, x)
    and numbered with ``seq_in_patch``.
    """
    if (patch.width_px, patch.height_px) != (window.width_px, window.height_px):
        raise InputError(
            f"patch {patch.id} is {patch.width_px}x{patch.height_px}, window is "
            f"{window.width_px}x{window.height_px}"
        )
    dets = [d for d in backend.spot(patch, window) if d.area > 0.0]

    def key(d):
        cx, cy = geometry.centroid(d.polygon_px)
        return cy, cx, d.text, d.polygon_px

    dets.sort(key=key)
    return [
        TextDetection(d.polygon_px, d.text, d.score, window.row_index, window.col_index, seq)
        for seq, d in enumerate(dets)
    ]


def make_backend(kind: str, *, truth_path=None, seed: int = 0, p_sub: float = 0.1,
                 jitter_px: float = 1.0, max_edits: int | None = 2, command=None,
                 timeout: float = DEFAULT_TIMEOUT_S) -> SpotterBackend:
    """Build a backend from CLI-style options."""
    if kind in ("oracle", "noise"):
        if truth_path is None:
            raise InputError(f"the {kind} spotter needs a truth sidecar (--truth)")
        truth = load_truth(truth_path)
        if kind == "oracle":
            return OracleSpotter(truth)
        return NoiseSpotter(truth, seed=seed, p_sub=p_sub, jitter_px=jitter_px, max_edits=max_edits)
    if kind == "external":
        if not command:
            raise InputError("the external spotter needs a command (--spotter-command)")
        return ExternalSpotter(command, timeout=timeout)
    raise InputError(f"unknown spotter backend {kind!r}")
