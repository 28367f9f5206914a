"""End-to-end orchestration: tile, spot, merge, correct, georeference, link, emit."""
from __future__ import annotations

import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import georef, linker, merge, postocr, raster
from . import spotter as spotting
from .exceptions import ConfigurationError, MapKuratorError, StageError
from .geojson import GeoFeature, emit_collection

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = (
    "raster-tiler",
    "spotter-interface",
    "patch-merger",
    "postocr-corrector",
    "georeferencer",
    "entity-linker",
    "geojson-emitter",
)
SPOTTERS = ("oracle", "noise", "external")
RASTER_SUFFIXES = (".png", ".tif", ".tiff")


@dataclass
class PipelineConfig:
    input: str = ""
    gcps: str = ""
    gazetteer: str = ""
    output: str = ""
    spotter: str = "oracle"
    truth: str | None = None
    spotter_command: str | None = None
    spotter_timeout: float = spotting.DEFAULT_TIMEOUT_S
    noise_p_sub: float = 0.1
    noise_jitter: float = 1.0
    noise_max_edits: int | None = 2
    patch_size: int = raster.DEFAULT_PATCH_SIZE
    stride: int | None = None
    iou_threshold: float = merge.DEFAULT_IOU_THRESHOLD
    max_edit_distance: int = postocr.DEFAULT_MAX_DISTANCE
    point_buffer: float = linker.DEFAULT_POINT_BUFFER
    grid_cell: float = linker.DEFAULT_CELL_SIZE
    jobs: int = 1
    seed: int = 0
    on_patch_error: str = "abort"
    dump_intermediate: str | None = None

    @property
    def effective_stride(self) -> int:
        return self.patch_size if self.stride is None else self.stride

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in dataclasses.fields(cls)}

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def load_config_file(path) -> dict:
    """Read a TOML config; keys may use ``-`` or ``_`` and may sit under ``[run]``."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid TOML ({exc})") from exc
    doc = doc.get("run", doc)
    known = PipelineConfig.field_names()
    out = {}
    for key, value in doc.items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigurationError(f"{path}: unknown config key {key!r}")
        out[name] = value
    return out


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_config(cfg: PipelineConfig, check_files: bool = True) -> list[str]:
    """Collect every violation in ``cfg``; an empty list means the config is usable."""
    errors = []
    required = (("input", "raster-tiler", "input raster"), ("gcps", "georeferencer", "GCP metadata"),
                ("gazetteer", "entity-linker", "gazetteer"))
    for attr, stage, what in required:
        value = getattr(cfg, attr)
        if not value:
            errors.append(f"[{stage}] {what} path is required")
        elif check_files and not Path(value).is_file():
            errors.append(f"[{stage}] {what} file not found: {value}")
    if not cfg.output:
        errors.append("[geojson-emitter] output path is required")
    if not _is_int(cfg.patch_size) or cfg.patch_size < 1:
        errors.append("patch size must be a positive integer")
    if cfg.stride is not None and (not _is_int(cfg.stride) or cfg.stride < 1):
        errors.append("stride must be a positive integer")
    elif _is_int(cfg.patch_size) and cfg.stride is not None and cfg.stride > cfg.patch_size:
        errors.append("stride exceeds patch size")
    if not _is_int(cfg.jobs) or cfg.jobs < 1:
        errors.append("jobs must be an integer >= 1")
    if not 0.0 < cfg.iou_threshold <= 1.0:
        errors.append("iou threshold must lie in (0, 1]")
    if not _is_int(cfg.max_edit_distance) or cfg.max_edit_distance < 0:
        errors.append("max edit distance must be an integer >= 0")
    if cfg.point_buffer < 0:
        errors.append("point buffer must be >= 0")
    if not cfg.grid_cell > 0:
        errors.append("grid cell size must be > 0")
    if not _is_int(cfg.seed):
        errors.append("seed must be an integer")
    if cfg.on_patch_error not in ("skip", "abort"):
        errors.append("on-patch-error must be 'skip' or 'abort'")
    if cfg.spotter not in SPOTTERS:
        errors.append(f"[spotter-interface] unknown spotter {cfg.spotter!r} (choose from {', '.join(SPOTTERS)})")
    elif cfg.spotter in ("oracle", "noise"):
        if not cfg.truth:
            errors.append(f"[spotter-interface] the {cfg.spotter} spotter needs a truth sidecar")
        elif check_files and not Path(cfg.truth).is_file():
            errors.append(f"[spotter-interface] truth sidecar not found: {cfg.truth}")
    elif not cfg.spotter_command:
        errors.append("[spotter-interface] the external spotter needs a command")
    if not 0.0 <= cfg.noise_p_sub <= 1.0:
        errors.append("noise substitution rate must lie in [0, 1]")
    if cfg.noise_jitter < 0:
        errors.append("noise jitter must be >= 0")
    if cfg.noise_max_edits is not None and (not _is_int(cfg.noise_max_edits) or cfg.noise_max_edits < 0):
        errors.append("noise max edits must be an integer >= 0")
    if not cfg.spotter_timeout > 0:
        errors.append("spotter timeout must be > 0")
    return errors


@dataclass
class RunStats:
    patches: int = 0
    patches_skipped: int = 0
    detections_raw: int = 0
    detections_merged: int = 0
    detections_deduped: int = 0
    labels_matched: int = 0
    labels_linked: int = 0
    gcp_rmse: float = 0.0
    stage_seconds: dict = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not timings:
            d.pop("stage_seconds")
        return d


class _Stage:
    """Times a stage and tags any escaping error with the stage name."""

    def __init__(self, name: str, stats: RunStats):
        self.name = name
        self.stats = stats

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s started", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        self.stats.stage_seconds[self.name] = round(self.stats.stage_seconds.get(self.name, 0.0) + elapsed, 6)
        if exc is None or isinstance(exc, StageError):
            return False
        if isinstance(exc, (MapKuratorError, OSError, ValueError)):
            raise StageError(self.name, str(exc)) from exc
        return False


def _build_backend(cfg: PipelineConfig) -> spotting.SpotterBackend:
    return spotting.make_backend(
        cfg.spotter, truth_path=cfg.truth, seed=cfg.seed, p_sub=cfg.noise_p_sub,
        jitter_px=cfg.noise_jitter, max_edits=cfg.noise_max_edits,
        command=cfg.spotter_command, timeout=cfg.spotter_timeout,
    )


def _spot_all(image, windows, backend, cfg: PipelineConfig, stats: RunStats):
    def work(window):
        patch = raster.crop(image, window)
        try:
            return spotting.spot_patch(backend, patch, window)
        except StageError as exc:
            if cfg.on_patch_error == "skip":
                log.warning("skipping patch: %s", exc)
                return None
            raise

    if cfg.jobs == 1:
        results = [work(w) for w in windows]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs, thread_name_prefix="spotter") as pool:
            results = list(pool.map(work, windows))
    stats.patches_skipped = sum(r is None for r in results)
    return [(w, dets) for w, dets in zip(windows, results) if dets is not None]


def _dump_jsonl(directory: Path, name: str, records) -> None:
    with open(directory / name, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def run_pipeline(cfg: PipelineConfig) -> tuple[Path, RunStats]:
    """Run every stage in order and write the GeoJSON output.

    Raises :class:`ConfigurationError` for invalid configs and
    :class:`StageError` (tagged with the failing stage) for runtime failures.
    """
    errors = validate_config(cfg)
    if errors:
        raise ConfigurationError("; ".join(errors))
    stats = RunStats()
    dump = Path(cfg.dump_intermediate) if cfg.dump_intermediate else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)

    with _Stage("raster-tiler", stats):
        image = raster.load_raster(cfg.input)
        windows = raster.plan_tiles(image.width_px, image.height_px, cfg.patch_size, cfg.effective_stride)
        stats.patches = len(windows)
        if dump:
            (dump / "tiles.json").write_text(json.dumps([dataclasses.asdict(w) for w in windows]) + "\n")

    with _Stage("spotter-interface", stats):
        with _build_backend(cfg) as backend:
            spotted = _spot_all(image, windows, backend, cfg, stats)
        stats.detections_raw = sum(len(d) for _, d in spotted)
        if dump:
            _dump_jsonl(dump, "detections_patch.jsonl", (
                {"patch_id": w.patch_id,
                 "detections": [{"polygon": [list(p) for p in d.polygon_px], "text": d.text, "score": d.score}
                                for d in dets]}
                for w, dets in spotted))

    with _Stage("patch-merger", stats):
        merged = [merge.to_map_coords(d, w) for w, dets in spotted for d in dets]
        stats.detections_merged = len(merged)
        kept = merge.dedupe(merged, cfg.iou_threshold)
        stats.detections_deduped = len(kept)
        if dump:
            _dump_jsonl(dump, "detections_map.jsonl", (
                {"provenance": list(d.provenance), "polygon": [list(p) for p in d.polygon_map_px],
                 "text": d.text, "score": d.score} for d in kept))

    with _Stage("entity-linker", stats):
        index = linker.load_gazetteer(cfg.gazetteer, cell_size=cfg.grid_cell)

    with _Stage("postocr-corrector", stats):
        vocab = postocr.build_vocabulary(index.entities.values())
        corrections = [postocr.correct(d.text, vocab, cfg.max_edit_distance) for d in kept]
        stats.labels_matched = sum(c.matched for c in corrections)

    with _Stage("georeferencer", stats):
        gcps = georef.load_gcp_metadata(cfg.gcps)
        transform = georef.fit_affine(gcps)
        stats.gcp_rmse = georef.residual_rmse(transform, gcps)
        rings = [georef.apply(transform, d.polygon_map_px) for d in kept]

    with _Stage("entity-linker", stats):
        links = [linker.link(c, ring, index, cfg.point_buffer) for c, ring in zip(corrections, rings)]
        stats.labels_linked = sum(bool(ids) for ids in links)

    with _Stage("geojson-emitter", stats):
        features = [
            GeoFeature(ring_geo=tuple(ring), text=d.text, score=d.score, postocr_label=c.postocr_label,
                       osm_ids=tuple(ids), provenance=d.provenance)
            for d, c, ring, ids in zip(kept, corrections, rings, links)
        ]
        out = emit_collection(features, cfg.output)
    return out, stats


def find_batch_maps(batch_dir) -> list[Path]:
    """Subdirectories of ``batch_dir`` holding a ``map.*`` raster, in name order."""
    found = []
    for sub in sorted(Path(batch_dir).iterdir()):
        if sub.is_dir() and any((sub / f"map{s}").is_file() for s in RASTER_SUFFIXES):
            found.append(sub)
    return found


def batch_config(cfg: PipelineConfig, map_dir: Path, out_dir: Path) -> PipelineConfig:
    raster_path = next(map_dir / f"map{s}" for s in RASTER_SUFFIXES if (map_dir / f"map{s}").is_file())
    truth = map_dir / "truth.jsonl"
    return cfg.replace(
        input=str(raster_path),
        gcps=str(map_dir / "gcps.json"),
        gazetteer=cfg.gazetteer or str(map_dir / "gazetteer.jsonl"),
        truth=str(truth) if truth.is_file() else cfg.truth,
        output=str(out_dir / f"{map_dir.name}.geojson"),
        dump_intermediate=str(Path(cfg.dump_intermediate) / map_dir.name) if cfg.dump_intermediate else None,
    )


def run_batch(cfg: PipelineConfig, batch_dir) -> list[tuple[str, Path, RunStats]]:
    """Process every map directory under ``batch_dir`` sequentially.

    Each map directory holds ``map.png`` (or ``.tif``), ``gcps.json`` and
    optionally ``truth.jsonl`` / ``gazetteer.jsonl``; ``cfg.output`` is the
    output directory.
    """
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for map_dir in find_batch_maps(batch_dir):
        path, stats = run_pipeline(batch_config(cfg, map_dir, out_dir))
        results.append((map_dir.name, path, stats))
    return results
