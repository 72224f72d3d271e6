"""Serialization: dataset records, point clouds, and weight archives.

All JSON is UTF-8 with sorted keys and two-space indentation; floats are
written with Python's shortest round-trip repr, which preserves every
f64 bit-exactly (at most 17 significant digits). Weight archives pair a
JSON manifest with a raw little-endian f64 blob.

A dataset directory contains::

    manifest.json            seed, generation settings, record index
    records/<id>.json        one DatasetRecord per shape
    clouds/<id>.ply          ground-truth point cloud (ASCII PLY)
    meshes/<id>.obj          normalized source mesh (kept for re-slicing)

A record holds ``shape_id``, ``class_label``, ``cross_sections`` (each a
plane plus bare 6x3 coefficient arrays, power-major rows, x/y/z
columns), ``gt_points_file``, and ``mesh_file``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields as _dc_fields
from pathlib import Path

import numpy as np

from .curvygan import DiscriminatorParams, GanConfig, GeneratorParams
from .errors import CurvyError
from .geometry import Plane, write_obj, write_ply
from .pointae import AEConfig, AEParams
from .splitfit import (CrossSection, CrossSectionSet, Piece, _piece_arclength)

__all__ = [
    "write_json",
    "read_json",
    "config_hash",
    "save_weights",
    "load_weights",
    "cross_section_to_dict",
    "cross_section_from_dict",
    "record_from_entry",
    "section_set_from_record",
    "DatasetEntry",
    "save_dataset",
    "load_dataset",
    "save_ae",
    "load_ae",
    "save_gan",
    "load_gan",
]


def write_json(path, obj):
    """Deterministic JSON file: sorted keys, indent 2, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def config_hash(config):
    """sha256 of the canonical (sorted, compact) JSON form of a config."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# -- weight archives ---------------------------------------------------------

def save_weights(path, state, config=None, seed=None):
    """Write named f64 arrays as manifest JSON + raw little-endian blob.

    ``state`` maps name -> array (insertion order is preserved in the
    blob). The blob lives next to the manifest with a ``.bin`` suffix.
    """
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    tensors = []
    chunks = []
    offset = 0
    seen = set()
    for name, arr in state.items():
        if name in seen:
            raise CurvyError(f"duplicate tensor name {name!r}")
        seen.add(name)
        a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        raw = a.astype("<f8").tobytes()
        tensors.append({"name": name, "shape": list(a.shape), "dtype": "f64",
                        "byte_offset": offset})
        chunks.append(raw)
        offset += len(raw)
    config = {} if config is None else config
    manifest = {
        "format_version": 1,
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
        "blob": blob_path.name,
        "tensors": tensors,
    }
    blob_path.write_bytes(b"".join(chunks))
    write_json(path, manifest)
    return path


def load_weights(path):
    """Read a weight archive; returns (state dict, manifest dict)."""
    path = Path(path)
    manifest = read_json(path)
    if manifest.get("format_version") != 1:
        raise CurvyError(f"unsupported weight archive version in {path}")
    blob = (path.parent / manifest["blob"]).read_bytes()
    expected = sum(8 * int(np.prod(t["shape"], dtype=np.int64))
                   for t in manifest["tensors"])
    if len(blob) != expected:
        raise CurvyError(f"weight blob length {len(blob)} != manifest total {expected}")
    state = {}
    for t in manifest["tensors"]:
        shape = tuple(int(s) for s in t["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f8", count=count,
                            offset=int(t["byte_offset"])).reshape(shape)
        state[t["name"]] = arr.copy()
    return state, manifest


# -- cross-section records ---------------------------------------------------

def cross_section_to_dict(section):
    """Plane plus bare 6x3 coefficient arrays (power-major rows, xyz cols)."""
    return {
        "plane": {"normal": section.plane.normal.tolist(),
                  "offset": float(section.plane.offset)},
        "pieces": [piece.coeffs.tolist() for piece in section.pieces],
    }


def cross_section_from_dict(d):
    """Rebuild a CrossSection; chord spans are re-estimated by arc length."""
    plane = Plane(np.asarray(d["plane"]["normal"], dtype=np.float64),
                  float(d["plane"]["offset"]))
    pieces = []
    for coeffs in d["pieces"]:
        arr = np.asarray(coeffs, dtype=np.float64)
        span = max(_piece_arclength(Piece(arr, 1.0)), 1e-300)
        pieces.append(Piece(arr, span))
    return CrossSection(pieces, plane)


def record_from_entry(shape_id, class_label, sections, gt_points_file,
                      mesh_file=None):
    record = {
        "shape_id": str(shape_id),
        "class_label": str(class_label),
        "cross_sections": [cross_section_to_dict(s) for s in sections.sections],
        "gt_points_file": gt_points_file,
    }
    if mesh_file is not None:
        record["mesh_file"] = mesh_file
    return record


def section_set_from_record(record):
    return CrossSectionSet([cross_section_from_dict(d)
                            for d in record["cross_sections"]])


# -- dataset directories -----------------------------------------------------

@dataclass
class DatasetEntry:
    """One loaded dataset shape; ``mesh_path`` may be None."""

    shape_id: str
    class_label: str
    sections: CrossSectionSet
    cloud: np.ndarray
    mesh_path: str = None


def save_dataset(directory, entries, meta=None):
    """Write a dataset directory.

    ``entries`` is an iterable of dicts with keys ``shape_id``,
    ``class_label``, ``sections`` (CrossSectionSet), ``cloud`` ((n,3)
    array), and optionally ``mesh`` (TriangleMesh).
    """
    root = Path(directory)
    (root / "records").mkdir(parents=True, exist_ok=True)
    (root / "clouds").mkdir(exist_ok=True)
    index = []
    seen = set()
    for entry in entries:
        shape_id = str(entry["shape_id"])
        if shape_id in seen:
            raise CurvyError(f"duplicate shape id {shape_id!r}")
        seen.add(shape_id)
        cloud_file = f"clouds/{shape_id}.ply"
        write_ply(entry["cloud"], root / cloud_file)
        mesh_file = None
        if entry.get("mesh") is not None:
            (root / "meshes").mkdir(exist_ok=True)
            mesh_file = f"meshes/{shape_id}.obj"
            write_obj(entry["mesh"], root / mesh_file)
        record = record_from_entry(shape_id, entry["class_label"],
                                   entry["sections"], cloud_file, mesh_file)
        record_file = f"records/{shape_id}.json"
        write_json(root / record_file, record)
        index.append({"shape_id": shape_id,
                      "class_label": str(entry["class_label"]),
                      "record_file": record_file})
    manifest = dict(meta or {})
    manifest["format_version"] = 1
    manifest["records"] = index
    write_json(root / "manifest.json", manifest)
    return root


def load_dataset(directory):
    """Read a dataset directory; returns (list of DatasetEntry, manifest)."""
    from .geometry import read_ply

    root = Path(directory)
    manifest = read_json(root / "manifest.json")
    if manifest.get("format_version") != 1:
        raise CurvyError(f"unsupported dataset version in {root}")
    entries = []
    for row in manifest["records"]:
        record = read_json(root / row["record_file"])
        sections = section_set_from_record(record)
        cloud = read_ply(root / record["gt_points_file"])
        mesh_path = record.get("mesh_file")
        if mesh_path is not None:
            mesh_path = str(root / mesh_path)
        entries.append(DatasetEntry(record["shape_id"], record["class_label"],
                                    sections, cloud, mesh_path))
    return entries, manifest


# -- model archives ----------------------------------------------------------

def _filtered_config(cls, mapping):
    names = {f.name for f in _dc_fields(cls)}
    return cls(**{k: v for k, v in mapping.items() if k in names})


def save_ae(path, ae, seed=None, extra_config=None):
    """Save autoencoder weights plus enough config to rebuild them."""
    config = {
        "num_points": ae.cfg.num_points,
        "embedding_dim": ae.cfg.embedding_dim,
        "encoder_widths": list(ae.cfg.encoder_widths),
        "decoder_widths": list(ae.cfg.decoder_widths),
    }
    config.update(extra_config or {})
    return save_weights(path, ae.state(), config=config, seed=seed)


def load_ae(path):
    """Rebuild an AEParams from an archive; returns (ae, manifest)."""
    state, manifest = load_weights(path)
    cfg = _filtered_config(AEConfig, manifest["config"])
    ae = AEParams.create(np.random.default_rng(0), cfg)
    ae.load_state(state)
    return ae, manifest


def save_gan(path, gen, disc, seed=None, extra_config=None):
    """Save generator + discriminator in one archive with name prefixes."""
    from dataclasses import asdict

    state = {}
    for name, tensor in gen.named_parameters():
        state[f"generator.{name}"] = tensor.data
    for name, tensor in disc.named_parameters():
        state[f"discriminator.{name}"] = tensor.data
    config = asdict(gen.cfg)
    config.update(extra_config or {})
    return save_weights(path, state, config=config, seed=seed)


def load_gan(path):
    """Rebuild (GeneratorParams, DiscriminatorParams, manifest)."""
    state, manifest = load_weights(path)
    cfg = _filtered_config(GanConfig, manifest["config"])
    gen = GeneratorParams.create(np.random.default_rng(0), cfg)
    disc = DiscriminatorParams.create(np.random.default_rng(0), cfg)
    gen.load_state({k[len("generator."):]: v for k, v in state.items()
                    if k.startswith("generator.")})
    disc.load_state({k[len("discriminator."):]: v for k, v in state.items()
                     if k.startswith("discriminator.")})
    return gen, disc, manifest
