"""Self-describing artifact container: a JSON manifest plus raw little-endian blobs.

Layout of a container directory::

    manifest.json   {"format", "version", "kind", "meta", "arrays": {name: {file, dtype, shape, sha256}}}
    <name>.bin      raw array bytes, C order
"""
import hashlib
import json
import os

import numpy as np

FORMAT = "egoego-container"
VERSION = 1
MANIFEST = "manifest.json"
DTYPES = {"<f4", "<f8", "<i8"}


class ContainerError(Exception):
    pass


class VersionMismatchError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class ShapeError(ContainerError):
    pass


def _blob_name(name):
    return name.replace("/", "__") + ".bin"


def _canonical(arr):
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        dt = "<f8" if arr.dtype == np.float64 else "<f4"
    elif arr.dtype.kind in "iub":
        dt = "<i8"
    else:
        raise ContainerError(f"unsupported dtype {arr.dtype}")
    return np.ascontiguousarray(arr, dtype=np.dtype(dt)), dt


def dumps_manifest(manifest):
    return json.dumps(manifest, indent=1, sort_keys=True) + "\n"


def save_container(path, arrays, meta=None, kind="generic"):
    """Write ``arrays`` (name -> ndarray) and JSON-able ``meta`` under directory ``path``.

    Float64 arrays keep 64-bit storage; other floats are stored as float32.
    """
    os.makedirs(path, exist_ok=True)
    entries = {}
    for name in sorted(arrays):
        arr, dt = _canonical(arrays[name])
        raw = arr.tobytes()
        fname = _blob_name(name)
        with open(os.path.join(path, fname), "wb") as f:
            f.write(raw)
        entries[name] = {
            "file": fname,
            "dtype": dt,
            "shape": list(arr.shape),
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
    manifest = {"format": FORMAT, "version": VERSION, "kind": kind, "meta": meta or {}, "arrays": entries}
    with open(os.path.join(path, MANIFEST), "w") as f:
        f.write(dumps_manifest(manifest))
    return manifest


def read_manifest(path):
    mpath = os.path.join(path, MANIFEST)
    if not os.path.exists(mpath):
        raise ContainerError(f"no manifest at {mpath}")
    with open(mpath) as f:
        manifest = json.load(f)
    if manifest.get("format") != FORMAT:
        raise ContainerError(f"{path}: not an {FORMAT} container")
    if manifest.get("version") != VERSION:
        raise VersionMismatchError(f"{path}: container version {manifest.get('version')}, expected {VERSION}")
    return manifest


def load_container(path, kind=None):
    """Return (arrays, meta). Nothing is returned unless every blob verifies."""
    manifest = read_manifest(path)
    if kind is not None and manifest["kind"] != kind:
        raise ContainerError(f"{path}: expected a '{kind}' container, found '{manifest['kind']}'")
    arrays = {}
    for name, e in manifest["arrays"].items():
        if e["dtype"] not in DTYPES:
            raise ContainerError(f"{path}: unsupported dtype {e['dtype']} for '{name}'")
        with open(os.path.join(path, e["file"]), "rb") as f:
            raw = f.read()
        dtype = np.dtype(e["dtype"])
        expected = int(np.prod(e["shape"], dtype=np.int64)) * dtype.itemsize
        if len(raw) != expected:
            raise ShapeError(f"{path}: '{name}' has {len(raw)} bytes, shape {e['shape']} needs {expected}")
        if hashlib.sha256(raw).hexdigest() != e["sha256"]:
            raise ChecksumError(f"{path}: checksum mismatch for '{name}'")
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(e["shape"]).copy()
    return arrays, manifest["meta"]


def container_digest(path):
    """sha256 over the manifest bytes (which pin every blob checksum)."""
    with open(os.path.join(path, MANIFEST), "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
