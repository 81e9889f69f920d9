"""On-disk formats: SDI1 images, SDCK checkpoints, PGM export, manifests, configs.

SDI1: magic ``SDI1``, little-endian u32 side length n, u32 channel count (1),
then n*n float32 values row-major over (i2 outer, i1 inner).

SDCK: magic ``SDCK``, u32 version, u32 parameter count, then per parameter
u16 name length, name bytes (UTF-8), u8 rank, rank * u32 dims, float32 data;
followed by a u32-length-prefixed topology descriptor (JSON) and a
u32-length-prefixed resolved config text. Everything little-endian.
"""

import json
import struct

import numpy as np

SDI1_MAGIC = b"SDI1"
SDCK_MAGIC = b"SDCK"
SDCK_VERSION = 1


def write_sdi1(path, arr) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"SDI1 stores square single-channel images, got shape {arr.shape}")
    n = arr.shape[0]
    with open(path, "wb") as f:
        f.write(SDI1_MAGIC)
        f.write(struct.pack("<II", n, 1))
        f.write(arr.astype("<f4").tobytes(order="C"))


def read_sdi1(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SDI1_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected SDI1")
        n, channels = struct.unpack("<II", f.read(8))
        if channels != 1:
            raise ValueError(f"{path}: unsupported channel count {channels}")
        data = np.frombuffer(f.read(4 * n * n), dtype="<f4")
        if data.size != n * n:
            raise ValueError(f"{path}: truncated payload")
    return data.reshape(n, n).astype(np.float64)


def write_pgm(path, arr) -> None:
    """8-bit binary PGM for visual inspection; values clamped to [0, 1]."""
    arr = np.asarray(arr, dtype=np.float64)
    quant = np.clip(np.rint(np.clip(arr, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        f.write(quant.tobytes(order="C"))


def write_checkpoint(path, params, topology, config_text="") -> None:
    """Write an SDCK checkpoint.

    ``params`` is an ordered name -> ndarray mapping (stored as float32),
    ``topology`` a JSON-serializable descriptor sufficient to rebuild the
    network, ``config_text`` the resolved run configuration.
    """
    topo_bytes = json.dumps(topology, sort_keys=True).encode("utf-8")
    cfg_bytes = config_text.encode("utf-8")
    with open(path, "wb") as f:
        f.write(SDCK_MAGIC)
        f.write(struct.pack("<II", SDCK_VERSION, len(params)))
        for name, arr in params.items():
            arr = np.asarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            if len(name_b) > 0xFFFF:
                raise ValueError(f"parameter name too long: {name}")
            if arr.ndim > 0xFF:
                raise ValueError(f"parameter rank too large: {arr.ndim}")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))
        f.write(struct.pack("<I", len(topo_bytes)))
        f.write(topo_bytes)
        f.write(struct.pack("<I", len(cfg_bytes)))
        f.write(cfg_bytes)


def read_checkpoint(path):
    """Read an SDCK checkpoint; returns (params dict, topology dict, config text)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SDCK_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected SDCK")
        version, count = struct.unpack("<II", f.read(8))
        if version != SDCK_VERSION:
            raise ValueError(f"{path}: unsupported SDCK version {version}")
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
            size = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(f.read(4 * size), dtype="<f4")
            if data.size != size:
                raise ValueError(f"{path}: truncated parameter {name}")
            params[name] = data.reshape(shape).astype(np.float32)
        (topo_len,) = struct.unpack("<I", f.read(4))
        topology = json.loads(f.read(topo_len).decode("utf-8"))
        (cfg_len,) = struct.unpack("<I", f.read(4))
        config_text = f.read(cfg_len).decode("utf-8")
    return params, topology, config_text


def parse_key_values(text) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_key_values(pairs) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())


def write_manifest(path, rows) -> None:
    """Dataset manifest: CSV with columns filename, split, placement."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("filename,split,placement\n")
        for filename, split, placement in rows:
            f.write(f"{filename},{split},{placement}\n")


def read_manifest(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "filename,split,placement":
            raise ValueError(f"{path}: unexpected manifest header {header!r}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            filename, split, placement = line.split(",")
            rows.append((filename, split, int(placement)))
    return rows
