"""Bit-exact raster and change-map I/O, plus nearest-neighbour band upsampling.

Rasters live in a two-file form: a JSON header describing extents, dtype and
band metadata, next to a raw little-endian band-sequential row-major payload::

    {"width": W, "height": H, "dtype": "u16"|"f32",
     "bands": [{"id": "B02", "wavelength_nm": 492.4, "native_res_m": 10}, ...],
     "data": "<path relative to the header>"}

Change maps are written as 8-bit greyscale PGM (P5, maxval 255) for viewing;
probabilistic maps are additionally stored losslessly as a single-band f32
raster so they can be reloaded bit-exactly.

There is no geo-referencing here: scenes are treated as co-registered,
aligned pixel grids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from deltascope.errors import FormatError, ValidationError

_DTYPES = {"u16": np.dtype("<u2"), "f32": np.dtype("<f4")}
MAX_BANDS = 13


@dataclass(frozen=True)
class BandInfo:
    """Identity, central wavelength (nm) and native resolution (m) of one band."""

    band_id: str
    wavelength_nm: float
    native_res_m: int


# Sentinel-2A band table: 4 bands at 10 m, 6 at 20 m, 3 at 60 m.
SENTINEL2_BANDS = (
    BandInfo("B01", 442.7, 60),
    BandInfo("B02", 492.4, 10),
    BandInfo("B03", 559.8, 10),
    BandInfo("B04", 664.6, 10),
    BandInfo("B05", 704.1, 20),
    BandInfo("B06", 740.5, 20),
    BandInfo("B07", 782.8, 20),
    BandInfo("B08", 832.8, 10),
    BandInfo("B8A", 864.7, 20),
    BandInfo("B09", 945.1, 60),
    BandInfo("B10", 1373.5, 60),
    BandInfo("B11", 1613.7, 20),
    BandInfo("B12", 2202.4, 20),
)


@dataclass
class MultibandRaster:
    """A georeference-free H x W x C reflectance image with band metadata."""

    width: int
    height: int
    dtype: str
    bands: list[np.ndarray]
    band_meta: list[BandInfo]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dtype not in _DTYPES:
            raise ValidationError(f"unknown raster dtype {self.dtype!r}")
        if len(self.bands) != len(self.band_meta):
            raise ValidationError(
                f"{len(self.bands)} band planes but {len(self.band_meta)} metadata entries")
        if len(self.bands) > MAX_BANDS:
            raise ValidationError(f"{len(self.bands)} bands exceed the {MAX_BANDS}-band limit")
        for meta, plane in zip(self.band_meta, self.bands):
            if plane.shape != (self.height, self.width):
                raise ValidationError(
                    f"band {meta.band_id!r} has shape {plane.shape}, "
                    f"expected {(self.height, self.width)}")

    @property
    def band_count(self) -> int:
        return len(self.bands)

    def stack(self) -> np.ndarray:
        """All bands as one H x W x C array (file band order)."""
        return np.stack(self.bands, axis=-1)


def load_raster(header_path) -> MultibandRaster:
    """Read a raster from its JSON header; no resampling is applied."""
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{header_path}: header is not valid JSON ({exc})") from exc
    for key in ("width", "height", "dtype", "bands", "data"):
        if key not in header:
            raise FormatError(f"{header_path}: header misses required key {key!r}")
    dtype_name = header["dtype"]
    if dtype_name not in _DTYPES:
        raise FormatError(f"{header_path}: unknown dtype {dtype_name!r}")
    width, height = int(header["width"]), int(header["height"])
    meta = [BandInfo(str(b["id"]), float(b["wavelength_nm"]), int(b["native_res_m"]))
            for b in header["bands"]]

    data_path = header_path.parent / header["data"]
    raw = data_path.read_bytes()
    dtype = _DTYPES[dtype_name]
    expected = width * height * len(meta) * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"{data_path}: payload holds {len(raw)} bytes, expected {expected} "
            f"({len(meta)} bands of {width}x{height} {dtype_name})")
    flat = np.frombuffer(raw, dtype=dtype)
    plane_len = width * height
    bands = [flat[i * plane_len:(i + 1) * plane_len].reshape(height, width).copy()
             for i in range(len(meta))]
    return MultibandRaster(width, height, dtype_name, bands, meta)


def save_raster(raster: MultibandRaster, header_path, data_name: str | None = None) -> None:
    """Write header JSON plus raw payload next to it."""
    raster.validate()
    header_path = Path(header_path)
    if data_name is None:
        data_name = header_path.stem + ".bin"
    dtype = _DTYPES[raster.dtype]
    payload = b"".join(np.ascontiguousarray(plane, dtype=dtype).tobytes()
                       for plane in raster.bands)
    header = {
        "width": raster.width,
        "height": raster.height,
        "dtype": raster.dtype,
        "bands": [{"id": m.band_id, "wavelength_nm": m.wavelength_nm,
                   "native_res_m": m.native_res_m} for m in raster.band_meta],
        "data": data_name,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    (header_path.parent / data_name).write_bytes(payload)


def upsample_band(plane: np.ndarray, factor: int, method: str = "nearest") -> np.ndarray:
    """Replicate each pixel into a factor x factor block (20 m -> 10 m: 2, 60 m -> 10 m: 6)."""
    if method != "nearest":
        raise ValidationError(f"unsupported upsampling method {method!r}")
    if factor not in (2, 6):
        raise ValidationError(f"upsample factor must be 2 or 6, got {factor}")
    plane = np.asarray(plane)
    return plane.repeat(factor, axis=0).repeat(factor, axis=1)


# ----------------------------------------------------------------------
# change maps
# ----------------------------------------------------------------------

CHANGE_MAP_KINDS = ("probabilistic", "binary", "coarse")


@dataclass
class ChangeMap:
    """A per-pixel change image: probabilities in [0,1] or binary {0,1}."""

    width: int
    height: int
    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.validate()

    def validate(self) -> None:
        if self.kind not in CHANGE_MAP_KINDS:
            raise ValidationError(f"unknown change-map kind {self.kind!r}")
        if self.values.shape != (self.height, self.width):
            raise ValidationError(
                f"values shape {self.values.shape} does not match "
                f"{(self.height, self.width)}")
        if self.kind == "binary":
            if not np.isin(self.values, (0, 1)).all():
                raise ValidationError("binary change map holds values outside {0,1}")
        elif self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValidationError(f"{self.kind} change map holds values outside [0,1]")

    @classmethod
    def from_array(cls, values, kind: str) -> "ChangeMap":
        values = np.asarray(values)
        return cls(values.shape[1], values.shape[0], values, kind)


def write_pgm(values: np.ndarray, path) -> None:
    """8-bit greyscale PGM (P5); values in [0,1] quantized as floor(255*v + 0.5)."""
    grey = np.floor(255.0 * np.asarray(values, dtype=np.float64) + 0.5).astype(np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + grey.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 PGM back into float values in [0,1]."""
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"{path}: expected maxval 255, got {maxval}")
    pixels = np.frombuffer(raw[pos + 1:], dtype=np.uint8)
    if pixels.size != width * height:
        raise FormatError(f"{path}: {pixels.size} pixels, expected {width * height}")
    return pixels.reshape(height, width).astype(np.float64) / 255.0


def save_change_map(change_map: ChangeMap, stem) -> list[Path]:
    """Write `<stem>.pgm`; probabilistic maps also get a lossless f32 sidecar.

    Returns the list of written paths.
    """
    change_map.validate()
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    pgm_path = stem.with_suffix(".pgm")
    write_pgm(change_map.values, pgm_path)
    written.append(pgm_path)
    if change_map.kind == "probabilistic":
        raster = MultibandRaster(
            change_map.width, change_map.height, "f32",
            [np.asarray(change_map.values, dtype="<f4")],
            [BandInfo("change_probability", 0.0, 10)])
        header_path = stem.with_suffix(".json")
        save_raster(raster, header_path, stem.name + ".f32")
        written.extend([header_path, stem.parent / (stem.name + ".f32")])
    return written


def load_change_map(header_path) -> ChangeMap:
    """Reload a probabilistic change map from its f32 sidecar form."""
    raster = load_raster(header_path)
    if raster.dtype != "f32" or raster.band_count != 1:
        raise FormatError(f"{header_path}: expected a single-band f32 change map")
    return ChangeMap(raster.width, raster.height,
                     raster.bands[0].astype(np.float64), "probabilistic")
