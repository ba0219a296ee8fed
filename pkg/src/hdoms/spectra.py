"""Spectrum ingestion, noise filtering and m/z binning.

The unit handled here is a centroided MS/MS spectrum: a precursor mass plus
a list of (m/z, intensity) peaks.  Spectra are read from MGF files, cleaned
up with an intensity filter and a square-root transform, and finally turned
into sparse fixed-width m/z bins.  Everything downstream works on the binned
representation only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, NamedTuple, TextIO

import numpy as np

from .errors import ConfigError, EmptySpectrumError, FormatError

logger = logging.getLogger(__name__)

PROTON_MASS = 1.007276466812


class Peak(NamedTuple):
    mz: float
    intensity: float


@dataclass
class Spectrum:
    """A single centroided spectrum.

    Peaks are stored as two parallel float64 arrays sorted by m/z.  The
    ``preprocessed`` flag marks spectra that already went through
    :func:`preprocess`; running the filter twice is a no-op.
    """

    id: str
    precursor_mass: float
    precursor_charge: int
    mz: np.ndarray
    intensity: np.ndarray
    is_decoy: bool = False
    preprocessed: bool = False

    def __post_init__(self):
        self.mz = np.asarray(self.mz, dtype=np.float64)
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        if self.mz.shape != self.intensity.shape or self.mz.ndim != 1:
            raise ValueError("mz and intensity must be 1-d arrays of equal length")
        if np.any(np.diff(self.mz) < 0):
            order = np.argsort(self.mz, kind="stable")
            self.mz = self.mz[order]
            self.intensity = self.intensity[order]

    @classmethod
    def from_peaks(
        cls,
        id: str,
        precursor_mass: float,
        precursor_charge: int,
        peaks: Iterable[Peak | tuple[float, float]],
        **kwargs,
    ) -> "Spectrum":
        pk = sorted((float(m), float(v)) for m, v in peaks)
        mz = np.array([p[0] for p in pk], dtype=np.float64)
        iv = np.array([p[1] for p in pk], dtype=np.float64)
        return cls(id, precursor_mass, precursor_charge, mz, iv, **kwargs)

    @property
    def peaks(self) -> list[Peak]:
        return [Peak(float(m), float(v)) for m, v in zip(self.mz, self.intensity)]

    def __len__(self) -> int:
        return int(self.mz.size)


@dataclass(frozen=True)
class PreprocessConfig:
    """Peak filtering and intensity transform settings.

    ``threshold_fraction`` removes peaks below that fraction of the base
    peak.  Spectra with fewer than ``min_peaks`` surviving peaks are
    rejected; at most ``max_peaks`` most intense peaks are kept.
    ``transform`` is ``"sqrt"`` (square root, then unit L2 norm) or
    ``"none"``.
    """

    threshold_fraction: float = 0.01
    min_peaks: int = 5
    max_peaks: int = 150
    transform: str = "sqrt"

    def __post_init__(self):
        if not 0.0 <= self.threshold_fraction < 1.0:
            raise ConfigError("threshold_fraction must be in [0, 1)")
        if self.min_peaks < 1 or self.max_peaks < self.min_peaks:
            raise ConfigError("need max_peaks >= min_peaks >= 1")
        if self.transform not in ("sqrt", "none"):
            raise ConfigError(f"unknown transform {self.transform!r}")


@dataclass(frozen=True)
class BinConfig:
    """Fixed-width m/z binning grid over [min_mz, max_mz)."""

    bin_width: float = 0.05
    min_mz: float = 50.5
    max_mz: float = 2500.0

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ConfigError("bin_width must be positive")
        if not self.max_mz > self.min_mz:
            raise ConfigError("need max_mz > min_mz")

    @property
    def num_bins(self) -> int:
        return int(np.ceil((self.max_mz - self.min_mz) / self.bin_width))


@dataclass
class BinnedVector:
    """Sparse binned spectrum: sorted bin indices with summed intensities."""

    spectrum_id: str
    indices: np.ndarray
    values: np.ndarray
    num_bins: int
    bin_width: float
    mz_range: tuple[float, float]
    dropped: int = 0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if self.indices.size:
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("bin indices must be strictly increasing")
            if self.indices[0] < 0 or self.indices[-1] >= self.num_bins:
                raise ValueError("bin index out of range")

    def __len__(self) -> int:
        return int(self.indices.size)


def preprocess(spectrum: Spectrum, config: PreprocessConfig | None = None) -> Spectrum:
    """Filter low-intensity peaks and normalise intensities.

    Duplicate m/z values are merged by summing their intensities.  Peaks
    below ``threshold_fraction`` of the base peak are removed, then the
    ``max_peaks`` most intense are kept (ties broken toward lower m/z).
    With the ``"sqrt"`` transform intensities are replaced by their square
    roots and scaled to unit L2 norm.

    Returns a new Spectrum with ``preprocessed=True``; an already
    preprocessed spectrum is returned unchanged.  Raises
    EmptySpectrumError when fewer than ``min_peaks`` peaks survive.
    """
    cfg = config or PreprocessConfig()
    if spectrum.preprocessed:
        return spectrum
    if len(spectrum) == 0:
        raise EmptySpectrumError(f"{spectrum.id}: no peaks")

    mz, inv = np.unique(spectrum.mz, return_inverse=True)
    intensity = np.zeros_like(mz)
    np.add.at(intensity, inv, spectrum.intensity)

    keep = intensity >= cfg.threshold_fraction * intensity.max()
    mz, intensity = mz[keep], intensity[keep]
    if mz.size > cfg.max_peaks:
        # lexsort is keyed last-first: most intense first, lower m/z on ties
        order = np.lexsort((mz, -intensity))[: cfg.max_peaks]
        order.sort()
        mz, intensity = mz[order], intensity[order]
    if mz.size < cfg.min_peaks:
        raise EmptySpectrumError(
            f"{spectrum.id}: {mz.size} peaks after filtering, need {cfg.min_peaks}"
        )

    if cfg.transform == "sqrt":
        intensity = np.sqrt(intensity)
        intensity = intensity / np.linalg.norm(intensity)

    return replace(spectrum, mz=mz, intensity=intensity, preprocessed=True)


def bin_spectrum(spectrum: Spectrum, config: BinConfig | None = None) -> BinnedVector:
    """Map a spectrum onto the fixed m/z grid.

    Peak intensities falling into the same bin are summed, so total
    intensity over in-range peaks is conserved.  Peaks outside
    [min_mz, max_mz) are dropped and counted in ``dropped``.
    """
    cfg = config or BinConfig()
    in_range = (spectrum.mz >= cfg.min_mz) & (spectrum.mz < cfg.max_mz)
    dropped = int(np.count_nonzero(~in_range))
    idx = ((spectrum.mz[in_range] - cfg.min_mz) / cfg.bin_width).astype(np.int64)
    # guard against float edge cases at the upper boundary
    np.clip(idx, 0, cfg.num_bins - 1, out=idx)
    uniq, inv = np.unique(idx, return_inverse=True)
    vals = np.zeros(uniq.size, dtype=np.float64)
    np.add.at(vals, inv, spectrum.intensity[in_range])
    return BinnedVector(
        spectrum_id=spectrum.id,
        indices=uniq,
        values=vals,
        num_bins=cfg.num_bins,
        bin_width=cfg.bin_width,
        mz_range=(cfg.min_mz, cfg.max_mz),
        dropped=dropped,
    )


def _parse_charge(text: str) -> int:
    text = text.strip().split()[0]
    sign = -1 if text.endswith("-") else 1
    return sign * int(text.rstrip("+-"))


def _finish_block(header: dict, mzs: list[float], ints: list[float]) -> Spectrum | None:
    if "pepmass" not in header or not mzs:
        return None
    charge = header.get("charge", 1)
    pepmz = header["pepmass"]
    mass = pepmz * abs(charge) - abs(charge) * PROTON_MASS
    title = header.get("title", "")
    return Spectrum.from_peaks(
        id=title,
        precursor_mass=mass,
        precursor_charge=charge,
        peaks=zip(mzs, ints),
        is_decoy=title.startswith("DECOY_"),
    )


def load_mgf(source: str | TextIO) -> Iterator[Spectrum]:
    """Iterate over the spectra of an MGF file.

    Malformed blocks (missing PEPMASS, no peaks, unparsable numbers) are
    skipped with a warning.  Raises FormatError if the whole file yields
    no valid spectrum.
    """
    if isinstance(source, str):
        with open(source) as handle:
            yield from _read_mgf(handle, source)
    else:
        yield from _read_mgf(source, getattr(source, "name", "<stream>"))


def _read_mgf(handle: TextIO, name: str) -> Iterator[Spectrum]:
    n_valid = 0
    n_skipped = 0
    in_block = False
    block_no = 0
    header: dict = {}
    mzs: list[float] = []
    ints: list[float] = []
    bad = False

    for line in handle:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line == "BEGIN IONS":
            in_block = True
            block_no += 1
            header, mzs, ints, bad = {}, [], [], False
            continue
        if line == "END IONS":
            spec = None if bad else _finish_block(header, mzs, ints)
            if spec is None:
                n_skipped += 1
                logger.warning("%s: skipping malformed block %d", name, block_no)
            else:
                if not spec.id:
                    spec.id = f"index={block_no - 1}"
                n_valid += 1
                yield spec
            in_block = False
            continue
        if not in_block:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip().lower()
            try:
                if key == "pepmass":
                    header["pepmass"] = float(value.split()[0])
                elif key == "charge":
                    header["charge"] = _parse_charge(value)
                elif key == "title":
                    header["title"] = value.strip()
            except (ValueError, IndexError):
                bad = True
        else:
            parts = line.split()
            try:
                mzs.append(float(parts[0]))
                ints.append(float(parts[1]))
            except (ValueError, IndexError):
                bad = True

    if n_valid == 0:
        raise FormatError(f"{name}: no valid spectra ({n_skipped} blocks skipped)")
    if n_skipped:
        logger.warning("%s: skipped %d malformed blocks", name, n_skipped)


def write_mgf(spectra: Iterable[Spectrum], destination: str | TextIO) -> int:
    """Write spectra in MGF format; returns the number written."""
    if isinstance(destination, str):
        with open(destination, "w") as handle:
            return write_mgf(spectra, handle)
    n = 0
    for spec in spectra:
        charge = spec.precursor_charge
        pepmz = (spec.precursor_mass + abs(charge) * PROTON_MASS) / abs(charge)
        destination.write("BEGIN IONS\n")
        destination.write(f"TITLE={spec.id}\n")
        destination.write(f"PEPMASS={pepmz:.6f}\n")
        destination.write(f"CHARGE={abs(charge)}{'-' if charge < 0 else '+'}\n")
        for m, v in zip(spec.mz, spec.intensity):
            destination.write(f"{m:.5f} {v:.6g}\n")
        destination.write("END IONS\n")
        n += 1
    return n
