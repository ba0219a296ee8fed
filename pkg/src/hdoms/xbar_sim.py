"""Behavioral model of a multi-level-cell RRAM crossbar.

Signed weights live in differential cell pairs, g+ - g-, programmed with
per-level Gaussian relaxation noise.  A matrix-vector product is read out
through steady-state open-circuit sensing: driving N rows charges each
column's sense line to

    V_SL = V_ref + [sum_i x_i (g_i+ - g_i-) / (N g_max)] V_pulse

which an ADC quantizes uniformly over [V_ref - V_pulse, V_ref + V_pulse].
Binary hypervectors can also be packed n bits per cell (non-differential)
for dense storage.  All randomness is counter-based and seeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    ChunkMismatchError,
    ConfigError,
    DomainError,
    FormatError,
    RowLimitExceededError,
)
from .hd_core import Hypervector, family_rng

TIME_BUCKETS = ("t0", "30min", "60min", "1day")

# seed-stream tags (hd_core uses 1 and 2)
_STREAM_PROGRAM = 3
_STREAM_MEASURE = 4


@dataclass(frozen=True)
class NoiseModel:
    """Relaxation-noise table: (levels_per_cell, time bucket) -> sigma/g_max."""

    sigma: dict[tuple[int, str], float]

    def __post_init__(self):
        for (levels, bucket), value in self.sigma.items():
            if bucket not in TIME_BUCKETS:
                raise ConfigError(f"unknown time bucket {bucket!r}")
            if value < 0:
                raise ConfigError(f"sigma for ({levels}, {bucket}) is negative")
        # relaxation only ever gets worse with time
        for levels in {lv for lv, _ in self.sigma}:
            series = [
                self.sigma[(levels, b)] for b in TIME_BUCKETS if (levels, b) in self.sigma
            ]
            if any(b < a for a, b in zip(series, series[1:])):
                raise ConfigError(f"sigma not monotone in time for {levels} levels")

    def sigma_for(self, levels_per_cell: int, time_bucket: str) -> float:
        try:
            return self.sigma[(levels_per_cell, time_bucket)]
        except KeyError:
            raise ConfigError(
                f"no sigma for {levels_per_cell} levels at {time_bucket!r}"
            ) from None

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls({(lv, b): 0.0 for lv in (2, 4, 8) for b in TIME_BUCKETS})

    @classmethod
    def from_text(cls, text: str, name: str = "<text>") -> "NoiseModel":
        table: dict[tuple[int, str], float] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{name}:{lineno}: expected 'levels bucket sigma'")
            try:
                levels = int(parts[0])
                value = float(parts[2])
            except ValueError as exc:
                raise FormatError(f"{name}:{lineno}: {exc}") from None
            table[(levels, parts[1])] = value
        if not table:
            raise FormatError(f"{name}: empty noise table")
        return cls(table)

    @classmethod
    def from_file(cls, path: str | Path) -> "NoiseModel":
        return cls.from_text(Path(path).read_text(), name=str(path))

    @classmethod
    def default(cls) -> "NoiseModel":
        text = resources.files("hdoms.data").joinpath("relaxation_sigma.txt").read_text()
        return cls.from_text(text, name="relaxation_sigma.txt")


@dataclass(frozen=True)
class RramConfig:
    """Cell, sensing and ADC parameters (voltages and conductances normalized)."""

    levels_per_cell: int = 8
    g_max: float = 1.0
    w_max: float = 1.0
    adc_bits: int | None = 8  # None = ideal continuous readout
    v_ref: float = 0.0
    v_pulse: float = 1.0
    max_active_rows: int = 64
    capacitance: float = 1e-12
    settle_time: float | None = None  # seconds; None = steady state
    tile_rows: int = 256
    tile_cols: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.levels_per_cell not in (2, 4, 8):
            raise ConfigError("levels_per_cell must be 2, 4 or 8")
        if not 1 <= self.max_active_rows <= 64:
            raise ConfigError("max_active_rows must be in [1, 64]")
        if self.g_max <= 0 or self.w_max <= 0 or self.v_pulse <= 0:
            raise ConfigError("g_max, w_max and v_pulse must be positive")
        if self.adc_bits is not None and not 1 <= self.adc_bits <= 16:
            raise ConfigError("adc_bits must be in [1, 16] or None")
        if self.tile_rows < 2 or self.tile_cols < 1:
            raise ConfigError("tile shape too small")

    @property
    def bits_per_cell(self) -> int:
        return int(math.log2(self.levels_per_cell))


def level_grid(cfg: RramConfig) -> np.ndarray:
    """The programmable conductance levels: 2^n points uniform on [0, g_max]."""
    return np.linspace(0.0, cfg.g_max, cfg.levels_per_cell)


@dataclass
class CrossbarTile:
    """One programmed array; `mode` says how rows are interpreted.

    In differential mode rows are interleaved pairs (even g+, odd g-) and
    at program time every pair sums to g_max; in direct mode each cell
    stores an independent level.
    """

    rows: int
    cols: int
    mode: str
    g: np.ndarray
    targets: np.ndarray

    def validate(self, cfg: RramConfig) -> None:
        if self.g.shape != (self.rows, self.cols):
            raise ConfigError("conductance matrix shape mismatch")
        if np.any(self.g < 0) or np.any(self.g > cfg.g_max):
            raise ConfigError("conductance outside [0, g_max]")
        if self.mode == "differential":
            if self.rows % 2:
                raise ConfigError("differential tile needs an even row count")
            pair_sum = self.targets[0::2] + self.targets[1::2]
            if not np.allclose(pair_sum, cfg.g_max, atol=1e-12):
                raise ConfigError("differential pair targets must sum to g_max")
        elif self.mode != "direct":
            raise ConfigError(f"unknown tile mode {self.mode!r}")


def _apply_noise(
    targets: np.ndarray,
    cfg: RramConfig,
    noise: NoiseModel | None,
    time_bucket: str,
    rng: np.random.Generator | None,
) -> np.ndarray:
    sigma = 0.0 if noise is None else noise.sigma_for(cfg.levels_per_cell, time_bucket)
    if sigma == 0.0:
        return np.array(targets, dtype=np.float64, copy=True)
    if rng is None:
        rng = family_rng(cfg.seed, _STREAM_PROGRAM)
    noisy = targets + rng.normal(0.0, sigma * cfg.g_max, size=targets.shape)
    return np.clip(noisy, 0.0, cfg.g_max)


def program(
    targets: np.ndarray,
    cfg: RramConfig,
    noise: NoiseModel | None = None,
    time_bucket: str = "t0",
    rng: np.random.Generator | None = None,
    mode: str = "direct",
) -> CrossbarTile:
    """Program target conductances into a tile.

    Each cell lands at clip(target + N(0, sigma*g_max), 0, g_max) with sigma
    taken from the noise table for (levels_per_cell, time_bucket); noise=None
    programs exactly.  Targets are expected on the level grid (or, for
    differential pairs, mapped through map_differential).
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2:
        raise ConfigError("targets must be 2-d (rows, cols)")
    if np.any(targets < 0) or np.any(targets > cfg.g_max):
        raise DomainError("targets outside [0, g_max]")
    g = _apply_noise(targets, cfg, noise, time_bucket, rng)
    tile = CrossbarTile(targets.shape[0], targets.shape[1], mode, g, targets.copy())
    tile.validate(cfg)
    return tile


def map_differential(weights: np.ndarray | float, cfg: RramConfig):
    """Split signed weights into differential conductances.

    g+ = (1 + W/w_max)/2 * g_max and g- = (1 - W/w_max)/2 * g_max, so the
    pair always sums to g_max and the difference is proportional to W.
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(np.abs(w) > cfg.w_max * (1 + 1e-12)):
        raise DomainError("|W| exceeds w_max")
    g_plus = 0.5 * (1.0 + w / cfg.w_max) * cfg.g_max
    g_minus = 0.5 * (1.0 - w / cfg.w_max) * cfg.g_max
    return g_plus, g_minus


def program_differential(
    weights: np.ndarray,
    cfg: RramConfig,
    noise: NoiseModel | None = None,
    time_bucket: str = "t0",
    rng: np.random.Generator | None = None,
) -> CrossbarTile:
    """Program a (pairs, cols) weight matrix as interleaved differential rows."""
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    g_plus, g_minus = map_differential(weights, cfg)
    targets = np.empty((2 * weights.shape[0], weights.shape[1]), dtype=np.float64)
    targets[0::2] = g_plus
    targets[1::2] = g_minus
    return program(targets, cfg, noise, time_bucket, rng, mode="differential")


def adc_quantize(v: np.ndarray, cfg: RramConfig) -> np.ndarray:
    """Uniform mid-rise ADC over [v_ref - v_pulse, v_ref + v_pulse]."""
    if cfg.adc_bits is None:
        raise ConfigError("adc_bits is None (continuous readout)")
    codes = 1 << cfg.adc_bits
    step = 2.0 * cfg.v_pulse / codes
    idx = np.floor((np.asarray(v) - (cfg.v_ref - cfg.v_pulse)) / step).astype(np.int64)
    return np.clip(idx, 0, codes - 1)


def adc_reconstruct(codes: np.ndarray, cfg: RramConfig) -> np.ndarray:
    if cfg.adc_bits is None:
        raise ConfigError("adc_bits is None (continuous readout)")
    step = 2.0 * cfg.v_pulse / (1 << cfg.adc_bits)
    return (cfg.v_ref - cfg.v_pulse) + (np.asarray(codes) + 0.5) * step


def mvm_sense(
    tile: CrossbarTile, x: np.ndarray, cfg: RramConfig
) -> tuple[np.ndarray, np.ndarray | None]:
    """Drive inputs x (one per differential pair, values in {-1, 0, +1}) and
    sense every column.

    Returns (analog sense voltages, ADC codes); codes is None when
    cfg.adc_bits is None.  The sense amp normalizes by the full activation
    group of N = max_active_rows, so at most N pairs may carry a nonzero
    input per sense.
    """
    if tile.mode != "differential":
        raise ConfigError("mvm_sense needs a differential tile")
    x = np.asarray(x, dtype=np.float64)
    pairs = tile.rows // 2
    if x.shape != (pairs,):
        raise DomainError(f"expected one input per pair, {pairs}")
    if np.any(~np.isin(x, (-1.0, 0.0, 1.0))):
        raise DomainError("inputs must be -1, 0 or +1 (multi-bit inputs go bit-serial)")
    active = int(np.count_nonzero(x))
    if active > cfg.max_active_rows:
        raise RowLimitExceededError(f"{active} active pairs > N={cfg.max_active_rows}")

    diff = tile.g[0::2] - tile.g[1::2]
    s = (x @ diff) / (cfg.max_active_rows * cfg.g_max)
    v = cfg.v_ref + s * cfg.v_pulse

    if cfg.settle_time is not None:
        # finite charge-up: the line only reaches a fraction of the steady state
        g_sum = ((tile.g[0::2] + tile.g[1::2]) * (x != 0.0)[:, None]).sum(axis=0)
        factor = 1.0 - np.exp(-cfg.settle_time * g_sum / cfg.capacitance)
        v = cfg.v_ref + (v - cfg.v_ref) * factor

    codes = adc_quantize(v, cfg) if cfg.adc_bits is not None else None
    return v, codes


def decode_mac(
    sensed: np.ndarray, cfg: RramConfig, from_codes: bool = False
) -> np.ndarray:
    """Invert the sensing equation back to a MAC estimate (in weight units)."""
    v = adc_reconstruct(sensed, cfg) if from_codes else np.asarray(sensed, dtype=np.float64)
    return (v - cfg.v_ref) / cfg.v_pulse * cfg.max_active_rows * cfg.w_max


def sense_dot(tile: CrossbarTile, x: np.ndarray, cfg: RramConfig) -> np.ndarray:
    """Sense and decode in one step, honoring the configured ADC."""
    v, codes = mvm_sense(tile, x, cfg)
    if codes is None:
        return decode_mac(v, cfg)
    return decode_mac(codes, cfg, from_codes=True)


def crossbar_dot(
    a: np.ndarray,
    b: np.ndarray,
    cfg: RramConfig,
    noise: NoiseModel | None = None,
    time_bucket: str = "t0",
    rng: np.random.Generator | None = None,
) -> float:
    """Dot product of two +-1 vectors through the crossbar.

    Splits the vectors into groups of at most N pairs, programs each group
    as one differential column, senses, decodes, and accumulates digitally
    across groups (as across row tiles).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("expected two equal-length vectors")
    total = 0.0
    n = cfg.max_active_rows
    for start in range(0, a.size, n):
        wa = a[start : start + n]
        xb = b[start : start + n]
        tile = program_differential(wa[:, None], cfg, noise, time_bucket, rng)
        total += float(sense_dot(tile, xb, cfg)[0])
    return total


def encode_elementwise(
    id_rows: np.ndarray,
    lv_rows: np.ndarray,
    cfg: RramConfig,
    mode: str = "naive",
    chunk_count: int | None = None,
    noise: NoiseModel | None = None,
    time_bucket: str = "t0",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, int]:
    """Element-wise ID*LV accumulation in the array, returning (sums, cycles).

    ID rows are stored horizontally as differential pairs; level inputs
    drive one column per cycle in naive mode (D cycles per peak batch).  In
    chunked mode the level inputs must be constant within each of
    chunk_count chunks, so one sense per chunk covers all its columns
    (chunk_count cycles).  Noiseless outputs are identical in both modes.
    """
    id_rows = np.atleast_2d(np.asarray(id_rows, dtype=np.float64))
    lv_rows = np.atleast_2d(np.asarray(lv_rows, dtype=np.float64))
    if id_rows.shape != lv_rows.shape:
        raise DomainError("ID and level matrices must have the same shape")
    peaks, dim = id_rows.shape
    if peaks > cfg.max_active_rows:
        raise RowLimitExceededError(f"{peaks} peak rows > N={cfg.max_active_rows}")

    if mode == "chunked":
        if not chunk_count or dim % chunk_count:
            raise ConfigError("chunked mode needs chunk_count dividing the dimension")
        size = dim // chunk_count
        chunks = lv_rows.reshape(peaks, chunk_count, size)
        if np.any(chunks != chunks[:, :, :1]):
            raise ChunkMismatchError("level inputs are not constant within chunks")
        cycles = chunk_count
    elif mode == "naive":
        cycles = dim
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    w_max = float(np.abs(id_rows).max())
    scaled = replace(cfg, w_max=max(w_max, 1e-30))
    tile = program_differential(id_rows, scaled, noise, time_bucket, rng)
    diff = tile.g[0::2] - tile.g[1::2]
    # one sense per column (or per chunk of columns); same arithmetic either way
    s = (lv_rows * diff).sum(axis=0) / (scaled.max_active_rows * scaled.g_max)
    v = scaled.v_ref + s * scaled.v_pulse
    if scaled.adc_bits is None:
        mac = decode_mac(v, scaled)
    else:
        mac = decode_mac(adc_quantize(v, scaled), scaled, from_codes=True)
    return mac, cycles


def store_hypervector(h: Hypervector | np.ndarray, n: int, cfg: RramConfig) -> np.ndarray:
    """Pack a binary hypervector n bits per cell (non-differential).

    Bits map -1 -> 0, +1 -> 1 and join big-endian within each n-bit segment;
    the segment value h' in [0, 2^n - 1] programs g = h'/(2^n - 1) * g_max.
    """
    bits = h.to_bits() if isinstance(h, Hypervector) else np.asarray(h, dtype=bool)
    if bits.shape[-1] % n:
        raise ConfigError(f"dimension not divisible by {n} bits per cell")
    segments = bits.reshape(*bits.shape[:-1], bits.shape[-1] // n, n)
    weights = (1 << np.arange(n - 1, -1, -1)).astype(np.int64)
    values = segments @ weights
    return values * (cfg.g_max / (2**n - 1))


def read_hypervector(g: np.ndarray, n: int, cfg: RramConfig) -> np.ndarray:
    """Decode conductances back to bits by nearest level; inverse of store."""
    scaled = np.asarray(g, dtype=np.float64) * ((2**n - 1) / cfg.g_max)
    values = np.clip(np.rint(scaled).astype(np.int64), 0, 2**n - 1)
    shifts = np.arange(n - 1, -1, -1)
    bits = (values[..., None] >> shifts) & 1
    return bits.reshape(*g.shape[:-1], g.shape[-1] * n).astype(bool)


def measure_ber(
    cfg: RramConfig,
    noise: NoiseModel | None,
    time_bucket: str,
    trials: int,
    rng: np.random.Generator | None = None,
) -> float:
    """Store random bits at n per cell, relax, read back; fraction flipped.

    `trials` counts cells, so trials * n bits are checked.
    """
    n = cfg.bits_per_cell
    if rng is None:
        rng = family_rng(cfg.seed, _STREAM_MEASURE)
    bits = rng.integers(0, 2, size=trials * n, dtype=np.uint8).astype(bool)
    g = store_hypervector(bits, n, cfg)
    noisy = _apply_noise(g, cfg, noise, time_bucket, rng)
    back = read_hypervector(noisy, n, cfg)
    return float(np.count_nonzero(back != bits)) / bits.size


def measure_mvm_nmse(
    cfg: RramConfig,
    noise: NoiseModel | None,
    time_bucket: str,
    active_rows: int,
    trials: int,
    rng: np.random.Generator | None = None,
) -> float:
    """NMSE of crossbar MACs against exact dot products.

    Weights are drawn from the 2^n-point level grid on [-w_max, w_max]
    (their differential conductances then sit on the cell grid), inputs are
    +-1, and active_rows pairs are driven per MAC, which also sets the
    sensing normalization N.
    """
    if not 1 <= active_rows <= 64:
        raise ConfigError("active_rows must be in [1, 64]")
    if rng is None:
        rng = family_rng(cfg.seed, _STREAM_MEASURE)
    run_cfg = replace(cfg, max_active_rows=active_rows)
    n_levels = cfg.levels_per_cell
    w_grid = np.linspace(-cfg.w_max, cfg.w_max, n_levels)
    w = w_grid[rng.integers(0, n_levels, size=(trials, active_rows))]
    x = rng.choice(np.array([-1.0, 1.0]), size=(trials, active_rows))

    g_plus, g_minus = map_differential(w, run_cfg)
    g_plus = _apply_noise(g_plus, run_cfg, noise, time_bucket, rng)
    g_minus = _apply_noise(g_minus, run_cfg, noise, time_bucket, rng)

    s = (x * (g_plus - g_minus)).sum(axis=1) / (active_rows * run_cfg.g_max)
    v = run_cfg.v_ref + s * run_cfg.v_pulse
    if run_cfg.adc_bits is None:
        mac = decode_mac(v, run_cfg)
    else:
        mac = decode_mac(adc_quantize(v, run_cfg), run_cfg, from_codes=True)

    exact = (x * w).sum(axis=1)
    variance = float(np.var(exact))
    if variance == 0.0:
        return 0.0
    return float(np.mean((mac - exact) ** 2) / variance)
