"""Chirp-spread-spectrum primitives: modulation, frame assembly, dechirping.

Everything works at critical sampling (sample rate == bandwidth), so one
symbol is exactly N = 2**sf complex samples and the dechirped FFT has one
bin per candidate symbol value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Cyclic shift used by both sync symbols in a frame header.
SYNC_WORD_BIN = 8

# Header structure: preamble upchirps, two sync upchirps, 2.25 downchirps.
N_SYNC_SYMBOLS = 2
N_FULL_DOWNCHIRPS = 2


@dataclass(frozen=True)
class PhyParams:
    """Radio parameters. Spreading factor fixes the symbol alphabet size."""

    sf: int
    bandwidth_hz: float = 125e3

    def __post_init__(self):
        if not isinstance(self.sf, (int, np.integer)) or isinstance(self.sf, bool):
            raise ValueError(f"sf must be an integer, got {self.sf!r}")
        if not 7 <= self.sf <= 12:
            raise ValueError(f"sf must be in [7, 12], got {self.sf}")
        if not self.bandwidth_hz > 0:
            raise ValueError(f"bandwidth_hz must be positive, got {self.bandwidth_hz}")

    @property
    def n(self) -> int:
        """Samples per symbol, also the number of FFT bins after dechirp."""
        return 1 << self.sf

    @property
    def sample_rate_hz(self) -> float:
        """Critical sampling: the complex sample rate equals the bandwidth."""
        return float(self.bandwidth_hz)

    @property
    def symbol_time_s(self) -> float:
        return self.n / self.bandwidth_hz


@dataclass
class ComplexSignal:
    """A 1-D complex baseband sample stream tagged with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if self.samples.size == 0:
            raise ValueError("samples must be non-empty")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class DechirpedSpectrum:
    """FFT of one dechirped symbol window: complex bins plus magnitudes."""

    bins: np.ndarray
    magnitudes: np.ndarray

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if self.bins.ndim != 1 or self.bins.size == 0:
            raise ValueError("bins must be a non-empty 1-D array")
        if self.magnitudes.shape != self.bins.shape:
            raise ValueError("magnitudes must match bins in shape")

    @property
    def n(self) -> int:
        return self.bins.size


@dataclass
class SymbolWindow:
    """One dechirped symbol: the time-domain product and its spectrum.

    `time_samples` holds the window already multiplied by the conjugate
    base chirp, which is what the half-symbol feature needs; the raw
    received samples are not kept.
    """

    time_samples: np.ndarray
    spectrum: DechirpedSpectrum

    def __post_init__(self):
        self.time_samples = np.asarray(self.time_samples, dtype=np.complex128)
        if self.time_samples.shape != (self.spectrum.n,):
            raise ValueError(
                f"time_samples shape {self.time_samples.shape} does not match "
                f"spectrum with {self.spectrum.n} bins"
            )

    @property
    def n(self) -> int:
        return self.spectrum.n


@lru_cache(maxsize=16)
def _upchirp_table(n: int) -> np.ndarray:
    """Base upchirp exp(j*pi*k^2/N), cached read-only per window length."""
    k = np.arange(n)
    table = np.exp(1j * np.pi * k * k / n)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=16)
def _downchirp_table(n: int) -> np.ndarray:
    table = np.conj(_upchirp_table(n))
    table.setflags(write=False)
    return table


def base_upchirp(params: PhyParams) -> ComplexSignal:
    """Unit-amplitude upchirp sweeping the full bandwidth once."""
    return ComplexSignal(_upchirp_table(params.n).copy(), params.sample_rate_hz)


def downchirp(params: PhyParams) -> ComplexSignal:
    """Conjugate of the base upchirp; sweeps the band in the other direction."""
    return ComplexSignal(_downchirp_table(params.n).copy(), params.sample_rate_hz)


def modulate_symbol(m: int, params: PhyParams) -> ComplexSignal:
    """Encode symbol value m as a cyclic shift of the base upchirp.

    Sample k of the output equals base[(k + m) mod N], so after dechirp the
    energy lands in FFT bin m.
    """
    n = params.n
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool):
        raise ValueError(f"symbol value must be an integer, got {m!r}")
    if not 0 <= m < n:
        raise ValueError(f"symbol value must be in [0, {n}), got {m}")
    shifted = np.roll(_upchirp_table(n), -int(m))
    return ComplexSignal(shifted, params.sample_rate_hz)


def build_frame(
    payload_symbols: np.ndarray | list[int],
    preamble_len: int,
    params: PhyParams,
) -> ComplexSignal:
    """Assemble a frame: preamble, two sync symbols, 2.25 downchirps, payload.

    The quarter downchirp keeps the conventional header length of 4.25
    symbols after the preamble, so the first payload sample sits at
    (preamble_len + 4) * N + N // 4.
    """
    if not isinstance(preamble_len, (int, np.integer)) or preamble_len < 1:
        raise ValueError(f"preamble_len must be a positive integer, got {preamble_len}")
    payload = np.asarray(payload_symbols)
    if payload.ndim != 1 or payload.size == 0:
        raise ValueError("payload_symbols must be a non-empty 1-D sequence")
    if not np.issubdtype(payload.dtype, np.integer):
        raise ValueError(f"payload symbols must be integers, got dtype {payload.dtype}")
    n = params.n
    if np.any((payload < 0) | (payload >= n)):
        raise ValueError(f"payload symbols must lie in [0, {n})")

    up = _upchirp_table(n)
    down = _downchirp_table(n)
    sync = np.roll(up, -SYNC_WORD_BIN)
    parts = [up] * int(preamble_len)
    parts += [sync] * N_SYNC_SYMBOLS
    parts += [down] * N_FULL_DOWNCHIRPS
    parts.append(down[: n // 4])
    parts += [np.roll(up, -int(m)) for m in payload]
    return ComplexSignal(np.concatenate(parts), params.sample_rate_hz)


def frame_length(n_payload: int, preamble_len: int, params: PhyParams) -> int:
    """Sample count of a frame built with the same arguments."""
    n = params.n
    header = preamble_len + N_SYNC_SYMBOLS + N_FULL_DOWNCHIRPS
    return header * n + n // 4 + n_payload * n


def payload_start(preamble_len: int, params: PhyParams) -> int:
    """Index of the first payload sample within a frame."""
    n = params.n
    return (preamble_len + N_SYNC_SYMBOLS + N_FULL_DOWNCHIRPS) * n + n // 4


def dechirp(window: ComplexSignal | np.ndarray, params: PhyParams) -> SymbolWindow:
    """Multiply one symbol window by the conjugate base chirp and FFT it.

    A clean symbol m collapses to a single tone, so its spectrum has one
    bin of magnitude N at index m and zeros elsewhere.
    """
    samples = window.samples if isinstance(window, ComplexSignal) else np.asarray(window)
    samples = samples.astype(np.complex128, copy=False)
    n = params.n
    if samples.shape != (n,):
        raise ValueError(f"window must hold exactly {n} samples, got shape {samples.shape}")
    flattened = samples * _downchirp_table(n)
    bins = np.fft.fft(flattened)
    return SymbolWindow(flattened, DechirpedSpectrum(bins, np.abs(bins)))


def baseline_detect(spectrum: DechirpedSpectrum) -> int:
    """Magnitude argmax detector; ties resolve to the lowest bin index."""
    return int(np.argmax(spectrum.magnitudes))


def estimate_expected_peak(windows: list[SymbolWindow]) -> float:
    """Mean of the per-window peak magnitudes, taken over preamble windows.

    The result anchors the peak-magnitude-deviation feature: with a clean
    unit-amplitude preamble it equals N.
    """
    if len(windows) == 0:
        raise ValueError("need at least one window to estimate the expected peak")
    peaks = [float(np.max(w.spectrum.magnitudes)) for w in windows]
    return float(np.mean(peaks))
