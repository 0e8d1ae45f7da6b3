"""Collision-resistant symbol detection.

Two per-bin features separate a frame's own tone from colliding energy in
a dechirped window: the peak magnitude deviation (how far a bin's
magnitude sits from the preamble-calibrated peak) and the half-symbol
power deviation (how much the bin's energy changes between window
halves). A Bayes posterior over a 2-D grid of those features, estimated
from simulated collisions, scores every bin; the previous window's
posteriors damp bins that were already occupied, which is what suppresses
an interferer's repeated preamble symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from cora.channel import TrainConfig, gen_training_symbol
from cora.phy import DechirpedSpectrum, SymbolWindow, baseline_detect

# A training run must keep at least this many baseline-misclassified
# windows before the histograms are considered meaningful.
MIN_KEPT_WINDOWS = 100


class TrainingError(RuntimeError):
    """Raised when a training run cannot produce a usable grid."""


class GridFormatError(ValueError):
    """Raised when a grid file does not follow the documented layout."""


@dataclass
class FeatureField:
    """Per-bin feature vectors for one window: p (peak deviation), h (half-symbol)."""

    p: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.p.shape != self.h.shape or self.p.ndim != 1 or self.p.size == 0:
            raise ValueError("p and h must be matching non-empty 1-D arrays")
        for name, arr in (("p", self.p), ("h", self.h)):
            # a single range test also rejects NaN and both infinities
            if not ((arr >= 0.0) & (arr <= 1.0)).all():
                raise ValueError(f"feature {name} must lie in [0, 1]")


@dataclass(frozen=True)
class PosteriorGrid:
    """Posterior probability of 'bin holds the frame's own tone' per feature cell.

    cells[i, j] covers feature values around ((i+0.5)/resolution,
    (j+0.5)/resolution) with i indexing the peak-deviation axis and j the
    half-symbol axis. The array is read-only so a loaded grid cannot
    drift from its file.
    """

    resolution: int
    cells: np.ndarray
    prior: float
    config: TrainConfig

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError(f"resolution must be >= 1, got {self.resolution}")
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.shape != (self.resolution, self.resolution):
            raise ValueError(
                f"cells shape {cells.shape} does not match resolution {self.resolution}"
            )
        if np.any(~np.isfinite(cells)) or np.any((cells < 0) | (cells > 1)):
            raise ValueError("cells must be finite probabilities in [0, 1]")
        if not 0.0 < self.prior < 1.0:
            raise ValueError(f"prior must be in (0, 1), got {self.prior}")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)


@dataclass
class ClassifierState:
    """Carries the previous window's per-bin posteriors across a frame."""

    prev_posteriors: np.ndarray | None = None

    def __post_init__(self):
        if self.prev_posteriors is not None:
            self.prev_posteriors = np.asarray(self.prev_posteriors, dtype=np.float64)
            if self.prev_posteriors.ndim != 1:
                raise ValueError("prev_posteriors must be 1-D")


@dataclass
class TrainingSamples:
    """Feature pairs harvested from baseline-misclassified training windows."""

    true_features: np.ndarray
    interference_features: np.ndarray
    n_generated: int
    n_kept: int

    def __post_init__(self):
        self.true_features = np.atleast_2d(np.asarray(self.true_features, dtype=np.float64))
        self.interference_features = np.atleast_2d(
            np.asarray(self.interference_features, dtype=np.float64)
        )


def pmd(spectrum: DechirpedSpectrum, expected_peak: float) -> np.ndarray:
    """Peak magnitude deviation: |magnitude - expected| / expected, capped at 1.

    A bin holding the frame's own tone scores near 0; bins holding much
    stronger or much weaker colliding energy score close to 1.
    """
    if not expected_peak > 0:
        raise ValueError(f"expected_peak must be positive, got {expected_peak}")
    dev = np.abs(spectrum.magnitudes - expected_peak) / expected_peak
    return np.minimum(dev, 1.0)


@lru_cache(maxsize=16)
def _half_mask(n: int) -> np.ndarray:
    mask = np.ones(n)
    mask[n // 2 :] = -1.0
    mask.setflags(write=False)
    return mask


# Bins this far below the window's strongest magnitude carry no usable
# waveform; their half-symbol ratio would be a quotient of rounding noise.
# The margin is wide enough to also cover float32 quantisation residue
# from IQ files (about 1e-8 of the peak after FFT gain), while any real
# signal component sits orders of magnitude above it.
DEAD_BIN_RELATIVE_FLOOR = 1e-6


def hpd(window: SymbolWindow) -> np.ndarray:
    """Half-symbol power deviation per bin, in [0, 1].

    The dechirped window is re-transformed with its second half negated,
    which swaps the sign of every odd-offset component; a tone occupying
    the whole window cancels out of its own bin, while a tone occupying
    only part of it (a colliding symbol crossing its boundary) leaves
    residue. The feature is min(|X_k|, |Y_k|) / |X_k| with Y the masked
    transform. Dead bins — |X_k| zero or vanishing next to the window's
    peak — take the maximum penalty of 1: a ratio of two rounding-noise
    magnitudes says nothing about waveform completeness.
    """
    n = window.n
    if n % 2 != 0:
        raise ValueError(f"window length must be even, got {n}")
    masked_bins = np.fft.fft(window.time_samples * _half_mask(n))
    x_mag = window.spectrum.magnitudes
    z = np.minimum(x_mag, np.abs(masked_bins))
    live = x_mag > DEAD_BIN_RELATIVE_FLOOR * np.max(x_mag)
    return np.divide(z, x_mag, out=np.ones_like(z), where=live)


@lru_cache(maxsize=8)
def _fold_basis(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    nn = np.arange(n // 2)[None, :]
    return np.exp(-2j * np.pi * k * nn / n)


def hpd_identity_error(window: SymbolWindow) -> float:
    """Cross-check the masked transform against a half-length folded sum.

    Splitting the window as a_n = x_n (first half) and b_n = x_{n+N/2},
    the masked DFT bin k equals sum_n (a_n - (-1)^k b_n) e^{-j2pi k n/N}.
    Returns the largest absolute difference between the two routes; it
    should sit at numerical noise for any window.
    """
    n = window.n
    if n % 2 != 0:
        raise ValueError(f"window length must be even, got {n}")
    a = window.time_samples[: n // 2]
    b = window.time_samples[n // 2 :]
    basis = _fold_basis(n)
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    folded = basis @ a - sign * (basis @ b)
    masked = np.fft.fft(window.time_samples * _half_mask(n))
    return float(np.max(np.abs(masked - folded)))


def _cell_index(values: np.ndarray, resolution: int) -> np.ndarray:
    """Nearest-cell index for feature values in [0, 1]."""
    idx = (np.asarray(values) * resolution).astype(np.int64)
    return np.minimum(idx, resolution - 1)


def posterior_lookup(grid: PosteriorGrid, p, h):
    """Posterior for feature pair(s) (p, h) via nearest grid cell.

    Accepts scalars or equal-shaped arrays; values must lie in [0, 1].
    """
    p_arr = np.asarray(p, dtype=np.float64)
    h_arr = np.asarray(h, dtype=np.float64)
    if p_arr.shape != h_arr.shape:
        raise ValueError("p and h must have the same shape")
    for name, arr in (("p", p_arr), ("h", h_arr)):
        # a single range test also rejects NaN and both infinities
        if not ((arr >= 0.0) & (arr <= 1.0)).all():
            raise ValueError(f"feature {name} must lie in [0, 1]")
    out = grid.cells[_cell_index(p_arr, grid.resolution), _cell_index(h_arr, grid.resolution)]
    if np.isscalar(p) or (isinstance(p, np.ndarray) and p.ndim == 0):
        return float(out)
    return out


def _score_bins(
    features: FeatureField, grid: PosteriorGrid, state: ClassifierState | None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin posteriors and history-damped scores, without the argmax.

    Skips feature validation: a FeatureField guarantees its arrays are
    finite and in [0, 1], so the lookup only needs the index arithmetic.
    """
    q = grid.cells[
        _cell_index(features.p, grid.resolution), _cell_index(features.h, grid.resolution)
    ]
    if state is not None and state.prev_posteriors is not None:
        if state.prev_posteriors.shape != q.shape:
            raise ValueError(
                f"state carries {state.prev_posteriors.shape} posteriors, "
                f"window has {q.shape}"
            )
        scores = q * (1.0 - state.prev_posteriors)
    else:
        scores = q
    return q, scores


def classify(
    features: FeatureField, grid: PosteriorGrid, state: ClassifierState | None = None
) -> tuple[int, float, ClassifierState]:
    """Pick the bin most likely to hold the frame's own tone.

    Each bin's score is its posterior q_k, damped by how occupied the bin
    looked in the previous window: q_k * (1 - prev_q_k). The first window
    of a frame has no history and uses q_k alone. Ties resolve to the
    lowest bin. Returns (bin, score, state for the next window).
    """
    q, scores = _score_bins(features, grid, state)
    best = int(np.argmax(scores))
    return best, float(scores[best]), ClassifierState(q)


def detect_symbol(
    window: SymbolWindow,
    expected_peak: float,
    grid: PosteriorGrid,
    state: ClassifierState | None = None,
) -> tuple[int, float, ClassifierState]:
    """Full collision-aware detection for one dechirped window."""
    features = FeatureField(pmd(window.spectrum, expected_peak), hpd(window))
    return classify(features, grid, state)


def collect_training_features(
    cfg: TrainConfig, rng: np.random.Generator | None = None
) -> TrainingSamples:
    """Generate windows and harvest features where the baseline fails.

    Every window where magnitude-argmax already finds the true bin is
    dropped: the classifier only needs to tell tones apart in the
    ambiguous cases. For each kept window the true bin contributes one
    (p, h) pair to the wanted-tone set and the
    `interference_samples_per_symbol` non-true bins with the lowest p
    contribute to the interference set (low p is what makes an interfering
    bin dangerous).

    The expected peak for the p feature is each window's own largest
    magnitude: the synthetic windows carry no preamble, and the window
    maximum is what a preamble average would report after locking onto
    the strongest frame present. Normalising by the nominal tone height
    instead folds over-driven true bins (an interferer sitting on the
    true bin) onto the capped p == 1 edge, which teaches the grid that
    the edge is tone-like and makes weak noise bins win there.

    Each window draws from its own spawned substream, so results do not
    depend on how the loop is batched.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_take = cfg.interference_samples_per_symbol
    true_rows = []
    intf_rows = []
    for stream in rng.spawn(cfg.n_symbols):
        window, true_bin, _ = gen_training_symbol(cfg, stream)
        if baseline_detect(window.spectrum) == true_bin:
            continue
        expected_peak = float(np.max(window.spectrum.magnitudes))
        p = pmd(window.spectrum, expected_peak)
        h = hpd(window)
        true_rows.append((p[true_bin], h[true_bin]))
        p_others = p.copy()
        p_others[true_bin] = np.inf
        picked = np.argpartition(p_others, n_take)[:n_take]
        intf_rows.extend(zip(p[picked], h[picked]))
    n_kept = len(true_rows)
    true_arr = np.array(true_rows, dtype=np.float64).reshape(n_kept, 2)
    intf_arr = np.array(intf_rows, dtype=np.float64).reshape(len(intf_rows), 2)
    return TrainingSamples(true_arr, intf_arr, cfg.n_symbols, n_kept)


def feature_histogram(
    pairs: np.ndarray, resolution: int, sigma: float, floor: float
) -> np.ndarray:
    """Smoothed, floored, normalised 2-D histogram of (p, h) pairs.

    Counts land in nearest cells, get a Gaussian blur of `sigma` cells
    (reflected at the edges so mass near 0 and 1 stays in range), gain a
    uniform `floor` so no cell is impossible, and are normalised to sum
    to one.
    """
    pairs = np.atleast_2d(np.asarray(pairs, dtype=np.float64))
    if pairs.shape[0] == 0 or pairs.shape[1] != 2:
        raise ValueError(f"pairs must be a non-empty (m, 2) array, got shape {pairs.shape}")
    if np.any(~np.isfinite(pairs)) or np.any((pairs < 0) | (pairs > 1)):
        raise ValueError("feature pairs must lie in [0, 1]")
    i = _cell_index(pairs[:, 0], resolution)
    j = _cell_index(pairs[:, 1], resolution)
    hist = np.bincount(i * resolution + j, minlength=resolution * resolution)
    hist = hist.reshape(resolution, resolution).astype(np.float64)
    if sigma > 0:
        hist = gaussian_filter(hist, sigma=sigma, mode="reflect")
    hist += floor
    return hist / hist.sum()


def grid_from_samples(samples: TrainingSamples, cfg: TrainConfig) -> PosteriorGrid:
    """Turn harvested feature samples into a Bayes posterior grid.

    The class prior is the wanted-tone share of all samples; with k
    interference picks per kept window it is exactly 1/(k+1). Cellwise
    Bayes then gives posterior = like_true * prior / (like_true * prior +
    like_intf * (1 - prior)). Cells no sample reached hold only the
    histogram floor in both classes; since each floor is scaled by its
    class's sample count and the prior scales the other way, such cells
    settle near even odds (0.5) rather than at either extreme.
    """
    if samples.n_kept < MIN_KEPT_WINDOWS:
        raise TrainingError(
            f"only {samples.n_kept} of {samples.n_generated} windows were "
            f"baseline-misclassified; need at least {MIN_KEPT_WINDOWS}. "
            "Increase n_symbols or make the scenario harder."
        )
    n_true = samples.true_features.shape[0]
    n_intf = samples.interference_features.shape[0]
    prior = n_true / (n_true + n_intf)
    res = cfg.grid_resolution
    like_true = feature_histogram(samples.true_features, res, cfg.smooth_sigma, cfg.smooth_floor)
    like_intf = feature_histogram(
        samples.interference_features, res, cfg.smooth_sigma, cfg.smooth_floor
    )
    evidence = like_true * prior + like_intf * (1.0 - prior)
    cells = like_true * prior / evidence
    return PosteriorGrid(res, cells, prior, cfg)


def train(cfg: TrainConfig, rng: np.random.Generator | None = None) -> PosteriorGrid:
    """Run the full training recipe: generate, filter, histogram, Bayes."""
    return grid_from_samples(collect_training_features(cfg, rng), cfg)


# --- grid file round-trip ---------------------------------------------------

_GRID_MAGIC = "CORA-GRID v1"


def _f17(x: float) -> str:
    return format(float(x), ".17g")


def _config_tokens(cfg: TrainConfig) -> str:
    parts = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = ",".join(_f17(v) for v in value)
        elif isinstance(value, float):
            text = _f17(value)
        else:
            text = str(value)
        parts.append(f"{f.name}={text}")
    return " ".join(parts)


def _parse_config_tokens(line: str, lineno: int) -> TrainConfig:
    known = {f.name: f for f in fields(TrainConfig)}
    kwargs = {}
    for token in line.split():
        key, sep, raw = token.partition("=")
        if not sep or key not in known:
            raise GridFormatError(f"line {lineno}: unknown config token {token!r}")
        try:
            if key == "power_range_db":
                lo, hi = raw.split(",")
                kwargs[key] = (float(lo), float(hi))
            elif key in ("n_bins", "n_symbols", "max_interferers",
                         "interference_samples_per_symbol", "grid_resolution", "seed"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError as exc:
            raise GridFormatError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise GridFormatError(f"line {lineno}: invalid training config: {exc}") from exc


def save_grid(grid: PosteriorGrid, destination: str | Path) -> None:
    """Write a grid as versioned text, byte-stable for identical grids."""
    lines = [
        _GRID_MAGIC,
        f"resolution={grid.resolution} prior={_f17(grid.prior)}",
        _config_tokens(grid.config),
    ]
    lines.extend(" ".join(_f17(v) for v in row) for row in grid.cells)
    with open(destination, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_grid(source: str | Path) -> PosteriorGrid:
    """Parse a grid file, rejecting wrong versions and malformed content."""
    text = Path(source).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 3:
        raise GridFormatError(f"{source}: expected at least 3 header lines, found {len(lines)}")
    if lines[0] != _GRID_MAGIC:
        raise GridFormatError(f"line 1: expected {_GRID_MAGIC!r}, found {lines[0]!r}")

    header = lines[1].split()
    if len(header) != 2 or not header[0].startswith("resolution=") or not header[1].startswith("prior="):
        raise GridFormatError(f"line 2: expected 'resolution=<int> prior=<float>', found {lines[1]!r}")
    try:
        resolution = int(header[0][len("resolution="):])
        prior = float(header[1][len("prior="):])
    except ValueError as exc:
        raise GridFormatError(f"line 2: unparseable header values: {lines[1]!r}") from exc

    cfg = _parse_config_tokens(lines[2], 3)
    rows = lines[3:]
    if len(rows) != resolution:
        raise GridFormatError(
            f"expected {resolution} grid rows, found {len(rows)} (file truncated or padded)"
        )
    cells = np.empty((resolution, resolution), dtype=np.float64)
    for r, row in enumerate(rows):
        parts = row.split(" ")
        if len(parts) != resolution:
            raise GridFormatError(f"line {4 + r}: expected {resolution} values, found {len(parts)}")
        try:
            cells[r] = [float(v) for v in parts]
        except ValueError as exc:
            raise GridFormatError(f"line {4 + r}: unparseable cell value") from exc
    try:
        return PosteriorGrid(resolution, cells, prior, cfg)
    except ValueError as exc:
        raise GridFormatError(f"{source}: {exc}") from exc
