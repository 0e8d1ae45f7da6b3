"""LoRa chirp-spread-spectrum laboratory with a collision-resistant symbol detector."""

from cora.phy import (
    PhyParams,
    ComplexSignal,
    DechirpedSpectrum,
    SymbolWindow,
    base_upchirp,
    modulate_symbol,
    downchirp,
    build_frame,
    dechirp,
    baseline_detect,
    estimate_expected_peak,
)
from cora.channel import (
    Interferer,
    CollisionScenario,
    FadingProfile,
    TrainConfig,
    add_awgn,
    apply_freq_offset,
    compose_collision,
    apply_fading,
    clipped_tone,
    etu_like_profile,
    gen_training_symbol,
)
from cora.detector import (
    FeatureField,
    PosteriorGrid,
    ClassifierState,
    TrainingError,
    GridFormatError,
    pmd,
    hpd,
    hpd_identity_error,
    posterior_lookup,
    classify,
    detect_symbol,
    collect_training_features,
    feature_histogram,
    grid_from_samples,
    train,
    save_grid,
    load_grid,
)
from cora.harness import (
    CSV_COLUMNS,
    ScenarioSpec,
    ExperimentConfig,
    MetricsRecord,
    run_experiment,
    simulate_frame,
    bench_stages,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "PhyParams",
    "ComplexSignal",
    "DechirpedSpectrum",
    "SymbolWindow",
    "base_upchirp",
    "modulate_symbol",
    "downchirp",
    "build_frame",
    "dechirp",
    "baseline_detect",
    "estimate_expected_peak",
    "Interferer",
    "CollisionScenario",
    "FadingProfile",
    "TrainConfig",
    "add_awgn",
    "apply_freq_offset",
    "compose_collision",
    "apply_fading",
    "clipped_tone",
    "etu_like_profile",
    "gen_training_symbol",
    "FeatureField",
    "PosteriorGrid",
    "ClassifierState",
    "TrainingError",
    "GridFormatError",
    "pmd",
    "hpd",
    "hpd_identity_error",
    "posterior_lookup",
    "classify",
    "detect_symbol",
    "collect_training_features",
    "feature_histogram",
    "grid_from_samples",
    "train",
    "save_grid",
    "load_grid",
    "ScenarioSpec",
    "ExperimentConfig",
    "MetricsRecord",
    "run_experiment",
    "simulate_frame",
    "bench_stages",
    "write_csv",
    "CSV_COLUMNS",
]
