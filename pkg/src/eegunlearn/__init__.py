"""User-wise perturbations for hiding user identity in EEG training data.

The package generates four kinds of user-wise additive perturbations
(RAND, SN, EMIN, EMAX), applies them to multichannel EEG training sets,
and provides the classifiers, robustness tooling, classical feature
pipelines, and metrics needed to verify that user identification
collapses to chance while the primary BCI task stays learnable.
"""

from eegunlearn.dataio import (
    LabeledDataset,
    SplitSpec,
    SynthConfig,
    REFERENCE_SYNTH,
    load_bundle,
    save_bundle,
    split_by_session,
    synth_generate,
    user_std,
    bandpass_downsample,
)
from eegunlearn.metrics import ScoreReport, bca, ncc, rca
from eegunlearn.perturb import (
    NoiseOptConfig,
    PerturbationSet,
    SnCode,
    AMPLITUDE_PRESETS,
    apply_perturbation,
    gen_emax,
    gen_emin,
    gen_rand,
    gen_sn,
    load_perturbation,
    save_perturbation,
    sn_waveform,
    tanh_reparam,
    trans_shuffle,
)
from eegunlearn.models import (
    ArchitectureSpec,
    TrainConfig,
    TrainedClassifier,
    build,
    ce_loss,
    ce_loss_grad,
    load_classifier,
    predict,
    save_classifier,
    train,
)
from eegunlearn.robustness import (
    Montage,
    PgdConfig,
    adversarial_train,
    load_montage,
    save_montage,
    pgd_attack,
    surface_laplacian,
    temporal_recombination,
    temporal_shift,
)
from eegunlearn.classic import (
    ClassicModel,
    FeatureSpec,
    GbtConfig,
    classic_uid_eval,
    extract,
    gbt_fit,
    gbt_predict,
    lda_fit,
    lda_predict,
)
from eegunlearn.experiment import (
    ExperimentConfig,
    ExperimentReport,
    report_csv,
    report_plots,
    run_experiment,
)

__all__ = [
    "LabeledDataset", "SplitSpec", "SynthConfig", "REFERENCE_SYNTH",
    "load_bundle", "save_bundle", "split_by_session", "synth_generate",
    "user_std", "bandpass_downsample",
    "ScoreReport", "bca", "ncc", "rca",
    "NoiseOptConfig", "PerturbationSet", "SnCode", "AMPLITUDE_PRESETS",
    "apply_perturbation", "gen_emax", "gen_emin", "gen_rand", "gen_sn",
    "load_perturbation", "save_perturbation", "sn_waveform",
    "tanh_reparam", "trans_shuffle",
    "ArchitectureSpec", "TrainConfig", "TrainedClassifier", "build",
    "ce_loss", "ce_loss_grad", "load_classifier", "predict",
    "save_classifier", "train",
    "Montage", "PgdConfig", "adversarial_train", "load_montage",
    "save_montage", "pgd_attack", "surface_laplacian", "temporal_recombination",
    "temporal_shift",
    "ClassicModel", "FeatureSpec", "GbtConfig", "classic_uid_eval",
    "extract", "gbt_fit", "gbt_predict", "lda_fit", "lda_predict",
    "ExperimentConfig", "ExperimentReport", "report_csv", "report_plots",
    "run_experiment",
]

__version__ = "0.1.0"
