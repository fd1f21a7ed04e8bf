"""phasekit: phase-aware training losses and speech-quality metrics."""

from .audio_io import (
    PairedPaths,
    PairingResult,
    SkippedPair,
    UtteranceTriple,
    Waveform,
    load_triple,
    pair_directories,
    pair_paths,
    read_wav,
    write_wav,
)
from .errors import (
    ConfigError,
    FieldTooSmallError,
    FormatError,
    InputError,
    LengthMismatchError,
    PhasekitError,
    UnknownConfigError,
    UnsupportedConfigError,
    UnsupportedFormatError,
)
from .losses import (
    WEIGHT_PRESETS,
    LossReport,
    LossWeights,
    l1_loss,
    mrstft_loss,
    phase_continuity_loss,
    phase_loss,
    stft_magnitude_losses,
    total_loss,
)
from .metrics import (
    MetricReport,
    VoicedMask,
    compute_metrics,
    fwsnrseg,
    mel_filterbank,
    phase_metrics,
    phase_metrics_from_spectra,
    sdr,
    sdri,
    snrseg,
    voiced_mask,
)
from .phase import (
    EPS_MAGNITUDE,
    DerivativeField,
    KernelStack,
    PhaseField,
    continuity_kernel,
    derivative_fields,
    phase_field,
    principal_value,
    unwrap_phase,
)
from .spectral import (
    ComplexSpectrogram,
    MultiResConfig,
    StftConfig,
    default_multires,
    istft,
    stft,
    stft_adjoint,
)

__version__ = "0.1.0"
