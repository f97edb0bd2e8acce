"""Learning-based maximum-likelihood symbol detection for one-bit MIMO uplinks.

The package simulates an uplink where every receive chain quantizes to a
single bit, and compares detectors that learn their likelihood tables from
pilots (naive, bias-repaired, dither-inverted) against the CSI-based ML
and zero-forcing baselines.
"""

from .adaptation import (
    FramePlan,
    SessionTrace,
    UpdateState,
    crc16,
    crc16_append,
    crc16_check,
    post_update_biased,
    post_update_dithered,
    run_adaptive_session,
)
from .detectors import DetectionResult, ml_detect, ml_detect_batch, zf_detect
from .errors import ConfigError, FitError
from .harness import (
    ExperimentResult,
    SimConfig,
    run_adaptive,
    run_offline_snr_training,
    run_ser_sweep,
    run_zero_count_sweep,
)
from .likelihood import (
    LikelihoodTable,
    PilotObservations,
    apply_bias,
    csi_likelihood_table,
    dither_invert,
    learn_likelihood_table,
    log_likelihood,
    std_normal_cdf,
    std_normal_quantile,
)
from .rng import substream
from .signal_model import (
    CandidateSet,
    ChannelRealization,
    Constellation,
    LinkParams,
    add_dither,
    build_constellation,
    draw_channel,
    enumerate_candidates,
    quantize,
    to_real_composite,
    transmit,
)
from .snr_estimator import (
    OfflineConfig,
    OfflineDataset,
    PolyModel,
    count_zero_prob,
    estimate_noise_variance,
    fit_polynomial,
    generate_offline_dataset,
)

__version__ = "0.1.0"
