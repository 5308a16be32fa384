# Mask-driven spatial filtering: oracle masks, PSD statistics, beamformer weights.
from .masks import TFMask, ideal_binary_mask, ideal_ratio_mask  # noqa: F401
from .psd import (  # noqa: F401
    PowerWeights, PsdMatrix, diag_load, estimate_psd, estimate_target_power, stable_solve,
    stacked_frames, steering_vector, weighted_covariance,
)
from .weights import (  # noqa: F401
    VARIANTS, BeamformerConfig, BeamformerWeights, apply_beamformer, compute_weights,
)
