# Criterion / wrapper loss framework.
from .criteria import (  # noqa: F401
    CAP_DB, EPS, CISDR, SISNR, SNR, Criterion, CriterionSpec, MaskMSE, SpectrumMSE,
    ci_sdr, mse_mask, mse_spectrum, si_snr, snr,
)
from .wrappers import (  # noqa: F401
    LossReport, MixingMatrix, Permutation, build_wrapper, fixed_wrap, mixit_wrap, pit_wrap,
)
from .mtl import LossBatch, MtlEntry, MtlResult, MtlSpec, mtl_combine  # noqa: F401
