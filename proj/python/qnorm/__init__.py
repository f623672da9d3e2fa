"""Python surface of the BatchNorm gradient-variance laboratory.

The heavy lifting lives in the compiled ``_qnorm`` extension; this package
just re-exports it.
"""

from ._qnorm import (  # noqa: F401
    batchnorm_backward,
    batchnorm_forward,
    compare,
    config_hash,
    effective_weights,
    matmul,
    predict,
    predict_sigma_sq_ternary,
    sample_normal,
    sample_uniform,
    simulate,
    sparsity_feasibility,
    stabilization_factor,
    ternary_threshold,
    ternary_weight_variance,
)
