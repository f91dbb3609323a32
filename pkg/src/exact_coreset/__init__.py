"""Accurate (zero-loss) coresets via outer-power lifting and Carathéodory selection."""

from .caratheodory import (
    CoresetSelection,
    WeightedPointSet,
    accurate_coreset,
    caratheodory_reduce,
    fast_caratheodory,
)
from .errors import (
    ArgumentError,
    CoresetError,
    DeficientRankError,
    InputError,
    NoNullSpaceError,
    NumericalFailure,
    RecoveryError,
    SizeError,
)
from .kernelization import (
    KernelMatrix,
    SignTensorDiagonal,
    build_regression_kernel,
    lp_sign_tensor,
    outer_power_vec,
    ridge_sign_matrix,
)
from .lvm import (
    LatentParameters,
    MomentModel,
    WhitenedTensorKernel,
    WhiteningMatrix,
    build_lvm_kernel,
    lvm_coreset,
    recover_parameters,
    second_moment,
    tensor_contract,
    tensor_power_decompose,
    whitening_matrix,
)
from .numerics import (
    SpectralSummary,
    effective_rank,
    null_space_vector,
    statistical_dimension,
    thin_svd,
)
from .regression import (
    EquivalenceReport,
    RegressionCoreset,
    RegressionProblem,
    build_coreset,
    coreset_reg_loss,
    reg_loss,
    solve_ridge,
    sweep_lambda,
    verify_equivalence,
)

__version__ = "0.1.0"
