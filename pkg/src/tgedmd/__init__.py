"""Tensor-train estimation of Koopman generators from SDE trajectory data.

The package builds an exact tensor-train representation of the data tensor
of product-basis evaluations, reduces it by a global SVD sweep, and
assembles the whitened generator matrix from per-sample structured trains
via sparse tensor-network contractions.  A dense full-basis reference
pipeline, SDE simulators, importance re-weighting, reduced-variable
projection, and spectral post-processing round out the toolbox.
"""

from .algorithm import (
    GlobalSvdResult,
    ReducedGenerator,
    RunResult,
    TruncationPolicy,
    global_svd,
    reduced_matrix,
    tgedmd_run,
    tt_cost_estimate,
)
from .basis import (
    ChainRulePack,
    Constant,
    CoordinateMap,
    Gaussian,
    Monomial,
    PeriodicGaussian,
    ProductBasis,
    chain_rule_pack,
    eval_mode,
    eval_mode_d1,
    eval_mode_d2,
    gaussian_mode,
    identity_map,
    monomial_mode,
    projection_map,
)
from .gedmd import (
    DenseReducedModel,
    amuse,
    dense_cost_estimate,
    empirical_A_nonrev,
    empirical_A_rev,
    empirical_C,
    generator_apply_matrix,
    generator_on_product,
    gradient_sigma_matrix,
    product_basis_matrix,
)
from .sde import (
    GmmSampler,
    SdeModel,
    Trajectory,
    euler_maruyama,
    euler_maruyama_batch,
    gmm_density,
    gmm_sample,
    importance_weights,
    lemon_slice_4d,
    lemon_slice_gmm,
    lemon_slice_model,
    load_trajectory,
    ou_model,
    save_trajectory,
)
from .spectral import (
    ClusterAssignment,
    SpectrumReport,
    cluster,
    rescale_timescales,
    spectrum,
)
from .structured import StructuredSumSpec, brute_force_structured, build_structured_tt
from .trains import (
    DataTensorTT,
    GeneratorTrain,
    data_tensor,
    generator_ingredients,
    l_psi_train,
    nabla_psi_train,
    pack_generator_trains,
    pack_gradient_trains,
    structural_zero_audit,
)
from .tt import (
    OpCounter,
    TensorTrain,
    contract,
    entry,
    left_orthonormalize,
    load_tt,
    rank_one,
    right_orthonormalize_last_core,
    save_tt,
    to_dense,
    tt_sum,
    zero_train,
)

__version__ = "0.1.0"
