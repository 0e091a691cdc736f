"""Score-distillation deltas (SDS, DDS, PDS, ISM and the UDS family)."""

from .module import (
    DELTA_FUNCTIONS,
    INVERSION_CONDITIONS,
    DeltaTerms,
    DistillerConfig,
    Method,
    Omega,
    PromptPair,
    assemble_unified,
    compute_delta,
    delta_dds,
    delta_ism,
    delta_pds,
    delta_sds,
    delta_uds_edit,
    delta_uds_gen,
    delta_uds_gen_neg,
    pds_coefficients,
    timestep_bounds,
    timestep_weight,
)

__all__ = [
    "DELTA_FUNCTIONS",
    "DeltaTerms",
    "DistillerConfig",
    "INVERSION_CONDITIONS",
    "Method",
    "Omega",
    "PromptPair",
    "assemble_unified",
    "compute_delta",
    "delta_dds",
    "delta_ism",
    "delta_pds",
    "delta_sds",
    "delta_uds_edit",
    "delta_uds_gen",
    "delta_uds_gen_neg",
    "pds_coefficients",
    "timestep_bounds",
    "timestep_weight",
]
