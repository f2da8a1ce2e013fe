"""Permutation-invariance laboratory for recurrent sequence models.

The heavy lifting lives in the compiled extension; this package re-exports
the main operations: the exact parity cell, dataset generators, training,
invariance penalties and audits.
"""

from ._core import (  # noqa: F401
    Model,
    SequenceDataset,
    audit_perm_invariance,
    construct_parity_model,
    evaluate_accuracy,
    evaluate_rmse,
    gen_arithmetic,
    gen_parity,
    load_dataset,
    load_model,
    local_perturb,
    min_deepsets_units,
    parity_exhaustive_max_error,
    parity_oracle,
    save_dataset,
    save_model,
    sire_penalty_value,
    sub_penalty_value,
    swap_chain,
    swap_chain_adjacent,
    train,
)

__all__ = [
    "Model",
    "SequenceDataset",
    "audit_perm_invariance",
    "construct_parity_model",
    "evaluate_accuracy",
    "evaluate_rmse",
    "gen_arithmetic",
    "gen_parity",
    "load_dataset",
    "load_model",
    "local_perturb",
    "min_deepsets_units",
    "parity_exhaustive_max_error",
    "parity_oracle",
    "save_dataset",
    "save_model",
    "sire_penalty_value",
    "sub_penalty_value",
    "swap_chain",
    "swap_chain_adjacent",
    "train",
]
