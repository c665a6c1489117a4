# Copyright 2026 The gta-attention Authors
# SPDX-License-Identifier: Apache-2.0
"""Temporal attention blocks for video classification.

Thin python surface over the C++ core: attention primitives, the block-plan
model, synthetic task generators, cost accounting, and checkpoint I/O.
"""

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    FormatError,
    IntegrityError,
    IoError,
    Model,
    NumericError,
    attention,
    ccmh_mix,
    evaluate,
    flops_csv,
    generate_task,
    matmul,
    patchify,
    reference_stack_csv,
    softmax,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "Error",
    "FormatError",
    "IntegrityError",
    "IoError",
    "Model",
    "NumericError",
    "attention",
    "ccmh_mix",
    "evaluate",
    "flops_csv",
    "generate_task",
    "matmul",
    "patchify",
    "reference_stack_csv",
    "softmax",
]

__version__ = "0.1.0"
