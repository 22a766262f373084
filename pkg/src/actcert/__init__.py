"""Checking, synthesis, refutation and simulation of almost-certain-termination certificates."""

from actcert.model import (
    CheckReport,
    Distribution,
    MonotoneStepFn,
    NablaWitness,
    PdWitness,
    RefutationWitness,
    TransitionSystem,
    Variant,
    enumerate_window,
    expected_value,
)

__all__ = [
    "CheckReport",
    "Distribution",
    "MonotoneStepFn",
    "NablaWitness",
    "PdWitness",
    "RefutationWitness",
    "TransitionSystem",
    "Variant",
    "enumerate_window",
    "expected_value",
]
