"""Clipped-arc-field Lenia engine and numerical verifier."""

from clipflow.clipcore import ClipBounds, clip, clip_high, clip_low, toy_arcfield_step
from clipflow.field import MultiField, ScalarField, random_field, sup_distance
from clipflow.operators import (
    ConstantGrowth,
    DiscreteKernel,
    ExpBumpKernel,
    GaussianBump,
    GoLGrowth,
    GoLKernel,
    Rectifier,
    RingSumKernel,
    TableGrowth,
    TableKernel,
    convolve,
    discretize_kernel,
)
from clipflow.dynamics import EcosystemSystem, LeniaSystem, euler_flow, lenia_step

__version__ = "0.1.0"

__all__ = [
    "ClipBounds",
    "ConstantGrowth",
    "DiscreteKernel",
    "EcosystemSystem",
    "ExpBumpKernel",
    "GaussianBump",
    "GoLGrowth",
    "GoLKernel",
    "LeniaSystem",
    "MultiField",
    "Rectifier",
    "RingSumKernel",
    "ScalarField",
    "TableGrowth",
    "TableKernel",
    "clip",
    "clip_high",
    "clip_low",
    "convolve",
    "discretize_kernel",
    "euler_flow",
    "lenia_step",
    "random_field",
    "sup_distance",
    "toy_arcfield_step",
]
