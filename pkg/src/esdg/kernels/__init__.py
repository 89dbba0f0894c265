"""Compiled right-hand-side kernels (numba)."""

from .rhs import LocalOperator, RHSOperator, assemble_rhs, build_face_tables, merge_counters
from .schedule import FluxSchedule, ScheduleKind, build_schedule, loop_bound, weighted_evaluations
from .volume import LADDER, KernelVariant, VolumeKernel, volume_rhs

__all__ = [
    "LADDER", "FluxSchedule", "KernelVariant", "LocalOperator", "RHSOperator", "ScheduleKind",
    "VolumeKernel", "assemble_rhs", "build_face_tables", "build_schedule", "loop_bound",
    "merge_counters", "volume_rhs", "weighted_evaluations",
]
