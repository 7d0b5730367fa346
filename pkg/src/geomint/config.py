from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances shared by the implicit steppers and rank decisions."""

    newton_tol: float = 1e-12
    max_iter: int = 50
    rank_tol: float = 1e-9
    fd_step: float = 1e-6
    # witness points used for rank decisions in the constraint algorithm
    n_witness: int = 32
    seed: int = 0
