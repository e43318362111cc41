# src/stainreg/register/results.py
from dataclasses import dataclass, field

from stainreg.transform.geometry import AffineTransform, CompositeTransform, RigidParams


@dataclass(frozen=True)
class PrealignResult:
    """Best rigid start plus the score of every sampled angle (radians, same order)."""

    rigid: RigidParams
    angles: tuple[float, ...]
    scores: tuple[float, ...]

    @property
    def affine(self) -> AffineTransform:
        return self.rigid.to_affine()


@dataclass
class StageResult:
    """Outcome of one optimization stage across its pyramid levels."""

    transform: CompositeTransform
    traces: dict[str, list[float]] = field(default_factory=dict)
    final_value: float = 0.0
    overlap: float = 1.0
    converged: bool = False
    max_iter_hit: bool = False
    damped: bool = False


@dataclass
class RegFlags:
    converged: bool = False
    max_iter_hit: bool = False
    empty_mask: bool = False
    low_overlap: bool = False
    damped: bool = False
    rbf_fallback: bool = False
    failed: bool = False


@dataclass
class RegResult:
    """Everything one pair registration produced; `transform` maps fixed to moving full-resolution pixels."""

    transform: CompositeTransform = field(default_factory=CompositeTransform)
    prealign_transform: CompositeTransform | None = None
    objective_trace: dict[str, list[float]] = field(default_factory=dict)
    prealign_scores: list[float] = field(default_factory=list)
    flags: RegFlags = field(default_factory=RegFlags)
    timings: dict[str, float] = field(default_factory=dict)
    final_objective: float | None = None
    alpha: float | None = None
    error: str | None = None
