"""Pipeline configuration with JSON round-trip and content hashing.

Defaults follow the method where it pins values (30 rays per face, 120
degree cone, strokes of 48 mm and 8 mm for the 2- and 3-finger actuators);
everything else is an exposed knob.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields


@dataclass
class SmoothingConfig:
    iterations: int = 5
    strength: float = 0.5


@dataclass
class SdfConfig:
    rays_per_face: int = 30
    cone_angle_deg: float = 120.0


@dataclass
class ClusteringConfig:
    cluster_count: int | None = None        # None: pick by BIC over candidates
    cluster_count_candidates: tuple[int, ...] = (2, 3, 4, 5)
    cluster_count_overrides: dict[str, int] = field(default_factory=dict)
    smoothness: float = 3.0
    max_iters: int = 200
    restarts: int = 5
    min_segment_fraction: float = 0.01


@dataclass
class FittingConfig:
    sample_points: int = 5000
    ransac_tol_fraction: float = 0.02       # of segment bbox diagonal; absorbs
    ransac_tol_min_mm: float = 0.05         # the slight barreling smoothing adds
    ransac_tol_max_mm: float = 2.0
    ransac_max_iters: int = 500
    shell_tol_fraction: float = 0.01        # of segment bbox diagonal
    coverage_threshold: float = 0.3
    occupancy_grid: int = 16


@dataclass
class GraspConfig:
    angle_tol_deg: float = 10.0
    min_facet_area_mm2: float = 25.0
    max_pair_width_mm: float = 200.0
    n_rotations: int = 12
    depth_samples: int = 3
    n_axial: int = 3
    finger_thickness_mm: float = 8.0
    finger_width_mm: float = 8.0
    palm_size_mm: tuple[float, float, float] = (60.0, 60.0, 20.0)


@dataclass
class AssemblyConfig:
    path_samples: int = 5
    finger_length_ladder_mm: tuple[float, ...] = (
        10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0)


@dataclass
class OptimizerConfig:
    stroke_two_finger_mm: float = 48.0
    stroke_three_finger_mm: float = 8.0
    width_samples: int = 8
    length_samples: int = 4
    width_margin_mm: float = 0.1


@dataclass
class PipelineConfig:
    seed: int = 0
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    sdf: SdfConfig = field(default_factory=SdfConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    fitting: FittingConfig = field(default_factory=FittingConfig)
    grasping: GraspConfig = field(default_factory=GraspConfig)
    assembly: AssemblyConfig = field(default_factory=AssemblyConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if not 0 < self.sdf.cone_angle_deg < 180:
            raise ValueError("cone_angle_deg must be in (0, 180)")
        if self.sdf.rays_per_face < 1:
            raise ValueError("rays_per_face must be >= 1")
        if self.clustering.smoothness < 0:
            raise ValueError("smoothness must be >= 0")
        if len(self.assembly.finger_length_ladder_mm) < 1:
            raise ValueError("finger length ladder must not be empty")
        if self.optimizer.stroke_two_finger_mm <= 0 or self.optimizer.stroke_three_finger_mm <= 0:
            raise ValueError("strokes must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def sha256(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @property
    def strokes(self) -> dict[int, float]:
        return {2: self.optimizer.stroke_two_finger_mm,
                3: self.optimizer.stroke_three_finger_mm}

    def grasp_depths_mm(self) -> list[float]:
        """Fingertip overtravel samples, kept below the shortest ladder length
        so every candidate stays in contact at every finger length."""
        shortest = min(self.assembly.finger_length_ladder_mm)
        n = max(1, self.grasping.depth_samples)
        return [0.9 * shortest * (k + 0.5) / n for k in range(n)]


def _update_dataclass(obj, data: dict, where: str):
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key '{where}{key}'")
        current = getattr(obj, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                raise ValueError(f"config key '{where}{key}' must be an object")
            _update_dataclass(current, value, f"{where}{key}.")
        elif isinstance(current, tuple) and isinstance(value, list):
            setattr(obj, key, tuple(value))
        else:
            setattr(obj, key, value)


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    _update_dataclass(cfg, data or {}, "")
    cfg.__post_init__()
    return cfg


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path) as fh:
        return config_from_dict(json.load(fh))
