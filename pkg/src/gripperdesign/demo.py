"""Synthetic assembly tasks for demos and end-to-end testing.

``write_demo_task`` materializes a 5-component desk-scale assembly (base
plate, block, pillar, sleeve that slides over the pillar, and a cap) with
meshes, a task file, and a matching config. The sleeve operation forces a
real finger-length constraint: the pillar keeps protruding above the sleeve
while it is lowered, so short fingers put the palm onto the pillar tip.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import save_ply
from .meshgen import make_box, make_cylinder, make_tub, make_tube


def _pose(x=0.0, y=0.0, z=0.0) -> list[float]:
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return [float(v) for v in t.reshape(-1)]


def write_demo_task(out_dir, hover_mm: float = 80.0) -> tuple[Path, Path]:
    """Write meshes + task.json + config.json; returns (task_path, config_path)."""
    out = Path(out_dir)
    meshes = out / "meshes"
    meshes.mkdir(parents=True, exist_ok=True)

    base_top = 8.0
    parts = {
        "base": make_box((120, 120, 8), center=(0, 0, 4), resolution=6),
        "block": make_box((20, 30, 40), resolution=4),
        "pillar": make_cylinder(9, 45, n_sides=32, n_height=4),
        "sleeve": make_tube(14, 10.5, 25, n_sides=32),
        "cap": make_box((24, 24, 10), resolution=3),
    }
    for name, mesh in parts.items():
        save_ply(mesh, meshes / f"{name}.ply")

    def op(active, passive, x, y, z):
        return {"active": active, "passive": passive,
                "T_before": _pose(x, y, z + hover_mm),
                "T_after": _pose(x, y, z)}

    task = {
        "components": [
            {"id": name, "name": name, "mesh_path": f"meshes/{name}.ply"}
            for name in parts
        ],
        "operations": [
            op("block", ["base"], -30, -30, base_top + 20),   # box gen is centered
            op("pillar", ["base", "block"], 30, -30, base_top),
            op("sleeve", ["base", "block", "pillar"], 30, -30, base_top),
            op("cap", ["base", "block", "pillar", "sleeve"], -30, -30,
               base_top + 40 + 5),
        ],
        "exclusions": [],
    }
    task_path = out / "task.json"
    task_path.write_text(json.dumps(task, indent=2) + "\n")

    config = {
        "seed": 0,
        "clustering": {
            # plain prisms are one part each; thickness clustering would only
            # shave them into their flat faces
            "cluster_count_overrides": {"base": 1, "block": 1, "cap": 1},
        },
        "grasping": {"n_rotations": 8, "depth_samples": 2},
        "assembly": {"path_samples": 5},
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n")
    return task_path, config_path


def write_enclosed_task(out_dir, hover_mm: float = 80.0) -> Path:
    """A task whose last component is lowered into a fully closed housing.

    Every grasp must cross the housing lid along the path, so the pipeline
    reports the component as ungraspable; used to exercise the failure path.
    """
    out = Path(out_dir)
    meshes = out / "meshes"
    meshes.mkdir(parents=True, exist_ok=True)
    housing = make_tub(18, 36, wall_thickness=6, floor_thickness=6,
                       closed_top=True, resolution=2)
    puck = make_cylinder(8, 12, n_sides=24, n_height=2)
    save_ply(housing, meshes / "housing.ply")
    save_ply(puck, meshes / "puck.ply")
    task = {
        "components": [
            {"id": "housing", "name": "housing", "mesh_path": "meshes/housing.ply"},
            {"id": "puck", "name": "puck", "mesh_path": "meshes/puck.ply"},
        ],
        "operations": [
            {"active": "puck", "passive": ["housing"],
             "T_before": _pose(0, 0, hover_mm), "T_after": _pose(0, 0, 6)},
        ],
        "exclusions": [],
    }
    task_path = out / "task.json"
    task_path.write_text(json.dumps(task, indent=2) + "\n")
    (out / "config.json").write_text(json.dumps(
        {"clustering": {"cluster_count_overrides": {"housing": 1, "puck": 1}}},
        indent=2) + "\n")
    return task_path
