"""Report serialization: JSON + CSV always, PLY scenes and PNG figures on demand.

The JSON report is the machine-readable artifact (sorted keys, no
timestamps, byte-stable across reruns with the same seed and config); the
CSV is a flat per-segment summary for spreadsheets. Visual exports render
segment colorings and fitted primitives as PLY and a few matplotlib
figures next to them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .geometry import perpendicular  # noqa: E402
from .mesh import TriangleMesh, save_ply  # noqa: E402
from .meshgen import make_box, make_cylinder  # noqa: E402

_PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
    [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
    [210, 245, 60], [250, 190, 190], [0, 128, 128], [170, 110, 40],
], dtype=np.uint8)


def write_report_files(report: dict, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_summary_csv(report, out_dir / "summary.csv")


def write_summary_csv(report: dict, path: Path) -> None:
    """One row per segment: what it is, how it is grasped, which gripper serves it."""
    graspable = {}
    for op in report["operations"]:
        for g in op["graspable_segments"]:
            graspable[(op["active"], g["segment_index"])] = g
    assignment = report["optimization"]["assignment"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "segment", "faces", "primitive",
                         "gripper_type", "width_mm", "excluded", "graspable",
                         "min_finger_length_mm", "max_finger_length_mm",
                         "assigned_param_index"])
        for comp in report["components"]:
            for seg in comp["segments"]:
                prim = seg["primitive"]
                g = graspable.get((comp["id"], seg["index"]))
                writer.writerow([
                    comp["id"], seg["index"], seg["face_count"],
                    prim["kind"] if prim else "",
                    prim["gripper_type"] if prim else "",
                    f"{prim['width_mm']:.6g}" if prim else "",
                    int(seg["excluded"]),
                    int(g is not None),
                    f"{g['min_finger_length_mm']:.6g}" if g else "",
                    ("inf" if g["max_finger_length_mm"] is None
                     else f"{g['max_finger_length_mm']:.6g}") if g else "",
                    assignment.get(comp["id"], ""),
                ])


# ---------------------------------------------------------------------------
# PLY scenes
# ---------------------------------------------------------------------------

def _segment_colors(labels: np.ndarray) -> np.ndarray:
    return _PALETTE[labels % len(_PALETTE)]


def _scalar_colors(values: np.ndarray) -> np.ndarray:
    lo, hi = float(np.min(values)), float(np.max(values))
    t = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    return (matplotlib.colormaps["viridis"](t)[:, :3] * 255).astype(np.uint8)


def _box_mesh(center, axes, half_extents) -> TriangleMesh:
    box = make_box([2 * h for h in half_extents])
    verts = box.vertices @ np.asarray(axes) + np.asarray(center)
    return TriangleMesh(verts, box.faces)


def _cylinder_belt(cylinder: dict) -> TriangleMesh:
    belt = make_cylinder(cylinder["radius_mm"], cylinder["height_mm"],
                         n_sides=48, caps=False)
    axis = np.asarray(cylinder["axis_dir"])
    u = perpendicular(axis)
    v = np.cross(axis, u)
    rot = np.stack([u, v, axis], axis=1)
    base = np.asarray(cylinder["axis_point_mm"]) - axis * cylinder["height_mm"] / 2
    return TriangleMesh(belt.vertices @ rot.T + base, belt.faces)


def export_visual_files(task, config, analyses, op_results, report: dict,
                        out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    visuals = out_dir / "visuals"
    figures = out_dir / "figures"
    visuals.mkdir(parents=True, exist_ok=True)
    figures.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    comp_report = {c["id"]: c for c in report["components"]}
    for cid, analysis in analyses.items():
        mesh = analysis.mesh
        seg_path = visuals / f"{cid}_segments.ply"
        save_ply(mesh, seg_path, _segment_colors(analysis.labeling.labels))
        sdf_path = visuals / f"{cid}_sdf.ply"
        save_ply(mesh, sdf_path, _scalar_colors(analysis.sdf.values))
        written += [seg_path, sdf_path]

        prim_mesh = None
        for seg in comp_report[cid]["segments"]:
            prim = seg["primitive"]
            if prim is None:
                continue
            piece = (_cylinder_belt(prim["cylinder"]) if prim["kind"] == "cylinder"
                     else _box_mesh(prim["box"]["center_mm"], prim["box"]["axes"],
                                    prim["box"]["half_extents_mm"]))
            prim_mesh = piece if prim_mesh is None else prim_mesh.merged(piece)
        if prim_mesh is not None:
            prim_path = visuals / f"{cid}_primitives.ply"
            save_ply(prim_mesh, prim_path)
            written.append(prim_path)

        written.append(_sdf_figure(analysis, comp_report[cid],
                                   figures / f"{cid}_sdf_hist.png"))

    for r in op_results:
        if not r.graspables:
            continue
        written.append(_grasp_scene(task, analyses, r, config,
                                    visuals / f"op{r.index}_grasp.ply"))

    written.append(_matrix_figure(report, figures / "coverage_matrix.png"))
    written.append(_gripper_figure(report, figures / "grippers.png"))
    return written


def _grasp_scene(task, analyses, op_result, config, path: Path) -> Path:
    """Active part at its assembled pose, obstacles, and the witness gripper."""
    from .grasping import GripperGeometry, build_gripper_solid

    op = task.operations[op_result.index]
    scene = analyses[op.active_id].mesh.transformed(op.t_after)
    colors = [np.tile([60, 180, 75], (len(scene.faces), 1))]
    for pid, pose in op.passive:
        obstacle = task.components[pid].mesh.transformed(pose)
        colors.append(np.tile([160, 160, 160], (len(obstacle.faces), 1)))
        scene = scene.merged(obstacle)
    g = op_result.graspables[0]
    geom = GripperGeometry(config.grasping.finger_thickness_mm,
                           config.grasping.finger_width_mm,
                           tuple(config.grasping.palm_size_mm))
    solid = build_gripper_solid(g.witness.gripper_type, g.witness.width,
                                g.min_finger_length, geom)
    for box in solid.posed(op.t_after @ g.witness.pose):
        piece = _box_mesh(box.center, box.axes, box.half_extents)
        colors.append(np.tile([0, 130, 200], (len(piece.faces), 1)))
        scene = scene.merged(piece)
    save_ply(scene, path, np.vstack(colors).astype(np.uint8))
    return path


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _sdf_figure(analysis, comp_report: dict, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(analysis.sdf.values, bins=40, color="#4878a8", alpha=0.85)
    for mean in comp_report["mixture_means_mm"]:
        ax.axvline(mean, color="#c44e52", linestyle="--", linewidth=1)
    ax.set_xlabel("local diameter (mm)")
    ax.set_ylabel("faces")
    ax.set_title(f"{comp_report['id']}: diameter distribution, "
                 f"{comp_report['segment_count']} segments")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _matrix_figure(report: dict, path: Path) -> Path:
    opt = report["optimization"]
    matrix = np.asarray(opt["matrix"])
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.imshow(matrix, aspect="auto", cmap="Greys", interpolation="nearest")
    for j in opt["selected"]:
        ax.axvline(j, color="#c44e52", linewidth=1.2, alpha=0.8)
    ax.set_yticks(range(len(opt["component_order"])))
    ax.set_yticklabels(opt["component_order"])
    ax.set_xlabel("gripper parameter sample")
    ax.set_title(f"coverage matrix, {opt['cardinality']} grippers selected")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _gripper_figure(report: dict, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 3.5))
    widths = {}
    for comp, seglist in ((c["component"], c["segments"])
                          for c in report["constraints"]):
        for s in seglist:
            widths.setdefault(s["fingers"], []).append(s["width_mm"])
    for i, g in enumerate(report["grippers"]):
        ax.barh(i, g["max_width_mm"] - g["min_width_mm"], left=g["min_width_mm"],
                height=0.5, color="#4878a8", alpha=0.8)
        ax.text(g["max_width_mm"], i,
                f"  {g['fingers']}F L={g['finger_length_mm']:.0f}",
                va="center", fontsize=8)
    for fingers, ws in widths.items():
        ax.scatter(ws, [-0.8] * len(ws),
                   marker="|" if fingers == 2 else "x", s=60,
                   label=f"{fingers}-finger widths")
    ax.set_yticks(range(len(report["grippers"])))
    ax.set_yticklabels([f"gripper {g['rank']}" for g in report["grippers"]])
    ax.set_xlabel("opening width (mm)")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("selected grippers vs requested widths")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
