"""Command line interface.

Subcommands expose the full run (``design``) and individual stages for
debugging (``segment``, ``fit``, ``grasps``, ``solve``); ``demo`` writes a
synthetic task and runs it end to end.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import GripperDesignError, InfeasibleCoverError, UngraspableComponentError
from .mesh import load_mesh, save_ply
from .pipeline import analyze_component, run_pipeline
from .assembly import AssemblyComponent, generate_segment_candidates
from .setcover import minimize_grippers, problem_from_dict, solution_to_dict


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")


def _config_for(args) -> "PipelineConfig":
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _component_from_mesh(path: str) -> AssemblyComponent:
    mesh = load_mesh(path)
    name = Path(path).stem
    return AssemblyComponent(name, name, path, mesh)


def _cmd_design(args) -> int:
    config = _config_for(args)
    out = args.out or "design_out"
    report = run_pipeline(args.task, config, out_dir=out,
                          export_visuals=args.export_visuals,
                          use_cache=not args.no_cache)
    print(f"selected {report['optimization']['cardinality']} gripper(s):")
    for g in report["grippers"]:
        print(f"  {g['fingers']}-finger  width {g['min_width_mm']:.6g}"
              f"-{g['max_width_mm']:.6g} mm  finger length "
              f"{g['finger_length_mm']:.6g} mm  -> {', '.join(g['assigned_components'])}")
    print(f"report written to {Path(out) / 'report.json'}")
    return 0


def _cmd_segment(args) -> int:
    config = _config_for(args)
    component = _component_from_mesh(args.mesh)
    analysis = analyze_component(component, config)
    summary = {
        "mesh": args.mesh,
        "faces": int(len(analysis.mesh.faces)),
        "cluster_count": analysis.cluster_count,
        "segment_count": analysis.labeling.segment_count,
        "segment_faces": [int(len(s.parent_faces)) for s in analysis.segments],
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        from .report import _scalar_colors, _segment_colors
        save_ply(analysis.mesh, out / f"{component.component_id}_segments.ply",
                 _segment_colors(analysis.labeling.labels))
        save_ply(analysis.mesh, out / f"{component.component_id}_sdf.ply",
                 _scalar_colors(analysis.sdf.values))
        print(f"segment/sdf PLY written to {out}")
    return 0


def _cmd_fit(args) -> int:
    config = _config_for(args)
    analysis = analyze_component(_component_from_mesh(args.mesh), config)
    rows = []
    for seg in analysis.segments:
        sel = seg.selection
        rows.append({
            "segment": seg.index,
            "faces": int(len(seg.parent_faces)),
            "primitive": sel.kind if sel else None,
            "gripper_type": sel.gripper_type if sel else None,
            "width_mm": round(sel.width, 6) if sel else None,
            "reason": seg.ungraspable_reason,
        })
    print(json.dumps(rows, indent=2))
    return 0


def _cmd_grasps(args) -> int:
    config = _config_for(args)
    analysis = analyze_component(_component_from_mesh(args.mesh), config)
    g = config.grasping
    out = []
    for seg in analysis.segments:
        if seg.selection is None:
            continue
        if args.segment is not None and seg.index != args.segment:
            continue
        cands = generate_segment_candidates(
            seg.submesh, seg.parent_faces, analysis.mesh, seg.selection,
            n_rotations=g.n_rotations, depths=tuple(config.grasp_depths_mm()),
            n_axial=g.n_axial, angle_tol_deg=g.angle_tol_deg,
            min_facet_area=g.min_facet_area_mm2, max_width=g.max_pair_width_mm)
        for c in cands:
            out.append({"segment": seg.index, "type": c.gripper_type,
                        "width_mm": round(c.width, 6),
                        "pose": [round(float(x), 6) for x in c.pose.reshape(-1)],
                        "contacts_mm": np.round(c.contacts, 6).tolist()})
    print(json.dumps(out, indent=2))
    return 0


def _cmd_solve(args) -> int:
    with open(args.problem) as fh:
        problem = problem_from_dict(json.load(fh))
    solution = minimize_grippers(problem)
    print(json.dumps(solution_to_dict(solution), indent=2))
    return 0


def _cmd_demo(args) -> int:
    from .demo import write_demo_task

    out = Path(args.out or "demo_out")
    task_path, config_path = write_demo_task(out)
    print(f"demo task written to {task_path}")
    args.task = str(task_path)
    args.config = str(config_path)
    args.out = str(out / "design")
    return _cmd_design(args)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gripperdesign",
        description="Select gripper types and parameters for an assembly task "
                    "from its component meshes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="run the full pipeline on a task file")
    p.add_argument("--task", required=True, help="assembly task JSON")
    p.add_argument("--export-visuals", action="store_true",
                   help="also write PLY scenes and PNG figures")
    p.add_argument("--no-cache", action="store_true",
                   help="disable the segmentation stage cache")
    _add_common(p)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("segment", help="segment a single mesh")
    p.add_argument("--mesh", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("fit", help="segment a mesh and fit primitives")
    p.add_argument("--mesh", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("grasps", help="list grasp candidates for a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--segment", type=int, help="restrict to one segment index")
    _add_common(p)
    p.set_defaults(func=_cmd_grasps)

    p = sub.add_parser("solve", help="solve a serialized cover problem")
    p.add_argument("--problem", required=True, help="problem JSON")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("demo", help="write a synthetic 5-component task and run it")
    p.add_argument("--export-visuals", action="store_true")
    p.add_argument("--no-cache", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_demo)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UngraspableComponentError as exc:
        print(f"error [ungraspable] operation {exc.operation_index}, "
              f"component '{exc.component_id}': {exc}", file=sys.stderr)
        return 2
    except InfeasibleCoverError as exc:
        print(f"error [infeasible] {exc}", file=sys.stderr)
        return 2
    except GripperDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
