"""Gripper parameter sampling and exact minimum-cardinality gripper selection.

Per finger-count group, opening-width and finger-length grids are sampled
between bounds derived from the component constraints; a 0/1 compatibility
matrix then feeds an exact branch-and-bound set cover. An exhaustive
enumerator is kept alongside as the verification oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .assembly import ComponentConstraint
from .errors import InfeasibleCoverError

_EQ_EPS = 1e-9


def _strictly_less(a: float, b: float) -> bool:
    """Strict comparison; values closer than 1e-9 mm count as equal (fails)."""
    return a + _EQ_EPS < b


@dataclass(frozen=True)
class GripperParams:
    fingers: int            # 2 or 3
    min_width: float        # mm, max(0, max_width - stroke)
    max_width: float        # mm
    finger_length: float    # mm

    def covers(self, fingers: int, width: float, min_len: float,
               max_len: float) -> bool:
        """Compatibility with one segment constraint (all conditions strict)."""
        return (self.fingers == fingers
                and _strictly_less(min_len, self.finger_length)
                and _strictly_less(self.finger_length, max_len)
                and _strictly_less(self.min_width, width)
                and _strictly_less(width, self.max_width))


@dataclass
class SamplingBounds:
    fingers: int
    max_width_upper: float
    max_width_lower: float
    length_upper: float
    length_lower: float


@dataclass
class CoverProblem:
    matrix: np.ndarray                  # (M, N) of 0/1
    component_ids: list[str]
    params: list[GripperParams]


@dataclass
class CoverSolution:
    selected: list[int]
    assignment: dict[str, int]          # component id -> selected param index
    cardinality: int


def compute_bounds(constraints: list[ComponentConstraint],
                   strokes: dict[int, float],
                   margin: float = 0.0) -> dict[int, SamplingBounds]:
    """Width/length sampling bounds per finger-count group.

    The width grid top covers the largest requested width and the grid
    bottom, shifted down by the stroke, covers the smallest; when the width
    spread fits within the stroke a single collapsed value serves the whole
    group. ``margin`` widens the width window slightly (the physical build
    step oversizes openings the same way); zero keeps the textbook rule.
    """
    groups: dict[int, list] = {}
    for comp in constraints:
        for seg in comp.segments:
            groups.setdefault(seg.fingers, []).append(seg)
    out: dict[int, SamplingBounds] = {}
    for fingers in sorted(groups):
        segs = groups[fingers]
        stroke = strokes[fingers]
        widths = [s.width for s in segs]
        w_max, w_min = max(widths), min(widths)
        if w_max - w_min <= stroke:
            slack = min(margin, (stroke - (w_max - w_min)) / 2.0)
            upper = lower = w_max + max(slack, 0.0)
        else:
            upper = w_max + margin
            lower = min(w_min + stroke - margin, upper)
        l_lower = min(s.min_finger_length for s in segs)
        finite = [s.max_finger_length for s in segs
                  if math.isfinite(s.max_finger_length)]
        l_upper = max(finite) if finite else 2.0 * max(s.min_finger_length for s in segs)
        l_upper = max(l_upper, l_lower)
        out[fingers] = SamplingBounds(fingers, upper, lower, l_upper, l_lower)
    return out


def sample_params(bounds: dict[int, SamplingBounds],
                  counts: dict[int, tuple[int, int]],
                  strokes: dict[int, float]) -> list[GripperParams]:
    """Uniform grids (endpoints included) per group; N = sum of n_g * m_g."""
    params: list[GripperParams] = []
    for fingers in sorted(bounds):
        b = bounds[fingers]
        n, m = counts[fingers]
        stroke = strokes[fingers]
        widths = np.linspace(b.max_width_lower, b.max_width_upper, max(1, n))
        lengths = np.linspace(b.length_lower, b.length_upper, max(1, m))
        for w in np.unique(widths):
            for ln in np.unique(lengths):
                params.append(GripperParams(fingers, max(0.0, float(w) - stroke),
                                            float(w), float(ln)))
    return params


def build_coefficients(constraints: list[ComponentConstraint],
                       params: list[GripperParams]) -> CoverProblem:
    """0/1 matrix: component i is served by param j through >= 1 of its segments.

    Raises InfeasibleCoverError naming every component whose row is all
    zeros, before any solving happens.
    """
    if not constraints or not params:
        raise ValueError("need at least one constraint and one parameter sample")
    matrix = np.zeros((len(constraints), len(params)), dtype=np.int8)
    for i, comp in enumerate(constraints):
        for j, p in enumerate(params):
            matrix[i, j] = any(
                p.covers(s.fingers, s.width, s.min_finger_length, s.max_finger_length)
                for s in comp.segments)
    uncovered = [constraints[i].component_id
                 for i in range(len(constraints)) if not matrix[i].any()]
    if uncovered:
        raise InfeasibleCoverError(uncovered)
    return CoverProblem(matrix, [c.component_id for c in constraints], params)


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------

def _column_masks(matrix: np.ndarray) -> list[int]:
    masks = []
    for j in range(matrix.shape[1]):
        mask = 0
        for i in np.flatnonzero(matrix[:, j]):
            mask |= 1 << int(i)
        masks.append(mask)
    return masks


def _greedy_cover(masks: list[int], full: int) -> list[int]:
    covered = 0
    chosen: list[int] = []
    while covered != full:
        best_j, best_gain = -1, 0
        for j, m in enumerate(masks):
            gain = bin(m & ~covered).count("1")
            if gain > best_gain:
                best_j, best_gain = j, gain
        if best_j < 0:
            return []  # cannot happen once rows are checked non-empty
        chosen.append(best_j)
        covered |= masks[best_j]
    return chosen


def minimize_grippers(problem: CoverProblem) -> CoverSolution:
    """Exact minimum set cover by depth-first branch and bound.

    Columns are tried in decreasing coverage order with the admissible bound
    ceil(uncovered / largest remaining column); a greedy cover seeds the
    incumbent. Among all optimal selections the lexicographically smallest
    index set is returned, and each component is assigned its smallest
    selected covering column.
    """
    matrix = np.asarray(problem.matrix)
    m_rows, n_cols = matrix.shape
    if not all(matrix[i].any() for i in range(m_rows)):
        raise InfeasibleCoverError(
            [problem.component_ids[i] for i in range(m_rows) if not matrix[i].any()])
    full = (1 << m_rows) - 1
    masks = _column_masks(matrix)

    order = sorted(range(n_cols), key=lambda j: (-bin(masks[j]).count("1"), j))
    ordered_masks = [masks[j] for j in order]
    sizes = [bin(m).count("1") for m in ordered_masks]
    suffix_max = [0] * (n_cols + 1)
    suffix_union = [0] * (n_cols + 1)
    for j in range(n_cols - 1, -1, -1):
        suffix_max[j] = max(suffix_max[j + 1], sizes[j])
        suffix_union[j] = suffix_union[j + 1] | ordered_masks[j]

    greedy = _greedy_cover(masks, full)
    best_count = len(greedy) if greedy else n_cols + 1

    def dfs(pos: int, covered: int, count: int) -> None:
        nonlocal best_count
        if covered == full:
            best_count = min(best_count, count)
            return
        if pos == n_cols or (covered | suffix_union[pos]) != full:
            return
        missing = bin(full & ~covered).count("1")
        lower = count + (missing + suffix_max[pos] - 1) // suffix_max[pos]
        if lower >= best_count:
            return
        if ordered_masks[pos] & ~covered:
            dfs(pos + 1, covered | ordered_masks[pos], count + 1)
        dfs(pos + 1, covered, count)

    dfs(0, 0, 0)

    # lexicographically smallest selection achieving the optimum
    target = best_count
    selected: list[int] | None = None
    lex_union = [0] * (n_cols + 1)
    for j in range(n_cols - 1, -1, -1):
        lex_union[j] = lex_union[j + 1] | masks[j]
    max_size = max(sizes) if sizes else 1

    def lex_dfs(start: int, covered: int, chosen: list[int]) -> bool:
        if covered == full:
            nonlocal selected
            selected = list(chosen)
            return True
        slots = target - len(chosen)
        if slots <= 0:
            return False
        missing = bin(full & ~covered).count("1")
        if (missing + max_size - 1) // max_size > slots:
            return False
        for j in range(start, n_cols):
            if (covered | lex_union[j]) != full:
                return False
            if not masks[j] & ~covered:
                continue
            chosen.append(j)
            if lex_dfs(j + 1, covered | masks[j], chosen):
                return True
            chosen.pop()
        return False

    lex_dfs(0, 0, [])
    assert selected is not None
    assignment: dict[str, int] = {}
    for i, cid in enumerate(problem.component_ids):
        assignment[cid] = next(j for j in selected if matrix[i, j])
    return CoverSolution(selected, assignment, len(selected))


def exhaustive_cover_oracle(problem: CoverProblem) -> int:
    """Exact minimum cardinality by subset enumeration (N <= 20 only)."""
    matrix = np.asarray(problem.matrix)
    m_rows, n_cols = matrix.shape
    if n_cols > 20:
        raise ValueError("oracle limited to 20 columns")
    full = (1 << m_rows) - 1
    masks = _column_masks(matrix)
    for size in range(1, n_cols + 1):
        for combo in combinations(range(n_cols), size):
            covered = 0
            for j in combo:
                covered |= masks[j]
            if covered == full:
                return size
    raise InfeasibleCoverError(problem.component_ids)


# ---------------------------------------------------------------------------
# JSON views
# ---------------------------------------------------------------------------

def params_to_dict(p: GripperParams) -> dict:
    return {"fingers": p.fingers, "min_width_mm": p.min_width,
            "max_width_mm": p.max_width, "finger_length_mm": p.finger_length}


def params_from_dict(d: dict) -> GripperParams:
    return GripperParams(int(d["fingers"]), float(d["min_width_mm"]),
                         float(d["max_width_mm"]), float(d["finger_length_mm"]))


def problem_to_dict(problem: CoverProblem) -> dict:
    return {"component_ids": list(problem.component_ids),
            "matrix": problem.matrix.astype(int).tolist(),
            "params": [params_to_dict(p) for p in problem.params]}


def problem_from_dict(data: dict) -> CoverProblem:
    matrix = np.asarray(data["matrix"], dtype=np.int8)
    return CoverProblem(matrix, [str(c) for c in data["component_ids"]],
                        [params_from_dict(p) for p in data["params"]])


def solution_to_dict(solution: CoverSolution) -> dict:
    return {"selected": list(solution.selected),
            "assignment": dict(solution.assignment),
            "cardinality": solution.cardinality}
