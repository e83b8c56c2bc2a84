"""Thickness-based mesh segmentation.

Stages: per-face shape-diameter values from cone-sampled inward rays, a 1-D
Gaussian mixture fit over the (log-normalized) values, an energy-minimizing
label assignment over the face adjacency graph, and finally a split of each
label into edge-connected segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .errors import SegmentationError
from .mesh import TriangleMesh
from .raycast import BvhAccelerator

_RESP_EPS = 1e-10
_DIHEDRAL_EPS = 1e-8
_VAR_FLOOR = 1e-6  # normalized values live in [0, 1]; keeps components non-singular
_ANGLE_WEIGHT_FLOOR = 1e-3  # rad; caps the weight of rays along the cone axis
_FLOW_SCALE = 1e6


@dataclass
class SdfField:
    """Per-face diameter values; NaN marks faces where every ray missed."""

    values: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    @property
    def defined_values(self) -> np.ndarray:
        return self.values[np.isfinite(self.values)]

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass
class SoftClustering:
    """Fitted 1-D mixture over normalized diameter values plus responsibilities."""

    responsibilities: np.ndarray    # (faces, k), rows sum to 1
    means: np.ndarray               # normalized space
    variances: np.ndarray
    weights: np.ndarray
    log_likelihood_history: list[float]
    value_min: float
    value_max: float

    @property
    def cluster_count(self) -> int:
        return len(self.means)

    @property
    def means_mm(self) -> np.ndarray:
        """Component means mapped back from normalized space to millimetres."""
        return denormalize_sdf(self.means, self.value_min, self.value_max)


@dataclass
class SegmentLabeling:
    labels: np.ndarray
    segment_count: int
    cluster_of_segment: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def faces_of(self, segment: int) -> np.ndarray:
        return np.flatnonzero(self.labels == segment)


# ---------------------------------------------------------------------------
# Shape diameter values
# ---------------------------------------------------------------------------

def _face_frames(mesh: TriangleMesh) -> np.ndarray:
    """Per-face orthonormal frame (t, b, -n) built from the face's own edge.

    Using the first edge as tangent makes the ray pattern rotate with the
    mesh, which keeps the values rigid-invariant for a fixed seed.
    """
    tri = mesh.triangles
    n = mesh.face_normals
    e = tri[:, 1] - tri[:, 0]
    t = e - np.einsum("ij,ij->i", e, n)[:, None] * n
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    inward = -n
    b = np.cross(inward, t)
    return np.stack([t, b, inward], axis=2)


def compute_sdf(mesh: TriangleMesh, accel: BvhAccelerator | None = None,
                rays_per_face: int = 30, cone_angle_deg: float = 120.0,
                seed: int = 0) -> SdfField:
    """Weighted average length of inward rays inside a cone, per face.

    Rays start at the face centroid, directions are drawn uniformly in solid
    angle within the half-angle cone around the inward normal, in the face's
    local frame. Lengths more than one standard deviation from the per-face
    median are rejected; survivors are averaged with weight 1/angle.
    """
    if not 0.0 < cone_angle_deg < 180.0:
        raise ValueError("cone angle must be in (0, 180) degrees")
    if rays_per_face < 1:
        raise ValueError("rays_per_face must be >= 1")
    if accel is None:
        accel = BvhAccelerator(mesh)
    n_faces = len(mesh.faces)
    half_angle = np.deg2rad(cone_angle_deg) / 2.0
    rng = np.random.default_rng(seed)
    cos_theta = rng.uniform(np.cos(half_angle), 1.0, size=(n_faces, rays_per_face))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(n_faces, rays_per_face))
    sin_theta = np.sqrt(1.0 - cos_theta ** 2)
    local = np.stack([sin_theta * np.cos(phi),
                      sin_theta * np.sin(phi),
                      cos_theta], axis=2)
    frames = _face_frames(mesh)
    dirs = np.einsum("fab,frb->fra", frames, local).reshape(-1, 3)
    origins = np.repeat(mesh.face_centroids, rays_per_face, axis=0)
    ignore = np.repeat(np.arange(n_faces), rays_per_face)
    offset = 1e-4 * mesh.bbox_diagonal  # skip grazing hits on coplanar neighbors
    dist, _ = accel.first_hits(origins, dirs, ignore_faces=ignore,
                               min_distance=offset)
    lengths = dist.reshape(n_faces, rays_per_face)
    angles = np.arccos(np.clip(cos_theta, -1.0, 1.0))

    values = np.full(n_faces, np.nan)
    finite = np.isfinite(lengths)
    for f in np.flatnonzero(finite.any(axis=1)):
        ls = lengths[f][finite[f]]
        ws = 1.0 / np.maximum(angles[f][finite[f]], _ANGLE_WEIGHT_FLOOR)
        med = np.median(ls)
        std = ls.std()
        keep = np.abs(ls - med) <= std
        if not keep.any():
            keep[:] = True
        values[f] = float(np.average(ls[keep], weights=ws[keep]))
    return SdfField(values)


def fill_missing_sdf(mesh: TriangleMesh, field: SdfField) -> SdfField:
    """Fill missing faces by breadth-first averaging of defined neighbors."""
    values = field.values.copy()
    if field.complete:
        return SdfField(values)
    if not np.isfinite(values).any():
        raise SegmentationError("no ray returned for any face; cannot fill values")
    adjacency = mesh.adjacency_lists
    while True:
        missing = np.flatnonzero(~np.isfinite(values))
        if len(missing) == 0:
            break
        wave = {}
        for f in missing:
            nbr_vals = [values[g] for g in adjacency[f] if np.isfinite(values[g])]
            if nbr_vals:
                wave[f] = float(np.mean(nbr_vals))
        if not wave:
            # isolated island with no defined neighbors anywhere: use global mean
            fallback = float(np.nanmean(values))
            for f in missing:
                values[f] = fallback
            break
        for f, v in wave.items():
            values[f] = v
    return SdfField(values)


def normalize_sdf(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Log normalization to [0, 1]: v' = log(v/v_min + 1) / log(v_max/v_min + 1)."""
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax - vmin <= 1e-12 * max(vmax, 1.0):
        return np.zeros_like(values), vmin, vmax
    ratio = values / vmin
    return np.log(ratio + 1.0) / np.log(vmax / vmin + 1.0), vmin, vmax


def denormalize_sdf(normalized: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    if vmax - vmin <= 1e-12 * max(vmax, 1.0):
        return np.full_like(np.asarray(normalized, dtype=float), vmin)
    return (np.exp(np.asarray(normalized) * np.log(vmax / vmin + 1.0)) - 1.0) * vmin


# ---------------------------------------------------------------------------
# Soft clustering (1-D EM)
# ---------------------------------------------------------------------------

def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min([(x - c) ** 2 for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
            continue
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.sort(np.array(centers))


def _em_once(x: np.ndarray, k: int, rng: np.random.Generator,
             max_iters: int, tol: float):
    n = len(x)
    means = _kmeans_pp_init(x, k, rng)
    variances = np.full(k, max(x.var(), _VAR_FLOOR))
    weights = np.full(k, 1.0 / k)
    history: list[float] = []
    resp = np.full((n, k), 1.0 / k)
    for _ in range(max_iters):
        # E step in log space
        log_pdf = (-0.5 * (x[:, None] - means[None, :]) ** 2 / variances[None, :]
                   - 0.5 * np.log(2.0 * np.pi * variances[None, :])
                   + np.log(weights[None, :]))
        m = log_pdf.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_pdf - m).sum(axis=1))
        ll = float(log_norm.sum())
        resp = np.exp(log_pdf - log_norm[:, None])
        if history and abs(ll - history[-1]) <= tol * max(1.0, abs(history[-1])):
            history.append(ll)
            break
        history.append(ll)
        # M step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        variances = np.maximum(variances, _VAR_FLOOR)
        weights = nk / n
    return means, variances, weights, resp, history


def soft_cluster(sdf: SdfField, k: int, seed: int = 0, max_iters: int = 200,
                 restarts: int = 5, tol: float = 1e-9) -> SoftClustering:
    """EM fit of a k-component 1-D Gaussian mixture over normalized values.

    Requires a complete field (fill missing values first) and at least k
    distinct values. The best of ``restarts`` seeded runs is kept; the
    log-likelihood history of the winning run is monotone non-decreasing.
    """
    if not sdf.complete:
        raise SegmentationError("SDF field has missing values; fill before clustering")
    values = sdf.values
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(np.unique(values)) < k:
        raise SegmentationError(
            f"cannot fit {k} clusters to {len(np.unique(values))} distinct values")
    x, vmin, vmax = normalize_sdf(values)
    best = None
    rng = np.random.default_rng(seed)
    for _ in range(max(1, restarts)):
        result = _em_once(x, k, rng, max_iters, tol)
        if best is None or result[4][-1] > best[4][-1]:
            best = result
    means, variances, weights, resp, history = best
    order = np.argsort(means)
    return SoftClustering(resp[:, order], means[order], variances[order],
                          weights[order], history, vmin, vmax)


def bic_score(soft: SoftClustering, n: int) -> float:
    k = soft.cluster_count
    n_params = 3 * k - 1
    return -2.0 * soft.log_likelihood_history[-1] + n_params * np.log(n)


def select_cluster_count(sdf: SdfField, candidates=(2, 3, 4, 5), seed: int = 0,
                         **em_kwargs) -> int:
    """Pick the cluster count minimizing the Bayesian information criterion."""
    distinct = len(np.unique(sdf.values))
    best_k, best_bic = 1, np.inf
    for k in candidates:
        if k > distinct:
            continue
        soft = soft_cluster(sdf, k, seed=seed, **em_kwargs)
        score = bic_score(soft, len(sdf.values))
        if score < best_bic:
            best_k, best_bic = k, score
    return best_k


# ---------------------------------------------------------------------------
# Hard clustering (expansion moves over the face graph)
# ---------------------------------------------------------------------------

def _edge_weights(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    pairs = mesh.face_adjacency
    if len(pairs) == 0:
        return pairs, np.empty(0)
    n = mesh.face_normals
    cos = np.clip(np.einsum("ij,ij->i", n[pairs[:, 0]], n[pairs[:, 1]]), -1.0, 1.0)
    dihedral = np.arccos(cos)
    w = -np.log(dihedral / np.pi + _DIHEDRAL_EPS)
    return pairs, np.maximum(w, 0.0)


def labeling_energy(mesh: TriangleMesh, responsibilities: np.ndarray,
                    labels: np.ndarray, smoothness: float) -> float:
    """Data term sum(-log p) plus smoothness-weighted label-change penalty."""
    data = -np.log(responsibilities[np.arange(len(labels)), labels] + _RESP_EPS)
    pairs, w = _edge_weights(mesh)
    smooth = 0.0
    if len(pairs):
        cut = labels[pairs[:, 0]] != labels[pairs[:, 1]]
        smooth = float((w[cut]).sum())
    return float(data.sum()) + smoothness * smooth


def _expansion_move(data_cost: np.ndarray, pairs: np.ndarray, w: np.ndarray,
                    labels: np.ndarray, alpha: int) -> np.ndarray:
    """One optimal expansion of label alpha via min-cut (sink side switches)."""
    n = len(labels)
    source, sink = n, n + 1
    cap_s = data_cost[np.arange(n), np.full(n, alpha)].copy()  # cost of switching
    cap_t = data_cost[np.arange(n), labels].copy()             # cost of keeping
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    if len(pairs):
        f, g = pairs[:, 0], pairs[:, 1]
        e00 = w * (labels[f] != labels[g])
        e01 = w * (labels[f] != alpha)
        e10 = w * (labels[g] != alpha)
        # pairwise decomposition: unary shifts plus one directed edge f->g
        u_f = e10 - e00
        np.add.at(cap_s, f, np.maximum(u_f, 0.0))
        np.add.at(cap_t, f, np.maximum(-u_f, 0.0))
        np.add.at(cap_t, g, e10)  # u_g = -e10 <= 0
        r = e01 + e10 - e00
        keep = r > 0
        rows.append(f[keep])
        cols.append(g[keep])
        data.append(r[keep])
    # reparameterize terminals so one of the two is always zero
    m = np.minimum(cap_s, cap_t)
    cap_s -= m
    cap_t -= m
    rows.append(np.full(n, source))
    cols.append(np.arange(n))
    data.append(cap_s)
    rows.append(np.arange(n))
    cols.append(np.full(n, sink))
    data.append(cap_t)
    rows_a = np.concatenate(rows)
    cols_a = np.concatenate(cols)
    caps = np.concatenate(data)
    int_caps = np.round(caps * _FLOW_SCALE).astype(np.int64)
    keep = int_caps > 0
    graph = csr_matrix((int_caps[keep], (rows_a[keep], cols_a[keep])),
                       shape=(n + 2, n + 2))
    result = maximum_flow(graph, source, sink)
    # flow carries antisymmetric reverse entries, so the difference is the
    # full residual graph including reverse arcs
    residual = graph - result.flow
    residual.data = np.where(residual.data > 0, residual.data, 0)
    residual.eliminate_zeros()
    reachable = breadth_first_order(residual, source, directed=True,
                                    return_predecessors=False)
    source_side = np.zeros(n + 2, dtype=bool)
    source_side[reachable] = True
    new_labels = labels.copy()
    new_labels[~source_side[:n]] = alpha
    return new_labels


def hard_cluster(mesh: TriangleMesh, soft: SoftClustering,
                 smoothness: float = 3.0, max_sweeps: int = 10) -> np.ndarray:
    """Per-face cluster labels minimizing data + smoothness energy.

    smoothness == 0 reduces exactly to the per-face argmax of the
    responsibilities; otherwise expansion moves are applied until no sweep
    improves the energy. The energy never increases across sweeps.
    """
    if smoothness < 0:
        raise ValueError("smoothness must be >= 0")
    resp = soft.responsibilities
    labels = np.argmax(resp, axis=1).astype(np.int64)
    k = soft.cluster_count
    if smoothness == 0.0 or k == 1:
        return labels
    data_cost = -np.log(resp + _RESP_EPS)
    pairs, w_raw = _edge_weights(mesh)
    w = smoothness * w_raw
    energy = labeling_energy(mesh, resp, labels, smoothness)
    for _ in range(max_sweeps):
        improved = False
        for alpha in range(k):
            candidate = _expansion_move(data_cost, pairs, w, labels, alpha)
            cand_energy = labeling_energy(mesh, resp, candidate, smoothness)
            if cand_energy < energy - 1e-12:
                labels, energy = candidate, cand_energy
                improved = True
        if not improved:
            break
    return labels


# ---------------------------------------------------------------------------
# Connected segments
# ---------------------------------------------------------------------------

def _edge_length_between(mesh: TriangleMesh, fa: int, fb: int) -> float:
    shared = np.intersect1d(mesh.faces[fa], mesh.faces[fb])
    if len(shared) < 2:
        return 0.0
    return float(np.linalg.norm(mesh.vertices[shared[0]] - mesh.vertices[shared[1]]))


def split_into_segments(mesh: TriangleMesh, cluster_ids: np.ndarray,
                        min_faces: int | None = None) -> SegmentLabeling:
    """Split cluster labels into edge-connected segments, merging slivers.

    Segments smaller than ``min_faces`` (default 1% of the face count) are
    merged into the adjacent segment sharing the longest boundary.
    """
    cluster_ids = np.asarray(cluster_ids, dtype=np.int64)
    n = len(mesh.faces)
    if len(cluster_ids) != n:
        raise ValueError("cluster_ids must label every face")
    if min_faces is None:
        min_faces = max(1, int(np.ceil(0.01 * n)))
    adjacency = mesh.adjacency_lists
    seg = np.full(n, -1, dtype=np.int64)
    seg_cluster: list[int] = []
    current = 0
    for start in range(n):
        if seg[start] >= 0:
            continue
        stack = [start]
        seg[start] = current
        while stack:
            f = stack.pop()
            for g in adjacency[f]:
                if seg[g] < 0 and cluster_ids[g] == cluster_ids[f]:
                    seg[g] = current
                    stack.append(g)
        seg_cluster.append(int(cluster_ids[start]))
        current += 1

    # merge undersized segments into the neighbor with the longest shared boundary
    while True:
        counts = np.bincount(seg, minlength=current)
        small = [s for s in range(current) if 0 < counts[s] < min_faces]
        if not small:
            break
        small.sort(key=lambda s: (counts[s], s))
        s = small[0]
        boundary: dict[int, float] = {}
        for f in np.flatnonzero(seg == s):
            for g in adjacency[f]:
                if seg[g] != s:
                    boundary[seg[g]] = boundary.get(int(seg[g]), 0.0) \
                        + _edge_length_between(mesh, f, int(g))
        if not boundary:
            break  # isolated component, nothing to merge into
        target = max(sorted(boundary), key=lambda t: boundary[t])
        seg[seg == s] = target
        seg_cluster[s] = seg_cluster[target]

    # dense relabel ordered by first face occurrence
    remap: dict[int, int] = {}
    out = np.empty(n, dtype=np.int64)
    clusters: list[int] = []
    for f in range(n):
        s = int(seg[f])
        if s not in remap:
            remap[s] = len(remap)
            clusters.append(seg_cluster[s])
        out[f] = remap[s]
    return SegmentLabeling(out, len(remap), np.array(clusters, dtype=np.int64))
