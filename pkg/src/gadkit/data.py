"""Dataset ingestion, synthetic benchmarks and train/val/test splits.

On-disk format (language-neutral, diffable, round-trips bit-exactly):
  edges    whitespace-separated node-id pairs, one per line, '#' comments
  features CSV of reals, one row per node
  labels   one token per line from {0, 1, ?}

The synthetic benchmark is a stochastic block model with two kinds of
injected anomalies: contextual (features resampled around a shifted mean)
and structural (dense cliques wired among anomaly nodes).
"""

from dataclasses import dataclass

import numpy as np

from .graph import LABEL_UNKNOWN, build_graph


@dataclass(frozen=True)
class DatasetPaths:
    """Locations of the three on-disk dataset files."""

    edges: str
    features: str
    labels: str | None = None


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint labeled train/val pools plus the held-out test set."""

    train_anomalies: np.ndarray
    train_normals: np.ndarray
    val_anomalies: np.ndarray
    val_normals: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        parts = [self.train_anomalies, self.train_normals,
                 self.val_anomalies, self.val_normals, self.test]
        total = sum(p.size for p in parts)
        union = np.unique(np.concatenate(parts))
        if union.size != total:
            raise ValueError("split sets overlap")

    @property
    def train_nodes(self):
        return np.sort(np.concatenate([self.train_anomalies, self.train_normals]))

    @property
    def val_nodes(self):
        return np.sort(np.concatenate([self.val_anomalies, self.val_normals]))


def _labeled_pools(graph):
    anomalies = np.flatnonzero(graph.labels == 1)
    normals = np.flatnonzero(graph.labels == 0)
    return anomalies, normals


def make_semi_split(graph, n_anom=20, n_norm=80, seed=0, val_anom=20, val_norm=80):
    """Limited-supervision split: n_anom/n_norm labeled training nodes.

    Validation is an additional disjoint 20/80 sample (sizes overridable);
    test is every remaining node with a known label.
    """
    anomalies, normals = _labeled_pools(graph)
    if anomalies.size < n_anom + val_anom or normals.size < n_norm + val_norm:
        raise ValueError(
            f"insufficient labeled nodes: need {n_anom + val_anom} anomalies and "
            f"{n_norm + val_norm} normals, have {anomalies.size}/{normals.size}")
    if min(n_anom, n_norm, val_anom, val_norm) < 1:
        raise ValueError("split sizes must be positive")
    rng = np.random.default_rng(seed)
    pa = rng.permutation(anomalies)
    pn = rng.permutation(normals)
    train_a = np.sort(pa[:n_anom])
    val_a = np.sort(pa[n_anom:n_anom + val_anom])
    train_n = np.sort(pn[:n_norm])
    val_n = np.sort(pn[n_norm:n_norm + val_norm])
    used = np.concatenate([train_a, val_a, train_n, val_n])
    labeled = np.concatenate([anomalies, normals])
    test = np.sort(np.setdiff1d(labeled, used))
    return SplitSpec(train_a, train_n, val_a, val_n, test, seed)


def make_full_split(graph, train_ratio, seed=0):
    """Stratified split: train_ratio of each class to train, remainder
    halved between validation and test (per class)."""
    if not 0.0 < train_ratio < 1.0:
        raise ValueError("train_ratio must be in (0, 1)")
    anomalies, normals = _labeled_pools(graph)
    rng = np.random.default_rng(seed)
    picks = {}
    for name, pool in (("anom", anomalies), ("norm", normals)):
        if pool.size < 3:
            raise ValueError(f"class {name!r} has {pool.size} labeled nodes; need >= 3")
        m = pool.size
        k = int(round(train_ratio * m))
        k = min(max(k, 1), m - 2)  # keep validation and test non-empty
        perm = rng.permutation(pool)
        rest = perm[k:]
        half = rest.size // 2
        picks[name] = (np.sort(perm[:k]), np.sort(rest[:half]), rest[half:])
    test = np.sort(np.concatenate([picks["anom"][2], picks["norm"][2]]))
    return SplitSpec(picks["anom"][0], picks["norm"][0],
                     picks["anom"][1], picks["norm"][1], test, seed)


@dataclass(frozen=True)
class SyntheticSpec:
    """Stochastic block model benchmark with injected anomalies.

    Defaults target the sparse regime: ~2000 nodes, average degree about 4,
    5% anomalies. `structural_fraction` of the anomalies are wired into
    cliques of `clique_size` (features untouched); the rest are contextual,
    resampled with mean offset `feature_shift` on every dimension. Base
    features are gaussian with scale `feature_noise` around their block's
    profile; profiles sit `block_feature_gap` apart along the all-ones
    direction (0 = featureless blocks).
    """

    num_nodes: int = 2000
    block_sizes: tuple = ()
    num_blocks: int = 4
    intra_p: float = 0.007
    inter_p: float = 0.0003
    anomaly_fraction: float = 0.05
    feature_dim: int = 16
    feature_noise: float = 0.5
    feature_shift: float = 1.5
    block_feature_gap: float = 0.0
    clique_size: int = 8
    structural_fraction: float = 0.8
    contextual: bool = True
    structural: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.intra_p <= 1.0 or not 0.0 <= self.inter_p <= 1.0:
            raise ValueError("edge probabilities must lie in [0, 1]")
        if not 0.0 < self.anomaly_fraction < 0.5:
            raise ValueError("anomaly fraction must lie in (0, 0.5)")
        if self.feature_dim < 1 or self.num_nodes < 2:
            raise ValueError("need at least 2 nodes and 1 feature dimension")
        if self.block_sizes and sum(self.block_sizes) != self.num_nodes:
            raise ValueError("block sizes must sum to num_nodes")
        if not 0.0 <= self.structural_fraction <= 1.0:
            raise ValueError("structural fraction must lie in [0, 1]")
        if self.feature_noise <= 0.0:
            raise ValueError("feature noise must be positive")

    def resolved_blocks(self):
        if self.block_sizes:
            return tuple(self.block_sizes)
        base, extra = divmod(self.num_nodes, self.num_blocks)
        return tuple(base + (1 if i < extra else 0) for i in range(self.num_blocks))


def _block_edges(rng, offset_a, size_a, offset_b, size_b, p):
    """Bernoulli(p) edges between two node ranges (upper triangle if same)."""
    if p <= 0.0:
        return []
    if offset_a == offset_b:
        mask = rng.random((size_a, size_a)) < p
        iu, ju = np.where(np.triu(mask, k=1))
        return list(zip(iu + offset_a, ju + offset_a))
    mask = rng.random((size_a, size_b)) < p
    iu, ju = np.where(mask)
    return list(zip(iu + offset_a, ju + offset_b))


def generate_synthetic(spec):
    """Graph with ground-truth anomaly labels, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    n = spec.num_nodes
    sizes = spec.resolved_blocks()
    offsets = np.cumsum((0,) + sizes[:-1])

    membership = np.repeat(np.arange(len(sizes)), sizes)
    block_mean = spec.block_feature_gap * membership.astype(np.float64)
    features = (block_mean[:, None]
                + spec.feature_noise * rng.standard_normal((n, spec.feature_dim)))

    n_anom = int(round(spec.anomaly_fraction * n))
    anomalies = rng.choice(n, size=n_anom, replace=False)
    if spec.contextual and spec.structural:
        n_struct = int(round(spec.structural_fraction * n_anom))
    elif spec.structural:
        n_struct = n_anom
    else:
        n_struct = 0
    struct_nodes = anomalies[:n_struct]
    context_nodes = anomalies[n_struct:] if spec.contextual else anomalies[n_anom:]

    for v in context_nodes:
        features[v] = (block_mean[v] + spec.feature_shift
                       + spec.feature_noise * rng.standard_normal(spec.feature_dim))

    edges = []
    for i in range(len(sizes)):
        for j in range(i, len(sizes)):
            p = spec.intra_p if i == j else spec.inter_p
            edges.extend(_block_edges(rng, offsets[i], sizes[i], offsets[j], sizes[j], p))

    if n_struct:
        q = spec.clique_size
        if q < 2 or q > n_struct:
            raise ValueError(f"clique size {q} infeasible for {n_struct} structural anomalies")
        order = rng.permutation(struct_nodes)
        groups = [order[k:k + q] for k in range(0, n_struct, q)]
        if len(groups) > 1 and groups[-1].size < 2:
            groups[-2] = np.concatenate([groups[-2], groups[-1]])
            groups.pop()
        for grp in groups:
            for a in range(grp.size):
                for b in range(a + 1, grp.size):
                    edges.append((grp[a], grp[b]))

    labels = np.zeros(n, dtype=np.int64)
    labels[anomalies] = 1
    return build_graph(edges, features, labels)


def _fmt(x):
    return repr(float(x))


def save_dataset(graph, edge_path, feature_path, label_path=None):
    """Write the dataset files; load_dataset inverts this bit-exactly."""
    with open(edge_path, "w") as fh:
        for u, v in graph.edge_list():
            fh.write(f"{u} {v}\n")
    with open(feature_path, "w") as fh:
        for row in graph.features:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    if label_path is not None:
        with open(label_path, "w") as fh:
            for y in graph.labels:
                fh.write(("?" if y == LABEL_UNKNOWN else str(int(y))) + "\n")


def _parse_error(path, lineno, msg):
    return ValueError(f"{path}:{lineno}: {msg}")


def load_dataset(edge_path, feature_path, label_path=None):
    """Read the dataset files into a Graph (row i = node i).

    label_path may be None, in which case every node label is unknown.
    """
    features = []
    width = None
    with open(feature_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise _parse_error(feature_path, lineno, "invalid real number") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise _parse_error(feature_path, lineno,
                                   f"expected {width} columns, found {len(row)}")
            features.append(row)
    if not features:
        raise ValueError(f"{feature_path}: no feature rows")
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]

    if label_path is None:
        labels = [LABEL_UNKNOWN] * n
    else:
        labels = []
        with open(label_path) as fh:
            for lineno, line in enumerate(fh, 1):
                tok = line.strip()
                if not tok:
                    continue
                if tok == "?":
                    labels.append(LABEL_UNKNOWN)
                elif tok in ("0", "1"):
                    labels.append(int(tok))
                else:
                    raise _parse_error(label_path, lineno,
                                       f"label must be 0, 1 or ?, got {tok!r}")
        if len(labels) != n:
            raise ValueError(f"{label_path}: {len(labels)} labels for {n} feature rows")

    edges = []
    with open(edge_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise _parse_error(edge_path, lineno, "expected two node ids")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise _parse_error(edge_path, lineno, "node ids must be integers") from None
            if not (0 <= u < n and 0 <= v < n):
                raise _parse_error(edge_path, lineno,
                                   f"node id out of range for {n} nodes")
            edges.append((u, v))
    return build_graph(edges, features, labels)
