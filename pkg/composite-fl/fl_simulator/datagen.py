"""
Federated Data Generation and Loading

Synthetic heterogeneous shards with the (α, β) generator, label-skewed
splitting of pooled data, IDX / CSV ingestion and reproducible mini-batch
sampling.

Every random draw comes from a numpy SeedSequence keyed by a tuple
(seed, client, ...) so that results do not depend on the order in which
clients are processed.
"""

import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidArgumentError, ParseError

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Generator constants; the label noise and covariance decay follow the
# cited synthetic(α, β) construction
DEFAULT_NOISE_STD = 0.1
DEFAULT_COV_DECAY = 1.2
DEFAULT_SEED = 42

# Spawn-key tags that keep generator and sampler streams disjoint
_GENERATOR_STREAM = 0
_SPLIT_STREAM = 1

LABEL_MODELS = ("binary", "multiclass", "linear")


@dataclass
class GenConfig:
    """Parameters of the synthetic(α, β) generator."""
    alpha: float = 0.0
    beta: float = 0.0
    n_clients: int = 30
    dim: int = 20
    samples_per_client: Union[int, Sequence[int]] = 100
    label_model: str = "binary"
    n_classes: int = 2
    seed: int = DEFAULT_SEED
    noise_std: float = DEFAULT_NOISE_STD
    cov_decay: float = DEFAULT_COV_DECAY
    normalize: bool = True

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgumentError(f"heterogeneity knobs must be >= 0, got α={self.alpha}, β={self.beta}")
        if self.n_clients < 1 or self.dim < 1:
            raise InvalidArgumentError("n_clients and dim must be positive")
        if self.label_model not in LABEL_MODELS:
            raise InvalidArgumentError(f"unknown label model '{self.label_model}'")
        if self.label_model == "multiclass" and self.n_classes < 2:
            raise InvalidArgumentError("multiclass labels need at least 2 classes")
        if min(self.sizes()) < 1:
            raise InvalidArgumentError("every client needs at least one sample")

    def sizes(self) -> List[int]:
        if isinstance(self.samples_per_client, int):
            return [self.samples_per_client] * self.n_clients
        sizes = [int(m) for m in self.samples_per_client]
        if len(sizes) != self.n_clients:
            raise InvalidArgumentError(f"{len(sizes)} shard sizes given for {self.n_clients} clients")
        return sizes


@dataclass
class FederatedDataset:
    """n client shards sharing a feature dimension, plus where they came from."""
    features: List[np.ndarray]
    labels: List[np.ndarray]
    provenance: Dict[str, Any] = field(default_factory=dict)
    model_means: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        if len(self.features) == 0:
            raise InvalidArgumentError("dataset needs at least one shard")
        if len(self.features) != len(self.labels):
            raise InvalidArgumentError("features and labels disagree on the number of shards")
        if len({a.shape[1] for a in self.features}) != 1:
            raise InvalidArgumentError("shards disagree on feature dimension")
        for i, (a, b) in enumerate(zip(self.features, self.labels)):
            if a.shape[0] == 0:
                raise InvalidArgumentError(f"shard {i} is empty")
            if a.shape[0] != b.shape[0]:
                raise InvalidArgumentError(f"shard {i}: {a.shape[0]} rows but {b.shape[0]} labels")

    @property
    def n_clients(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def client_sizes(self) -> List[int]:
        return [a.shape[0] for a in self.features]


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def generate_synthetic(cfg: GenConfig) -> FederatedDataset:
    """
    Heterogeneous shards from the synthetic(α, β) recursion.

    Per client i (α and β are standard deviations):
        u_i ~ N(0, α²)   per coordinate,  w_i ~ N(u_i, 1)
        B_i ~ N(0, β²)   per coordinate,  v_i ~ N(B_i, 1)
        a_il ~ N(v_i, Σ),  Σ_jj = j^(−cov_decay)
        a_il ← a_il / ‖a_il‖              (unless normalize is off)
        b_il = sign(a_ilᵀ w_i + ε),  ε ~ N(0, noise_std²)

    Multiclass labels replace w_i by a d×C matrix and take the arg-max;
    linear targets keep the noisy score a_ilᵀ w_i + ε itself.
    With unit-norm rows the logistic smoothness constant is at most 1/4.
    """
    sizes = cfg.sizes()
    cov_std = np.arange(1, cfg.dim + 1, dtype=float) ** (-cfg.cov_decay / 2.0)
    n_out = cfg.n_classes if cfg.label_model == "multiclass" else 1
    features, labels = [], []
    model_means = []
    for i in range(cfg.n_clients):
        rng = _stream(cfg.seed, _GENERATOR_STREAM, i)
        u = rng.normal(0.0, cfg.alpha, size=(cfg.dim, n_out))
        w = rng.normal(u, 1.0)
        b_mean = rng.normal(0.0, cfg.beta, size=cfg.dim)
        v = rng.normal(b_mean, 1.0)
        a = v + cov_std * rng.standard_normal((sizes[i], cfg.dim))
        if cfg.normalize:
            a = a / np.linalg.norm(a, axis=1, keepdims=True)
        scores = a @ w + rng.normal(0.0, cfg.noise_std, size=(sizes[i], n_out))
        if cfg.label_model == "binary":
            y = np.where(scores[:, 0] >= 0.0, 1.0, -1.0)
        elif cfg.label_model == "linear":
            y = scores[:, 0]
        else:
            y = np.argmax(scores, axis=1).astype(np.int64)
        features.append(a)
        labels.append(y)
        model_means.append(u)
    provenance = {"source": "synthetic", "generator": "synthetic(alpha, beta)", **asdict(cfg)}
    if not isinstance(cfg.samples_per_client, int):
        provenance["samples_per_client"] = list(sizes)
    logger.debug("Generated %d synthetic shards of dimension %d", cfg.n_clients, cfg.dim)
    return FederatedDataset(features, labels, provenance, model_means)


def pooled(dataset: FederatedDataset) -> Tuple[np.ndarray, np.ndarray]:
    """Concatenate every shard into one sample matrix and label vector."""
    return np.concatenate(dataset.features), np.concatenate(dataset.labels)


def heterogeneous_label_split(dataset: FederatedDataset, n: int, uniform_fraction: float,
                              seed: int = DEFAULT_SEED) -> FederatedDataset:
    """
    Label-skewed partition of pooled data.

    A uniform_fraction of the shuffled samples is spread evenly across the n
    clients; every remaining sample with label l goes to client l mod n.
    Client totals may therefore differ.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if not 0.0 <= uniform_fraction <= 1.0:
        raise InvalidArgumentError(f"uniform_fraction must lie in [0, 1], got {uniform_fraction}")
    x, y = pooled(dataset)
    labels = y.astype(np.int64)
    if uniform_fraction < 1.0 and np.any(labels != y):
        raise InvalidArgumentError("label-skew split needs integer class labels")
    order = _stream(seed, _SPLIT_STREAM).permutation(x.shape[0])
    n_uniform = int(round(uniform_fraction * x.shape[0]))
    uniform_part, skew_part = order[:n_uniform], order[n_uniform:]
    shards: List[List[np.ndarray]] = [[chunk] for chunk in np.array_split(uniform_part, n)]
    for i in range(n):
        shards[i].append(skew_part[labels[skew_part] % n == i])
    features, out_labels = [], []
    for i, parts in enumerate(shards):
        idx = np.sort(np.concatenate(parts))
        if idx.size == 0:
            raise InvalidArgumentError(f"label split leaves client {i} without samples")
        features.append(x[idx])
        out_labels.append(y[idx])
    provenance = {"source": "label_split", "parent": dataset.provenance, "n_clients": n,
                  "uniform_fraction": uniform_fraction, "seed": seed}
    return FederatedDataset(features, out_labels, provenance)


def load_idx(path: Union[str, Path]) -> np.ndarray:
    """
    Read an IDX image or label file.

    Images (magic 0x803) are returned as a count×(rows·cols) float matrix
    scaled to [0, 1]; labels (magic 0x801) as an int64 vector.
    """
    path = str(path)
    with open(path, "rb") as handle:
        raw = handle.read()
    if len(raw) < 4:
        raise ParseError(path, "truncated header: missing magic number", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_IMAGE_MAGIC:
        n_dims = 3
    elif magic == IDX_LABEL_MAGIC:
        n_dims = 1
    else:
        raise ParseError(path, f"bad magic number 0x{magic:08x}", offset=0)
    header_end = 4 + 4 * n_dims
    if len(raw) < header_end:
        offset = 4 + 4 * ((len(raw) - 4) // 4)
        raise ParseError(path, "truncated header: missing dimension sizes", offset=offset)
    dims = struct.unpack(f">{n_dims}I", raw[4:header_end])
    count = int(np.prod(dims))
    payload = raw[header_end:]
    if len(payload) < count:
        raise ParseError(path, f"expected {count} data bytes, found {len(payload)}",
                         offset=header_end + len(payload))
    data = np.frombuffer(payload, dtype=np.uint8, count=count)
    if magic == IDX_LABEL_MAGIC:
        return data.astype(np.int64)
    return data.reshape(dims[0], dims[1] * dims[2]).astype(float) / 255.0


def load_csv(path: Union[str, Path]) -> np.ndarray:
    """Numeric CSV matrix with an optional header row; ragged rows are rejected."""
    path = str(path)
    rows: List[List[float]] = []
    width: Optional[int] = None
    with open(path, "rb") as handle:
        for line_no, raw in enumerate(handle, start=1):
            try:
                stripped = raw.decode("utf-8").strip()
            except UnicodeDecodeError as exc:
                raise ParseError(path, f"invalid UTF-8 at column {exc.start + 1}", line=line_no) from exc
            if not stripped:
                continue
            cells = [cell.strip() for cell in stripped.split(",")]
            try:
                values = [float(cell) for cell in cells]
            except ValueError:
                if line_no == 1 and not rows:
                    width = len(cells)  # header row
                    continue
                raise ParseError(path, "non-numeric cell", line=line_no)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(path, f"expected {width} columns, found {len(values)}", line=line_no)
            rows.append(values)
    if not rows:
        raise ParseError(path, "no data rows", line=1)
    return np.array(rows, dtype=float)


def dataset_from_idx(images_path: Union[str, Path], labels_path: Union[str, Path],
                     limit: Optional[int] = None) -> FederatedDataset:
    """Single-shard dataset from an IDX image/label pair."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 2 or labels.ndim != 1:
        raise InvalidArgumentError("expected an image file and a label file, in that order")
    if images.shape[0] != labels.shape[0]:
        raise InvalidArgumentError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return FederatedDataset([images], [labels], {
        "source": "idx", "images": str(images_path), "labels": str(labels_path), "limit": limit})


def dataset_from_csv(path: Union[str, Path], label_column: int = -1) -> FederatedDataset:
    """Single-shard dataset from a CSV file whose label_column holds the targets."""
    matrix = load_csv(path)
    labels = matrix[:, label_column]
    features = np.delete(matrix, label_column % matrix.shape[1], axis=1)
    if np.all(labels == np.round(labels)) and not np.all(np.abs(labels) == 1.0):
        labels = labels.astype(np.int64)
    return FederatedDataset([features], [labels], {"source": "csv", "path": str(path),
                                                   "label_column": label_column})


class BatchSampler:
    """Mini-batch indices as a pure function of (seed, client, round, step)."""

    def __init__(self, seed: int = DEFAULT_SEED):
        self.seed = int(seed)

    def next_batch(self, client: int, round_index: int, step: int, b: int, m: int) -> np.ndarray:
        """
        Draw b sample indices without replacement, sorted ascending.

        Args:
            client: Client id
            round_index: Round r (1-based)
            step: Local step t (0-based)
            b: Batch size
            m: Number of samples held by the client

        Returns:
            Index array of length b; every index in order when b = m
        """
        if b < 1:
            raise InvalidArgumentError(f"batch size must be >= 1, got {b}")
        if b > m:
            raise InvalidArgumentError(f"batch size {b} exceeds client {client} sample count {m}")
        if b == m:
            return np.arange(m)
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=self.seed, spawn_key=(client, round_index, step)))
        return np.sort(rng.choice(m, size=b, replace=False))


@dataclass
class BatchSchedule:
    """
    Batch indices of one round for every (client, step); None means full gradient.

    Both execution paths of the proposed algorithm read the same schedule.
    """
    round_index: int
    indices: List[List[Optional[np.ndarray]]]

    @property
    def n_clients(self) -> int:
        return len(self.indices)

    @property
    def tau(self) -> int:
        return len(self.indices[0]) if self.indices else 0

    def get(self, client: int, step: int) -> Optional[np.ndarray]:
        return self.indices[client][step]

    @classmethod
    def build(cls, sampler: BatchSampler, round_index: int, client_sizes: Sequence[int],
              tau: int, batch_size: Optional[int]) -> "BatchSchedule":
        table: List[List[Optional[np.ndarray]]] = []
        for i, m in enumerate(client_sizes):
            if batch_size is None:
                table.append([None] * tau)
            else:
                table.append([sampler.next_batch(i, round_index, t, batch_size, m)
                              for t in range(tau)])
        return cls(round_index, table)
