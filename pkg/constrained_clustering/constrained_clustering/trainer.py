import logging

import msgspec
import numpy as np

from constrained_clustering import settings
from constrained_clustering.cluster_core import (
    Centroids,
    clustering_loss,
    hard_assign,
    init_centroids,
    soft_assign,
    target_distribution,
)
from constrained_clustering.constraints.horn import activate_rules
from constrained_clustering.constraints.losses import (
    cannot_link_loss,
    cardinality_loss,
    global_size_loss,
    instance_difficulty_loss,
    must_link_loss,
    triplet_loss,
)
from constrained_clustering.constraints.sets import ConstraintSet, closure_and_entailment
from constrained_clustering.engine.optim import Adam
from constrained_clustering.engine.tensor import Tensor, no_grad
from constrained_clustering.exceptions import (
    ConfigError,
    NonFiniteError,
    TrainingDivergedError,
)
from constrained_clustering.items import EpochRecord
from constrained_clustering.metrics import evaluate_labels
from constrained_clustering.network import (
    ArchitectureSpec,
    ClusteringModel,
    NetworkParams,
    decode,
    embed,
    encode,
    pretrain_sdae,
    reconstruction_loss,
)
from constrained_clustering.utils.general import convert_config, get_batch_chunks

logger = logging.getLogger(__name__)

INIT_MODES = ("sdae", "raw")


class TrainConfig(msgspec.Struct):
    epochs: int = settings.EPOCHS
    n_clusters: int = 0
    batch_size: int = settings.BATCH_SIZE
    constraint_batch_size: int = settings.CONSTRAINT_BATCH_SIZE
    eval_batch_size: int = settings.EVAL_BATCH_SIZE
    learning_rate: float = settings.LEARNING_RATE
    ml_weight: float = settings.ML_WEIGHT
    margin: float = settings.TRIPLET_MARGIN
    use_difficulty: bool = False
    use_global: bool = False
    difficulty_weight: float = 1.0
    global_weight: float = 1.0
    literal_difficulty: bool = False
    ml_with_reconstruction: bool = True
    clustering_branch: bool = True
    delta_label_tol: float = 0.0
    kmeans_restarts: int = settings.KMEANS_RESTARTS
    init_mode: str = "sdae"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if min(self.batch_size, self.constraint_batch_size, self.eval_batch_size) < 1:
            raise ConfigError("batch sizes must be at least 1")
        if self.ml_weight <= 0:
            raise ConfigError(f"ml_weight must be positive, got {self.ml_weight}")
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.delta_label_tol < 1.0:
            raise ConfigError(f"delta_label_tol must lie in [0, 1), got {self.delta_label_tol}")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.n_clusters < 0 or self.kmeans_restarts < 1:
            raise ConfigError("n_clusters must be non-negative and kmeans_restarts positive")

    @classmethod
    def from_mapping(cls, mapping):
        return convert_config(mapping, cls)

    def replace(self, **changes):
        return msgspec.structs.replace(self, **changes)


class TrainResult(msgspec.Struct, eq=False):
    model: ClusteringModel
    history: list
    labels: object
    metrics: object = None

    @property
    def epochs_run(self):
        return len(self.history)


def predict(model, X, chunk_size=settings.EVAL_BATCH_SIZE):
    """Hard labels and soft assignment for every row of X"""
    Z = embed(model.params, X, chunk_size)
    mu = Tensor(model.centroids)
    with no_grad():
        parts = [
            soft_assign(Z[rows], mu).data
            for rows in get_batch_chunks(np.arange(len(Z)), chunk_size)
        ]
    Q = np.concatenate(parts, axis=0) if parts else np.zeros((0, mu.shape[0]))
    return hard_assign(Q), Q


def _local_rows(batch):
    """Unique dataset rows of a constraint batch and the batch re-indexed into them"""
    rows = np.unique(batch)
    return rows, np.searchsorted(rows, batch)


def constraint_branch_loss(params, centroids, X, kind, batch, config):
    """
    Loss of one constraint mini-batch.

    kind is "ml", "cl" or "triplet"; batch is an m x 2 (or m x 3) array of
    dataset indices. Constraint terms are summed over the batch. A must-link
    batch costs ml_weight times its pair losses plus, unless disabled, the
    mean reconstruction error over the distinct instances it touches.
    """
    rows, local = _local_rows(np.asarray(batch, dtype=np.int64))
    X_rows = X[rows]
    Z = encode(params, X_rows)
    Q = soft_assign(Z, centroids)

    if kind == "ml":
        loss = config.ml_weight * must_link_loss(Q, local)
        if config.ml_with_reconstruction:
            loss = loss + reconstruction_loss(X_rows, decode(params, Z))
        return loss
    if kind == "cl":
        return cannot_link_loss(Q, local)
    if kind == "triplet":
        return triplet_loss(Q, local, margin=config.margin)
    raise ConfigError(f"unknown constraint kind {kind!r}")


def _branch_one_step(params, centroids, X, rows, constraints, config):
    X_rows = X[rows]
    Z = encode(params, X_rows)
    Q = soft_assign(Z, centroids)
    P = target_distribution(Q)

    components = {
        "clustering_loss": clustering_loss(P, Q, reduction="mean"),
        "reconstruction_loss": reconstruction_loss(X_rows, decode(params, Z)),
    }
    if config.use_difficulty and constraints.difficulty is not None:
        components["difficulty_loss"] = config.difficulty_weight * instance_difficulty_loss(
            Q, constraints.difficulty.values[rows], literal=config.literal_difficulty, reduction="mean"
        )
    if config.use_global:
        components["global_size_loss"] = config.global_weight * global_size_loss(Q)
    if constraints.cardinality:
        total = None
        for spec in constraints.cardinality:
            term = cardinality_loss(Q, spec, rows)
            total = term if total is None else total + term
        components["cardinality_loss"] = total

    loss = None
    for term in components.values():
        loss = term if loss is None else loss + term
    return loss, components


def _constraint_batches(pairwise, constraints, config, rng):
    for kind, examples in (
        ("ml", pairwise.ml_array),
        ("cl", pairwise.cl_array),
        ("triplet", constraints.triplets.array),
    ):
        if len(examples) == 0:
            continue
        order = rng.permutation(len(examples))
        for chunk in get_batch_chunks(order, config.constraint_batch_size):
            yield kind, examples[chunk]


def _prepare_model(dataset, model, config, pretrain_config):
    if isinstance(model, NetworkParams):
        model = ClusteringModel(params=model)
    params = model.params.copy()
    if pretrain_config is not None:
        spec = _spec_from_params(params)
        params = pretrain_sdae(spec, dataset.X, pretrain_config, params=params)

    if model.centroids is not None:
        centroids = Centroids(mu=Tensor(np.array(model.centroids, dtype=np.float64), requires_grad=True))
    else:
        k = config.n_clusters or dataset.num_classes
        if k < 1:
            raise ConfigError("n_clusters must be set when the dataset has no labels")
        centroids = init_centroids(
            embed(params, dataset.X, config.eval_batch_size), k,
            restarts=config.kmeans_restarts, seed=config.seed,
        )
    return params, centroids


def _spec_from_params(params):
    dims = params.encoder_dims
    return ArchitectureSpec(input_dim=dims[0], hidden_dims=tuple(dims[1:-1]), embedding_dim=dims[-1])


def train(dataset, constraints, model, config, pretrain_config=None):
    """
    Alternate a clustering branch over random mini-batches of the data with
    a constraint branch over mini-batches of constraint examples, once each
    per epoch, for config.epochs epochs (or until the fraction of changed
    hard labels drops below config.delta_label_tol).

    Args:
        dataset: Dataset
        constraints: ConstraintSet (None for unconstrained training)
        model: ClusteringModel or NetworkParams; missing centroids are set by k-means
        config: TrainConfig
        pretrain_config: optional PretrainConfig to pretrain the network in-line

    Returns:
        TrainResult with a copy of the trained model and one EpochRecord per epoch
    """
    constraints = constraints if constraints is not None else ConstraintSet()
    constraints.check_range(dataset.n)
    pairwise = closure_and_entailment(constraints.pairwise)
    if config.use_difficulty and constraints.difficulty is None:
        logger.warning("Instance difficulty loss enabled but the constraint set has no difficulty vector")

    X = np.asarray(dataset.X, dtype=np.float64)
    params, centroids = _prepare_model(dataset, model, config, pretrain_config)
    optimizer = Adam(params.parameters() + [centroids.mu], learning_rate=config.learning_rate)
    data_rng = np.random.default_rng(config.seed)
    constraint_rng = np.random.default_rng([config.seed, 1])

    labels, _ = predict(ClusteringModel(params, centroids.numpy()), X, config.eval_batch_size)
    activated = frozenset()
    history = []
    if not dataset.has_labels:
        logger.warning("Dataset has no labels, Acc/NMI are skipped")

    for epoch in range(1, config.epochs + 1):
        sums = {}
        data_batches = get_batch_chunks(data_rng.permutation(dataset.n), config.batch_size)
        for batch_index, rows in enumerate(data_batches if config.clustering_branch else []):
            optimizer.zero_grad()
            try:
                loss, components = _branch_one_step(params, centroids, X, rows, constraints, config)
                loss.backward()
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch, batch_index, "clustering") from exc
            optimizer.step()
            for name, term in components.items():
                sums[name] = sums.get(name, 0.0) + term.item() * len(rows)
            logger.debug(f"Epoch {epoch} batch {batch_index}: clustering-branch loss {loss.item():.6f}")

        for batch_index, (kind, batch) in enumerate(_constraint_batches(pairwise, constraints, config, constraint_rng)):
            optimizer.zero_grad()
            try:
                loss = constraint_branch_loss(params, centroids, X, kind, batch, config)
                loss.backward()
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch, batch_index, kind) from exc
            optimizer.step()
            name = {"ml": "must_link_loss", "cl": "cannot_link_loss", "triplet": "triplet_loss"}[kind]
            sums[name] = sums.get(name, 0.0) + loss.item()
            logger.debug(f"Epoch {epoch} batch {batch_index}: {kind} loss {loss.item():.6f}")

        current = ClusteringModel(params, centroids.numpy())
        new_labels, Q = predict(current, X, config.eval_batch_size)
        if constraints.horn_rules:
            pairwise, activated = activate_rules(constraints.horn_rules, Q, pairwise, activated)
        churn = float(np.mean(new_labels != labels))
        labels = new_labels

        metrics = evaluate_labels(labels, dataset.y) if dataset.has_labels else None
        record = EpochRecord(
            epoch=epoch,
            clustering_loss=sums.get("clustering_loss", 0.0) / dataset.n,
            reconstruction_loss=sums.get("reconstruction_loss", 0.0) / dataset.n,
            difficulty_loss=sums.get("difficulty_loss", 0.0) / dataset.n,
            global_size_loss=sums.get("global_size_loss", 0.0) / dataset.n,
            cardinality_loss=sums.get("cardinality_loss", 0.0) / dataset.n,
            must_link_loss=sums.get("must_link_loss", 0.0),
            cannot_link_loss=sums.get("cannot_link_loss", 0.0),
            triplet_loss=sums.get("triplet_loss", 0.0),
            churn=churn,
            acc=None if metrics is None else metrics.acc,
            nmi=None if metrics is None else metrics.nmi,
            active_must_links=len(pairwise.must_links),
            active_cannot_links=len(pairwise.cannot_links),
        )
        history.append(record)
        logger.info(
            f"Epoch {epoch}: L_C {record.clustering_loss:.5f}, L_R {record.reconstruction_loss:.5f}, "
            f"ML {record.must_link_loss:.4f}, CL {record.cannot_link_loss:.4f}, T {record.triplet_loss:.4f}, "
            f"churn {churn:.4f}"
            + ("" if metrics is None else f", acc {metrics.acc:.4f}, nmi {metrics.nmi:.4f}")
        )

        if config.delta_label_tol > 0 and churn < config.delta_label_tol:
            logger.info(f"Stopping after epoch {epoch}: churn {churn:.4f} below {config.delta_label_tol}")
            break

    final = ClusteringModel(params=params.copy(), centroids=centroids.numpy())
    final_metrics = evaluate_labels(labels, dataset.y) if dataset.has_labels else None
    return TrainResult(model=final, history=history, labels=labels, metrics=final_metrics)


def evaluate_model(model, dataset, chunk_size=settings.EVAL_BATCH_SIZE):
    """Out-of-sample scoring: encode, soft-assign and take the argmax"""
    labels, _ = predict(model, dataset.X, chunk_size)
    if not dataset.has_labels:
        return labels, None
    return labels, evaluate_labels(labels, dataset.y)
