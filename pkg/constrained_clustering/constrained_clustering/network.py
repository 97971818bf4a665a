import logging
from pathlib import Path

import msgspec
import numpy as np

from constrained_clustering import settings
from constrained_clustering.engine.optim import Adam
from constrained_clustering.engine.tensor import Tensor, matmul, no_grad
from constrained_clustering.exceptions import (
    ArchitectureError,
    ConfigError,
    CorruptHeaderError,
    NonFiniteError,
    PretrainingError,
    ShapeInconsistencyError,
    ShapeMismatchError,
    VersionMismatchError,
)
from constrained_clustering.utils.general import get_batch_chunks

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"DCCM"
MODEL_VERSION = 1


class ArchitectureSpec(msgspec.Struct, frozen=True):
    input_dim: int
    hidden_dims: tuple[int, ...] = tuple(settings.HIDDEN_DIMS)
    embedding_dim: int = settings.EMBEDDING_DIM

    def __post_init__(self):
        if self.input_dim < 1 or self.embedding_dim < 1:
            raise ArchitectureError(
                f"input_dim and embedding_dim must be positive, got {self.input_dim} and {self.embedding_dim}"
            )
        if len(self.hidden_dims) == 0:
            raise ArchitectureError("at least one hidden layer is required")
        if any(int(dim) < 1 for dim in self.hidden_dims):
            raise ArchitectureError(f"hidden dims must be positive, got {self.hidden_dims}")

    @property
    def encoder_dims(self):
        return [self.input_dim, *[int(dim) for dim in self.hidden_dims], self.embedding_dim]

    @property
    def decoder_dims(self):
        return list(reversed(self.encoder_dims))


class NetworkParams(msgspec.Struct, eq=False):
    """Encoder f and its mirrored decoder g as lists of (weight, bias) Tensors"""

    encoder_layers: list
    decoder_layers: list

    def __post_init__(self):
        _check_chain("encoder", self.encoder_layers)
        _check_chain("decoder", self.decoder_layers)
        if self.decoder_dims != list(reversed(self.encoder_dims)):
            raise ArchitectureError(
                f"decoder dims {self.decoder_dims} do not mirror encoder dims {self.encoder_dims}"
            )

    @classmethod
    def initialize(cls, spec, seed=0):
        """Glorot-uniform weights, zero biases"""
        rng = np.random.default_rng(seed)
        return cls(
            encoder_layers=_init_layers(spec.encoder_dims, rng),
            decoder_layers=_init_layers(spec.decoder_dims, rng),
        )

    @property
    def encoder_dims(self):
        return _layer_dims(self.encoder_layers)

    @property
    def decoder_dims(self):
        return _layer_dims(self.decoder_layers)

    @property
    def input_dim(self):
        return self.encoder_dims[0]

    @property
    def embedding_dim(self):
        return self.encoder_dims[-1]

    def parameters(self):
        return [
            tensor
            for weight, bias in self.encoder_layers + self.decoder_layers
            for tensor in (weight, bias)
        ]

    def copy(self):
        return NetworkParams(
            encoder_layers=_copy_layers(self.encoder_layers),
            decoder_layers=_copy_layers(self.decoder_layers),
        )


class ClusteringModel(msgspec.Struct, eq=False):
    """Network plus the k x embedding centroid matrix (None before clustering)"""

    params: NetworkParams
    centroids: object = None

    @property
    def k(self):
        return 0 if self.centroids is None else int(np.asarray(self.centroids).shape[0])

    def copy(self):
        centroids = None if self.centroids is None else np.array(self.centroids, dtype=np.float64)
        return ClusteringModel(params=self.params.copy(), centroids=centroids)


class PretrainConfig(msgspec.Struct):
    noise_rate: float = settings.NOISE_RATE
    layer_epochs: int = settings.LAYER_EPOCHS
    finetune_epochs: int = settings.FINETUNE_EPOCHS
    batch_size: int = settings.BATCH_SIZE
    learning_rate: float = settings.LEARNING_RATE
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError(f"noise_rate must lie in [0, 1), got {self.noise_rate}")
        if self.layer_epochs < 0 or self.finetune_epochs < 0:
            raise ConfigError("pretraining epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")


def _init_layers(dims, rng):
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)
        bias = Tensor(np.zeros(fan_out), requires_grad=True)
        layers.append((weight, bias))
    return layers


def _copy_layers(layers):
    return [
        (Tensor(weight.data, requires_grad=True), Tensor(bias.data, requires_grad=True))
        for weight, bias in layers
    ]


def _layer_dims(layers):
    if not layers:
        return []
    return [layers[0][0].shape[0]] + [weight.shape[1] for weight, _ in layers]


def _check_chain(name, layers):
    if not layers:
        raise ArchitectureError(f"{name} has no layers")
    previous = None
    for index, (weight, bias) in enumerate(layers):
        if weight.ndim != 2 or bias.shape != (weight.shape[1],):
            raise ArchitectureError(
                f"{name} layer {index}: weight {weight.shape} and bias {bias.shape} do not fit"
            )
        if previous is not None and weight.shape[0] != previous:
            raise ArchitectureError(
                f"{name} layer {index} expects {weight.shape[0]} inputs, previous layer emits {previous}"
            )
        previous = weight.shape[1]


def _dense(h, layer, activate):
    weight, bias = layer
    out = matmul(h, weight) + bias
    return out.relu() if activate else out


def _forward(layers, h, name):
    h = h if isinstance(h, Tensor) else Tensor(h)
    expected = layers[0][0].shape[0]
    if h.ndim != 2 or h.shape[1] != expected:
        raise ShapeMismatchError(name, h.shape, (h.shape[0] if h.ndim else 0, expected))
    last = len(layers) - 1
    for index, layer in enumerate(layers):
        h = _dense(h, layer, activate=index != last)
    return h


def encode(params, X):
    """ReLU on internal layers, linear embedding"""
    return _forward(params.encoder_layers, X, "encode")


def decode(params, Z):
    return _forward(params.decoder_layers, Z, "decode")


def reconstruction_loss(X, X_hat):
    """Mean over rows of the squared Euclidean distance between X and X_hat"""
    X = X if isinstance(X, Tensor) else Tensor(X)
    X_hat = X_hat if isinstance(X_hat, Tensor) else Tensor(X_hat)
    if X.shape != X_hat.shape:
        raise ShapeMismatchError("reconstruction_loss", X.shape, X_hat.shape)
    return (X - X_hat).square().sum(axis=1).mean()


def _train_pair(encoder_layer, decoder_layer, inputs, config, rng, layer_index, top):
    """Train one denoising encoder/decoder pair to rebuild clean `inputs`"""
    optimizer = Adam(
        [*encoder_layer, *decoder_layer], learning_rate=config.learning_rate
    )
    loss_value = None
    for epoch in range(config.layer_epochs):
        for batch in get_batch_chunks(rng.permutation(len(inputs)), config.batch_size):
            clean = inputs[batch]
            keep = rng.random(clean.shape) >= config.noise_rate
            optimizer.zero_grad()
            try:
                hidden = _dense(Tensor(clean * keep), encoder_layer, activate=not top)
                rebuilt = _dense(hidden, decoder_layer, activate=layer_index != 0)
                loss = reconstruction_loss(clean, rebuilt)
            except NonFiniteError as exc:
                raise PretrainingError(layer_index, str(exc)) from exc
            loss.backward()
            optimizer.step()
            loss_value = loss.item()
        logger.debug(f"Layer {layer_index} epoch {epoch}: loss {loss_value}")
    return loss_value


def pretrain_sdae(spec, X, config, params=None):
    """
    Greedy layer-wise denoising pretraining followed by noise-free finetuning
    of the whole autoencoder.

    Each encoder layer i is paired with the decoder layer that mirrors it and
    trained to rebuild its clean input (the output of the already-trained
    layers below) from a zero-masked copy. The top encoder layer is trained
    linear, as are the decoder layers that rebuild the raw input.

    Args:
        spec: ArchitectureSpec
        X: n x d array
        config: PretrainConfig
        params: optional starting NetworkParams, initialized from config.seed when omitted

    Returns:
        NetworkParams
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise PretrainingError(0, f"need a non-empty n x d matrix, got shape {X.shape}")
    if X.shape[1] != spec.input_dim:
        raise ShapeMismatchError("pretrain_sdae", X.shape, (X.shape[0], spec.input_dim))

    params = params.copy() if params is not None else NetworkParams.initialize(spec, config.seed)
    rng = np.random.default_rng(config.seed)
    depth = len(params.encoder_layers)

    inputs = X
    for index in range(depth):
        encoder_layer = params.encoder_layers[index]
        decoder_layer = params.decoder_layers[depth - 1 - index]
        top = index == depth - 1

        if config.layer_epochs > 0:
            loss_value = _train_pair(
                encoder_layer, decoder_layer, inputs, config, rng, index, top
            )
            logger.info(f"Pretrained layer {index} ({inputs.shape[1]} -> {encoder_layer[0].shape[1]}), loss {loss_value:.6f}")

        with no_grad():
            inputs = _dense(Tensor(inputs), encoder_layer, activate=not top).data

    if config.finetune_epochs > 0:
        loss_value = finetune_autoencoder(params, X, config, rng)
        logger.info(f"Finetuned autoencoder, loss {loss_value:.6f}")

    return params


def finetune_autoencoder(params, X, config, rng):
    optimizer = Adam(params.parameters(), learning_rate=config.learning_rate)
    loss_value = None
    for epoch in range(config.finetune_epochs):
        for batch in get_batch_chunks(rng.permutation(len(X)), config.batch_size):
            optimizer.zero_grad()
            try:
                loss = reconstruction_loss(X[batch], decode(params, encode(params, X[batch])))
            except NonFiniteError as exc:
                raise PretrainingError("finetune", str(exc)) from exc
            loss.backward()
            optimizer.step()
            loss_value = loss.item()
        logger.debug(f"Finetune epoch {epoch}: loss {loss_value}")
    return loss_value


def embed(params, X, chunk_size=settings.EVAL_BATCH_SIZE):
    """Encode X in chunks without recording a tape"""
    X = np.asarray(X, dtype=np.float64)
    with no_grad():
        parts = [
            encode(params, X[chunk]).data
            for chunk in get_batch_chunks(np.arange(len(X)), chunk_size)
        ]
    if not parts:
        return np.zeros((0, params.embedding_dim))
    return np.concatenate(parts, axis=0)


# Model files


def save_model(model, path):
    """Write a DCCM file: header, encoder, decoder, then centroids (k may be 0)"""
    params = model.params
    dims = params.encoder_dims
    k = model.k
    header = (
        MODEL_MAGIC
        + np.array([MODEL_VERSION, len(dims), *dims, k], dtype="<u4").tobytes()
    )
    arrays = [
        array
        for weight, bias in params.encoder_layers + params.decoder_layers
        for array in (weight.data, bias.data)
    ]
    if k:
        arrays.append(np.asarray(model.centroids, dtype=np.float64))
    payload = b"".join(np.ascontiguousarray(array, dtype="<f8").tobytes() for array in arrays)
    Path(path).write_bytes(header + payload)


def save_params(params, path):
    save_model(ClusteringModel(params=params), path)


def load_model(path):
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MODEL_MAGIC:
        raise CorruptHeaderError(f"{path}: missing DCCM header")

    version, n_dims = np.frombuffer(raw, dtype="<u4", count=2, offset=4)
    if version != MODEL_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {MODEL_VERSION}"
        )
    header_size = 12 + 4 * int(n_dims) + 4
    if n_dims < 2 or len(raw) < header_size:
        raise CorruptHeaderError(f"{path}: header declares {n_dims} dims but is truncated")

    dims = [int(dim) for dim in np.frombuffer(raw, dtype="<u4", count=int(n_dims), offset=12)]
    k = int(np.frombuffer(raw, dtype="<u4", count=1, offset=12 + 4 * int(n_dims))[0])
    if min(dims) < 1:
        raise ShapeInconsistencyError(f"{path}: declared dims {dims} contain a zero")

    shapes = []
    for chain in (dims, list(reversed(dims))):
        for fan_in, fan_out in zip(chain[:-1], chain[1:]):
            shapes.extend([(fan_in, fan_out), (fan_out,)])
    if k:
        shapes.append((k, dims[-1]))

    expected = sum(int(np.prod(shape)) for shape in shapes) * 8
    if len(raw) - header_size != expected:
        raise ShapeInconsistencyError(
            f"{path}: dims {dims} with k={k} need {expected} payload bytes, found {len(raw) - header_size}"
        )

    arrays = []
    offset = header_size
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        )
        offset += count * 8

    depth = len(dims) - 1
    layers = [
        (Tensor(arrays[2 * i], requires_grad=True), Tensor(arrays[2 * i + 1], requires_grad=True))
        for i in range(2 * depth)
    ]
    params = NetworkParams(encoder_layers=layers[:depth], decoder_layers=layers[depth:])
    centroids = arrays[-1] if k else None
    logger.debug(f"Loaded model {path}: dims {dims}, k={k}")
    return ClusteringModel(params=params, centroids=centroids)


def load_params(path):
    return load_model(path).params
