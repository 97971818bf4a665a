import logging
import msgspec
import numpy as np
from hashids import Hashids
from constrained_clustering import settings
from constrained_clustering.exceptions import ConfigError

hash_ids = Hashids(salt=settings.HASHIDS_SALT, alphabet=settings.HASHIDS_ALPHABET)


def configure_logging(level=None):
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.LOG_FORMAT,
    )


def determine_run_hash(seed, constraint_count, set_index, constrained):
    return hash_ids.encode(int(seed), int(constraint_count), int(set_index), int(constrained))


def derive_seed(*keys):
    """Stable child seed from a master seed and any number of integer keys"""
    return int(np.random.SeedSequence([int(key) for key in keys]).generate_state(1)[0])


def get_batch_chunks(indices, chunk_size):
    """
    Split an index array into consecutive mini-batches.
    The last chunk holds the remainder; empty input gives no chunks.

    Args:
        indices: 1-D array (or list) of row indices, already shuffled
        chunk_size: rows per chunk

    Returns:
        List of 1-D integer arrays
    """
    indices = np.asarray(indices)
    if len(indices) == 0:
        return []

    chunk_size = max(1, int(chunk_size))
    return [
        indices[start : start + chunk_size]
        for start in range(0, len(indices), chunk_size)
    ]


def convert_config(mapping, struct_type):
    """
    Build a config Struct from a str -> str mapping (environment, config file
    or flags). Keys are matched case-insensitively, unknown keys are ignored.
    """
    try:
        return msgspec.convert(
            {key.lower(): value for key, value in mapping.items()},
            type=struct_type,
            strict=False,
        )
    except msgspec.ValidationError as exc:
        raise ConfigError(str(exc)) from exc
