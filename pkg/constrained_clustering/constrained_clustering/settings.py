# Settings for the constrained_clustering project
#
# Module-level defaults. Any value named below can be overridden from the
# environment (or a .env file) using the DCC_ prefix, e.g. DCC_BATCH_SIZE=128.
# A key=value config file passed with --config and the command-line flags
# sit on top of these.

import os
from dotenv import load_dotenv

load_dotenv()

PROJECT_NAME = "constrained_clustering"

# Logging
LOG_LEVEL = os.environ.get("DCC_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Run hashes in report files
HASHIDS_SALT = os.environ.get("HASHIDS_SALT", "constrained-clustering")
HASHIDS_ALPHABET = "abcdefghijklmnopqrstuvwxyz1234567890"

# Network shape (d-500-500-2000-10)
HIDDEN_DIMS = [
    int(dim) for dim in os.environ.get("DCC_HIDDEN_DIMS", "500,500,2000").split(",")
]
EMBEDDING_DIM = int(os.environ.get("DCC_EMBEDDING_DIM", 10))

# SDAE pretraining
NOISE_RATE = float(os.environ.get("DCC_NOISE_RATE", 0.2))
LAYER_EPOCHS = int(os.environ.get("DCC_LAYER_EPOCHS", 50))
FINETUNE_EPOCHS = int(os.environ.get("DCC_FINETUNE_EPOCHS", 100))

# Clustering / training
EPOCHS = int(os.environ.get("DCC_EPOCHS", 20))
BATCH_SIZE = int(os.environ.get("DCC_BATCH_SIZE", 256))
CONSTRAINT_BATCH_SIZE = int(os.environ.get("DCC_CONSTRAINT_BATCH_SIZE", 256))
EVAL_BATCH_SIZE = int(os.environ.get("DCC_EVAL_BATCH_SIZE", 4096))
LEARNING_RATE = float(os.environ.get("DCC_LEARNING_RATE", 0.001))
ML_WEIGHT = float(os.environ.get("DCC_ML_WEIGHT", 0.1))
TRIPLET_MARGIN = float(os.environ.get("DCC_TRIPLET_MARGIN", 0.1))
KMEANS_RESTARTS = int(os.environ.get("DCC_KMEANS_RESTARTS", 20))
KMEANS_MAX_ITERS = int(os.environ.get("DCC_KMEANS_MAX_ITERS", 300))

# Must-link-only epochs of the trivial-solution study
TRIVIAL_STUDY_EPOCHS = int(os.environ.get("DCC_TRIVIAL_STUDY_EPOCHS", 100))

# Floor applied before every log in cluster_core and the constraint losses
LOG_CLAMP_FLOOR = 1e-12

# Instance difficulty oracle confidences
DIFFICULT_CONFIDENCE = -0.1
EASY_CONFIDENCE = 1.0

# Triplet oracle sampling pools
TRIPLET_POS_FRAC = float(os.environ.get("DCC_TRIPLET_POS_FRAC", 0.05))
TRIPLET_NEG_FRAC = float(os.environ.get("DCC_TRIPLET_NEG_FRAC", 0.05))

# Experiment fan-out
WORKERS = int(os.environ.get("DCC_WORKERS", 1))
