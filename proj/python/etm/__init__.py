"""Episodic triplet mining for few-shot metric learning."""

import json

from . import _core
from ._core import (
    Dataset,
    EmbeddingNet,
    EtmError,
    distance_matrix,
    episode_loss,
    evaluate,
    generate_synthetic,
    infer,
    load_csv,
    lr_at,
    mine,
    proto_infer,
    proto_loss,
    prototypes,
    pseudo_label,
    save_csv,
    split,
)

__all__ = [
    "Dataset",
    "EmbeddingNet",
    "EtmError",
    "distance_matrix",
    "episode_loss",
    "evaluate",
    "generate_synthetic",
    "infer",
    "load_csv",
    "lr_at",
    "mine",
    "proto_infer",
    "proto_loss",
    "prototypes",
    "pseudo_label",
    "run_experiment",
    "save_csv",
    "split",
    "train",
]


def train(labeled, unlabeled=None, validation=None, **options):
    """Train a network on episodes.

    Keyword options use the command-line flag names with dashes replaced by
    underscores, e.g. ``train(ds, ns=5, nq=5, episodes=500, embed_dim=32)``.
    Returns ``(net, log, checkpoint)`` where ``log`` is a list of dicts and
    ``checkpoint`` a dict.
    """
    flags = {k.replace("_", "-"): v for k, v in options.items()}
    net, log, checkpoint = _core.train(labeled, unlabeled, json.dumps(flags), validation)
    return net, [json.loads(line) for line in log.splitlines()], json.loads(checkpoint)


def run_experiment(config, out_dir=None):
    """Run an experiment config (dict) and return its summary rows."""
    return json.loads(_core.run_experiment(json.dumps(config), out_dir))
