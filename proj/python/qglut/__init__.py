"""Score-conditioned LUT image enhancement.

Images are float32 arrays of shape (H, W, 3) with sRGB values in [0, 1].
"""

import json as _json

from ._core import (
    Engine,
    Model,
    QglutError,
    classify_skin_tone,
    compute_mos,
    evaluate,
    kmeans,
    lab_to_srgb,
    process_ratings,
    read_png,
    silhouette,
    srgb_to_lab,
    synth_perturb,
    write_png,
)
from . import _core

QglutError.code = property(lambda self: self.args[0])


Model.architecture = property(lambda self: _json.loads(self._architecture))


def identity_model(seed=0, **arch):
    """Freshly initialised model (an identity transform) with reference skin-tone centres."""
    return Model._identity(_json.dumps(arch) if arch else "", seed)


def load_model(path):
    return Model.load(str(path))


def train(pairs, epochs, lr=1e-4, seed=0, grad_clip=1.0, **arch):
    """Train from dicts with raw, target, score and label or mask. Returns (model, curve)."""
    return _core.train(list(pairs), epochs, lr, seed, _json.dumps(arch) if arch else "", grad_clip)


def finetune(model, pairs, epochs, lr=1e-4, seed=0, grad_clip=1.0):
    return _core.finetune(model, list(pairs), epochs, lr, seed, grad_clip)


def process_ratings_report(rows):
    out = process_ratings(rows)
    out["report"] = _json.loads(out["report"])
    return out


__all__ = [
    "Engine",
    "Model",
    "QglutError",
    "classify_skin_tone",
    "compute_mos",
    "evaluate",
    "finetune",
    "identity_model",
    "kmeans",
    "lab_to_srgb",
    "load_model",
    "process_ratings",
    "process_ratings_report",
    "read_png",
    "silhouette",
    "srgb_to_lab",
    "synth_perturb",
    "train",
    "write_png",
]
