"""Model training, persistence and prediction service."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from noisyneighbor.core.baseline import ThresholdRule
from noisyneighbor.core.config import AppConfig
from noisyneighbor.core.detector import MODEL_KINDS, Detector, DetectorSpec
from noisyneighbor.core.errors import ModelFileError
from noisyneighbor.core.features import EXPANSIONS, Standardizer
from noisyneighbor.core.file_utils import FileUtils
from noisyneighbor.core.forest import DecisionTree, ForestHyperparams, ForestModel
from noisyneighbor.core.svm import SvmHyperparams, SvmModel
from noisyneighbor.core.telemetry import Dataset

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _encode_tree(tree: DecisionTree) -> list[list]:
    """Pre-order rows ``[feature, threshold, quiet, noisy]``; feature -1 marks a leaf."""
    return [
        [int(tree.feature[i]), float(tree.threshold[i]), int(tree.counts[i, 0]), int(tree.counts[i, 1])]
        for i in range(tree.n_nodes)
    ]


def _decode_tree(rows: list[list]) -> DecisionTree:
    """Rebuild child links from a pre-order node list."""
    if not rows:
        raise ModelFileError("tree has no nodes")
    try:
        feature = np.array([int(r[0]) for r in rows])
        threshold = np.array([float(r[1]) for r in rows])
        counts = np.array([[int(r[2]), int(r[3])] for r in rows])
    except (TypeError, ValueError, IndexError) as e:
        raise ModelFileError(f"malformed tree node: {e}") from e
    left = np.full(len(rows), -1)
    right = np.full(len(rows), -1)
    awaiting_right: list[int] = []
    for i in range(len(rows)):
        if i > 0:
            if feature[i - 1] >= 0:
                left[i - 1] = i
            elif awaiting_right:
                right[awaiting_right.pop()] = i
            else:
                raise ModelFileError("tree node list has nodes after a complete tree")
        if feature[i] >= 0:
            awaiting_right.append(i)
    if awaiting_right:
        raise ModelFileError("tree node list ends before every split has two children")
    return DecisionTree(feature, threshold, left, right, counts)


def _encode_model(detector: Detector) -> dict[str, Any]:
    model = detector.model
    if detector.kind == "svm":
        return {
            "support_vectors": model.support_vectors.tolist(),
            "alphas": model.alphas.tolist(),
            "labels": [int(v) for v in model.labels],
            "bias": model.bias,
            "gamma": model.gamma,
            "C": model.C,
        }
    if detector.kind == "forest":
        return {
            "tie_break": model.tie_break,
            "seed": model.seed,
            "n_features": model.n_features,
            "trees": [_encode_tree(t) for t in model.trees],
        }
    return {
        "feature": model.feature,
        "direction": model.direction,
        "threshold": model.threshold,
        "training_f1": model.training_f1,
    }


def _decode_model(kind: str, payload: dict[str, Any]):
    if kind == "svm":
        alphas = payload["alphas"]
        vectors = np.array(payload["support_vectors"], dtype=float).reshape(len(alphas), -1)
        return SvmModel(vectors, alphas, payload["labels"], float(payload["bias"]),
                        float(payload["gamma"]), float(payload["C"]))
    if kind == "forest":
        trees = tuple(_decode_tree(rows) for rows in payload["trees"])
        return ForestModel(trees, int(payload["tie_break"]), int(payload["seed"]), int(payload["n_features"]))
    return ThresholdRule(int(payload["feature"]), int(payload["direction"]),
                         float(payload["threshold"]), float(payload.get("training_f1", 0.0)))


def emit_model_file(detector: Detector, descriptor: str = "", seed: int = 0) -> str:
    """Render a fitted detector as a versioned JSON document."""
    document = {
        "format_version": FORMAT_VERSION,
        "model_kind": detector.kind,
        "descriptor": descriptor,
        "seed": seed,
        "standardizer": {"means": list(detector.standardizer.means), "stds": list(detector.standardizer.stds)},
        "expansion": detector.expansion,
        "expand_first": detector.expand_first,
        "payload": _encode_model(detector),
    }
    return json.dumps(document, indent=1) + "\n"


def parse_model_file(text: str) -> Detector:
    """Rebuild a detector from :func:`emit_model_file` output.

    Raises:
        ModelFileError: Bad JSON, unsupported version, unknown kind or a
            payload that does not match the kind.
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"model file is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ModelFileError("model file must hold a JSON object")
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {version!r}; expected {FORMAT_VERSION}")
    kind = document.get("model_kind")
    if kind not in MODEL_KINDS:
        raise ModelFileError(f"unknown model_kind {kind!r}")
    expansion = document.get("expansion", "none")
    if expansion not in EXPANSIONS:
        raise ModelFileError(f"unknown expansion {expansion!r}")
    try:
        standardizer = Standardizer(
            tuple(float(v) for v in document["standardizer"]["means"]),
            tuple(float(v) for v in document["standardizer"]["stds"]),
        )
        model = _decode_model(kind, document["payload"])
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f"payload does not describe a {kind} model: {e}") from e
    return Detector(kind, standardizer, expansion, bool(document.get("expand_first", False)), model)


class ModelService:
    """Service for building, training, saving and applying detectors."""

    def __init__(self, config: AppConfig):
        """Initialize model service.

        Args:
            config: Defaults for every hyperparameter not given explicitly
        """
        self.config = config

    def build_spec(
        self,
        kind: str,
        c: float | None = None,
        gamma: float | None = None,
        trees: int | None = None,
        min_leaf: int | None = None,
        expansion: str | None = None,
        expand_first: bool | None = None,
    ) -> DetectorSpec:
        """Assemble a detector spec, filling gaps from the configuration.

        The SVM defaults to the configured expansion (quadratic); the other
        kinds default to no expansion.
        """
        cfg = self.config
        if expansion is None:
            expansion = cfg.svm_expansion if kind == "svm" else "none"
        return DetectorSpec(
            kind=kind,
            expansion=expansion,
            expand_first=cfg.expand_first if expand_first is None else expand_first,
            svm=SvmHyperparams(
                C=cfg.svm_c if c is None else c,
                gamma=cfg.svm_gamma if gamma is None else gamma,
                kkt_tol=cfg.kkt_tol,
            ),
            forest=ForestHyperparams(
                n_trees=cfg.n_trees if trees is None else trees,
                min_leaf=cfg.min_leaf if min_leaf is None else min_leaf,
                seed=cfg.seed,
            ),
            n_jobs=cfg.n_jobs,
        )

    def train(self, spec: DetectorSpec, dataset: Dataset, seed: int | None = None) -> Detector:
        """Fit ``spec`` on the whole dataset."""
        seed = self.config.seed if seed is None else seed
        logger.info("training %s on %d windows (seed %d)", spec.describe(), len(dataset), seed)
        return spec.fit(dataset.features, dataset.labels, seed)

    def save(self, detector: Detector, path: Path | str, descriptor: str = "", seed: int = 0) -> Path:
        path = FileUtils.write_text_file(path, emit_model_file(detector, descriptor, seed))
        logger.info("wrote %s model to %s", detector.kind, path)
        return path

    def load(self, path: Path | str) -> Detector:
        return parse_model_file(FileUtils.read_text_file(path))

    def predict(self, detector: Detector, dataset: Dataset) -> np.ndarray:
        if len(dataset) == 0:
            return np.empty(0, dtype=int)
        return detector.predict(dataset.features)
