import json

import numpy as np
import pytest

from noisyneighbor.core.config import AppConfig
from noisyneighbor.core.errors import ModelFileError
from noisyneighbor.services.model_service import ModelService, emit_model_file, parse_model_file


@pytest.fixture
def service():
    return ModelService(AppConfig(n_trees=7, seed=4))


@pytest.mark.parametrize("kind", ["svm", "forest", "threshold"])
def test_model_file_round_trip(service, separable_dataset, kind):
    spec = service.build_spec(kind)
    detector = service.train(spec, separable_dataset)
    text = emit_model_file(detector, spec.describe(), seed=4)
    restored = parse_model_file(text)
    assert restored.kind == kind
    assert restored.expansion == detector.expansion
    assert restored.standardizer == detector.standardizer
    assert np.array_equal(restored.predict(separable_dataset.features), detector.predict(separable_dataset.features))
    assert emit_model_file(restored, spec.describe(), seed=4) == text


def test_forest_trees_survive(service, separable_dataset):
    detector = service.train(service.build_spec("forest"), separable_dataset)
    restored = parse_model_file(emit_model_file(detector))
    for a, b in zip(detector.model.trees, restored.model.trees):
        assert np.array_equal(a.left, b.left)
        assert np.array_equal(a.right, b.right)
        assert np.array_equal(a.threshold, b.threshold)


def test_build_spec_defaults(service):
    svm = service.build_spec("svm")
    assert svm.expansion == "quadratic"
    assert svm.svm.C == pytest.approx(14.44)
    forest = service.build_spec("forest", trees=12, min_leaf=2)
    assert forest.expansion == "none"
    assert (forest.forest.n_trees, forest.forest.min_leaf) == (12, 2)
    assert service.build_spec("forest").forest.n_trees == 7


def test_save_load_predict(tmp_path, service, separable_dataset):
    detector = service.train(service.build_spec("threshold"), separable_dataset)
    path = service.save(detector, tmp_path / "models" / "rule.json", "threshold", seed=4)
    document = json.loads(path.read_text())
    assert document["format_version"] == 1
    assert document["model_kind"] == "threshold"
    assert document["seed"] == 4
    loaded = service.load(path)
    assert np.array_equal(service.predict(loaded, separable_dataset), detector.predict(separable_dataset.features))
    assert service.predict(loaded, separable_dataset.subset([])).size == 0


def _document(service, dataset):
    return json.loads(emit_model_file(service.train(service.build_spec("forest"), dataset)))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(format_version=2),
        lambda d: d.update(model_kind="knn"),
        lambda d: d.update(expansion="cubic"),
        lambda d: d["payload"].pop("trees"),
        lambda d: d["payload"]["trees"][0].pop(),
        lambda d: d["payload"]["trees"][0].append([-1, 0.0, 1, 0]),
        lambda d: d["payload"].update(trees=[[]]),
    ],
)
def test_rejects_bad_documents(service, separable_dataset, mutate):
    document = _document(service, separable_dataset)
    mutate(document)
    with pytest.raises(ModelFileError):
        parse_model_file(json.dumps(document))


def test_rejects_non_json():
    with pytest.raises(ModelFileError):
        parse_model_file("model")
    with pytest.raises(ModelFileError):
        parse_model_file("[1, 2]")
