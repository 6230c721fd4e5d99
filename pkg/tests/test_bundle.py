import numpy as np
import pytest

import nestedkrig as nk
from nestedkrig.bundle import data_fingerprint, load_bundle, save_bundle
from nestedkrig.exceptions import NestedKrigError, OutputExists


def make_bundle(path, force=False):
    X = np.array([[0.1], [0.4], [0.8]])
    y = np.array([1.0, -0.5, 0.25])
    part = nk.Partition(labels=np.array([0, 0, 1]), p=2)
    tree = nk.AggregationTree.flat(3, 2)
    kernel = nk.KernelSpec("matern32", 1.5, (0.2,))
    save_bundle(path, kernel=kernel, X=X, y=y, partition=part, tree=tree,
                sigma2=1.5, y_offset=0.25, config_echo=["kernel.family=matern32"],
                force=force)
    return X, y


class TestBundle:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "m.json"
        X, y = make_bundle(path)
        loaded = load_bundle(path)
        np.testing.assert_array_equal(loaded["X"], X)
        np.testing.assert_array_equal(loaded["y"], y)
        assert loaded["kernel"] == nk.KernelSpec("matern32", 1.5, (0.2,))
        assert loaded["sigma2"] == 1.5
        assert loaded["y_offset"] == 0.25
        assert loaded["tree"].layer_sizes == [2, 1]
        assert loaded["partition"].p == 2
        assert loaded["config"] == ["kernel.family=matern32"]

    def test_refuses_overwrite(self, tmp_path):
        path = tmp_path / "m.json"
        make_bundle(path)
        with pytest.raises(OutputExists):
            make_bundle(path)
        make_bundle(path, force=True)

    def test_tamper_warns(self, tmp_path):
        import json

        path = tmp_path / "m.json"
        make_bundle(path)
        # swap in a different response vector without refreshing the hash
        payload = json.loads(path.read_text())
        payload["y"] = [9.0, -0.5, 0.25]
        path.write_text(json.dumps(payload))
        with pytest.warns(UserWarning, match="fingerprint"):
            load_bundle(path)

    def test_rejects_foreign_json(self, tmp_path):
        path = tmp_path / "w.json"
        path.write_text('{"hello": 1}')
        with pytest.raises(NestedKrigError):
            load_bundle(path)

    def test_fingerprint_sensitive_to_data(self):
        X = np.array([[0.1], [0.2]])
        y = np.array([1.0, 2.0])
        base = data_fingerprint(X, y)
        assert data_fingerprint(X, y) == base
        assert data_fingerprint(X, y + 1e-12) != base
        assert data_fingerprint(X + 1e-12, y) != base
