"""Self-contained model bundles: versioned JSON, portable across machines.

A bundle stores everything prediction needs: kernel parameters, the design
and responses, group labels, the aggregation tree, the fitted process
variance and a fingerprint of the training data.  The fingerprint is
recomputed at load time so corrupted or hand-edited bundles are flagged.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings

import numpy as np

from .data import Partition
from .exceptions import NestedKrigError, OutputExists
from .kernels import KernelSpec
from .tree import AggregationTree

BUNDLE_VERSION = 1


def data_fingerprint(X, y) -> str:
    """SHA-256 over the canonical little-endian bytes of the training data."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<f8").tobytes())
    return h.hexdigest()


def save_bundle(path, *, kernel: KernelSpec, X, y, partition: Partition,
                tree: AggregationTree, sigma2: float, y_offset: float = 0.0,
                config_echo=(), force: bool = False):
    """Write a model bundle; refuses to overwrite unless ``force``."""
    if os.path.exists(path) and not force:
        raise OutputExists(f"{path} already exists; pass force to overwrite")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    payload = {
        "format": "nestedkrig-bundle",
        "version": BUNDLE_VERSION,
        "kernel": {
            "family": kernel.family,
            "variance": kernel.variance,
            "lengthscales": list(kernel.lengthscales),
        },
        "sigma2": float(sigma2),
        "y_offset": float(y_offset),
        "labels": partition.labels.tolist(),
        "p": partition.p,
        "tree": {
            "n_leaves": tree.n_leaves,
            "n_layer1": tree.n_layer1,
            "levels": [[list(node) for node in level] for level in tree.levels],
        },
        "X": X.tolist(),
        "y": y.tolist(),
        "fingerprint": data_fingerprint(X, y),
        "config": list(config_echo),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_bundle(path) -> dict:
    """Read a bundle back; returns a dict of reconstructed objects.

    Warns when the stored fingerprint does not match the embedded data.
    """
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "nestedkrig-bundle":
        raise NestedKrigError(f"{path} is not a model bundle")
    if payload.get("version") != BUNDLE_VERSION:
        raise NestedKrigError(
            f"unsupported bundle version {payload.get('version')}")
    kernel = KernelSpec(payload["kernel"]["family"],
                        payload["kernel"]["variance"],
                        tuple(payload["kernel"]["lengthscales"]))
    X = np.asarray(payload["X"], dtype=float)
    y = np.asarray(payload["y"], dtype=float)
    if data_fingerprint(X, y) != payload["fingerprint"]:
        warnings.warn(f"{path}: data fingerprint mismatch; the bundle was "
                      "modified after fitting")
    tree = AggregationTree(
        n_leaves=payload["tree"]["n_leaves"],
        n_layer1=payload["tree"]["n_layer1"],
        levels=tuple(tuple(tuple(node) for node in level)
                     for level in payload["tree"]["levels"]))
    partition = Partition(labels=np.asarray(payload["labels"], dtype=int),
                          p=payload["p"])
    return {
        "kernel": kernel,
        "X": X,
        "y": y,
        "partition": partition,
        "tree": tree,
        "sigma2": payload["sigma2"],
        "y_offset": payload["y_offset"],
        "config": payload.get("config", []),
    }
