"""Exact JSON round trips for numpy arrays (floats are written with repr precision)."""

import json
import os

import numpy as np


def encode_array(a) -> dict:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"shape": list(a.shape), "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}
    return {"shape": list(a.shape), "data": a.astype(float).ravel().tolist()}


def decode_array(d) -> np.ndarray:
    shape = tuple(d["shape"])
    if "re" in d:
        out = np.empty(shape, dtype=complex)
        out.real = np.asarray(d["re"], dtype=float).reshape(shape)
        out.imag = np.asarray(d["im"], dtype=float).reshape(shape)
        return out
    return np.asarray(d["data"], dtype=float).reshape(shape)


def dump(obj, path):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w") as fh:
            json.dump(obj, fh)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def load(path):
    with open(path) as fh:
        return json.load(fh)
