"""Gradient-descent optimizers and parameter checkpointing."""

from __future__ import annotations

import json
from typing import Mapping

import numpy as np

from .autodiff import Tensor

CHECKPOINT_FORMAT = "factdecay-params"
CHECKPOINT_VERSION = 1


def _check_finite(name: str, grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        raise ValueError(f"non-finite gradient in parameter {name!r}")


class SGD:
    def __init__(self, params: Mapping[str, Tensor], lr: float):
        self.params = dict(params)
        self.lr = float(lr)

    def step(self) -> None:
        """Apply one descent step and zero the gradients."""
        for name, p in self.params.items():
            if p.grad is None:
                continue
            _check_finite(name, p.grad)
            p.data -= self.lr * p.grad
        self.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


class Adam:
    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        """Bias-corrected moment update; gradients are zeroed afterwards."""
        self.t += 1
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            _check_finite(name, g)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def make_optimizer(name: str, params: Mapping[str, Tensor], lr: float):
    if name == "sgd":
        return SGD(params, lr)
    if name == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {name!r} (expected 'sgd' or 'adam')")


def save_params(params: Mapping[str, Tensor], path) -> None:
    """Write parameters as a versioned JSON map name -> (shape, flat data)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "params": {
            name: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_params(path) -> dict[str, Tensor]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    params = {}
    for name, entry in payload["params"].items():
        data = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params[name] = Tensor(data, requires_grad=True)
    return params
