"""SGD and Adam parameter updates over named tensor dicts."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Sgd:
    """Plain stochastic gradient descent: p <- p - lr * g."""

    kind = "sgd"

    def __init__(self, learning_rate: float = 1e-4):
        if learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        self.learning_rate = float(learning_rate)
        self.step_count = 0

    def step(self, params: dict[str, Tensor]) -> None:
        self.step_count += 1
        for name, p in params.items():
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeError(f"sgd: grad shape {p.grad.shape} vs param {p.data.shape} ({name})")
            p.data -= self.learning_rate * p.grad

    def state_dict(self) -> dict:
        return {"kind": self.kind, "learning_rate": self.learning_rate, "step_count": self.step_count}

    def load_state_dict(self, state: dict) -> None:
        self.learning_rate = float(state["learning_rate"])
        self.step_count = int(state["step_count"])

    def moment_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_moment_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        pass


class Adam:
    """Adam with the original bias-corrected moment estimates."""

    kind = "adam"

    def __init__(self, learning_rate: float = 1e-4, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        if learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for name, p in params.items():
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeError(f"adam: grad shape {p.grad.shape} vs param {p.data.shape} ({name})")
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self.m[name] = m
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "kind": self.kind,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step_count": self.step_count,
        }

    def load_state_dict(self, state: dict) -> None:
        self.learning_rate = float(state["learning_rate"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])
        self.step_count = int(state["step_count"])

    def moment_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, arr in self.m.items():
            out[f"m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"v.{name}"] = arr
        return out

    def load_moment_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.m = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("m.")}
        self.v = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("v.")}


def make_optimizer(kind: str, learning_rate: float):
    if kind == "sgd":
        return Sgd(learning_rate)
    if kind == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer kind {kind!r}")


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
