"""Named parameter store with Adam updates and a reduce-on-plateau scheduler."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class ParamStore:
    """Named trainable tensors, each with a gradient slot and Adam moments."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def frozen_view(self) -> "FrozenParams":
        """Read-only snapshot: same names, constant tensors, no tape recording."""
        return FrozenParams({name: Tensor(t.data) for name, t in self.params.items()})

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Current values as plain float32 arrays (checkpoint payload)."""
        return {name: np.asarray(t.data, dtype=np.float32).copy()
                for name, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            if name not in arrays:
                raise KeyError(f"missing parameter in checkpoint: {name}")
            src = np.asarray(arrays[name], dtype=self.dtype)
            if src.shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: expected {t.data.shape}, got {src.shape}")
            t.data = src.copy()

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> None:
        """Bias-corrected Adam update; gradient slots are zeroed afterwards."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            g = np.asarray(g, dtype=p.data.dtype)
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        self.zero_grad()


class FrozenParams:
    """Immutable name -> constant-Tensor mapping for inference workers."""

    def __init__(self, params: dict[str, Tensor]):
        self.params = params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params


class PlateauScheduler:
    """Multiply lr by `factor` after `patience` epochs without improvement.

    The monitored metric is fed once per epoch via step(); the counter
    resets after every reduction, so 22 flat epochs with patience 10
    produce exactly two reductions.
    """

    def __init__(self, lr: float, factor: float = 0.1, patience: int = 10,
                 mode: str = "max", min_lr: float = 0.0):
        if mode not in ("max", "min"):
            raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.mode = mode
        self.min_lr = min_lr
        self.best: float | None = None
        self.bad_epochs = 0

    def _improved(self, metric: float) -> bool:
        if self.best is None:
            return True
        if self.mode == "max":
            return metric > self.best
        return metric < self.best

    def step(self, metric: float) -> float:
        """Record one epoch's monitored value; returns the (possibly reduced) lr."""
        if self._improved(metric):
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr
