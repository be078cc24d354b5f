"""Parameter/Module containers: named parameter trees, train/eval mode,
and flat state dicts for checkpointing."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Parameter(Tensor):
    """A learnable Tensor; gets its dotted name when registered on a Module."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


class Module:
    """Minimal layer container with torch-like attribute registration."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def register_buffer(self, key: str, value: np.ndarray):
        """Non-learnable state (e.g. batch-norm running stats)."""
        self._buffers[key] = value
        object.__setattr__(self, key, value)

    # -- traversal -------------------------------------------------------

    def named_parameters(self, prefix: str = ""):
        for key, p in self._params.items():
            yield (prefix + key, p)
        for key, mod in self._modules.items():
            yield from mod.named_parameters(prefix + key + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for key, b in self._buffers.items():
            yield (prefix + key, b)
        for key, mod in self._modules.items():
            yield from mod.named_buffers(prefix + key + ".")

    def modules(self):
        yield self
        for mod in self._modules.values():
            yield from mod.modules()

    # -- mode / grads ------------------------------------------------------

    def train(self, flag: bool = True):
        for mod in self.modules():
            object.__setattr__(mod, "training", flag)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    # -- state dicts -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array map of parameters and buffers."""
        state = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            if name in state:
                raise ValueError(f"duplicate state name '{name}'")
            state[name] = b
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray], strict: bool = True):
        own = self.state_arrays()
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise KeyError(f"state mismatch: missing={missing} extra={extra}")
        for name, arr in own.items():
            if name not in state:
                continue
            src = np.asarray(state[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for '{name}': {src.shape} vs {arr.shape}")
            arr[...] = src

    def assign_parameter_names(self, prefix: str = ""):
        """Stamp each Parameter with its dotted path; names must be unique."""
        seen = set()
        for name, p in self.named_parameters(prefix):
            if name in seen:
                raise ValueError(f"duplicate parameter name '{name}'")
            seen.add(name)
            p.name = name
        return self
