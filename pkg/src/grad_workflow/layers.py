"""Parameter containers shared by the encoders, graph layer and heads."""

import math

import numpy as np

from .tensor import Tensor, get_dtype, parameter, linear


class Module:
    """Collects parameter tensors from attributes (recursively) with dotted names."""

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, dict):
                for k in val:
                    if isinstance(val[k], Module):
                        yield from val[k].named_parameters(f"{prefix}{key}.{k}.")
                    elif isinstance(val[k], Tensor) and val[k].requires_grad:
                        yield f"{prefix}{key}.{k}", val[k]

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        if strict:
            missing = set(own) - set(state)
            extra = set(state) - set(own)
            if missing or extra:
                raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, arr in state.items():
            if name not in own:
                continue
            p = own[name]
            if tuple(p.shape) != tuple(np.shape(arr)):
                raise ValueError(f"shape mismatch for {name}: {p.shape} vs {np.shape(arr)}")
            p.data = np.array(arr, dtype=p.data.dtype)

    def zero_(self):
        for p in self.parameters():
            p.data[...] = 0


def glorot(rng, fan_in, fan_out, shape):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(shape, -limit, limit).astype(get_dtype()))


def he_normal(rng, fan_in, shape):
    return parameter(rng.normal(shape, 0.0, math.sqrt(2.0 / fan_in)).astype(get_dtype()))


def zeros(shape):
    return parameter(np.zeros(shape, dtype=get_dtype()))


class Linear(Module):
    def __init__(self, rng, n_in, n_out, bias=True):
        self.w = glorot(rng, n_in, n_out, (n_in, n_out))
        self.b = zeros((n_out,)) if bias else None

    def __call__(self, x):
        return linear(x, self.w, self.b)
