"""
Минимальное обратное автодифференцирование для многослойных перцептронов.

Прямой проход записывает операции на ленту (Tape), обратный проход
воспроизводит их в обратном порядке, накапливая градиент по плоскому вектору
параметров и возвращая градиент по входу. Этого достаточно для актора и
критиков SAC; общая тензорная библиотека не требуется.
"""

from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Iterator, List, Sequence, Tuple
import hashlib

import numpy as np

from ..models.errors import DimensionMismatchError


class MlpHead(Enum):
    """Выходная голова сети"""
    LINEAR = "linear"
    SQUASHED_GAUSSIAN = "squashed_gaussian"   # выход = [mean, log_std]


_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Архитектура перцептрона"""
    input_dim: int
    hidden_sizes: Tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    head: MlpHead = MlpHead.LINEAR

    def __post_init__(self) -> None:
        object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"all MLP dimensions must be >= 1, got {self}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {_ACTIVATIONS}")
        if self.head is MlpHead.SQUASHED_GAUSSIAN and self.output_dim % 2:
            raise ValueError("squashed-Gaussian head needs an even output_dim (mean and log-std)")

    def layer_shapes(self) -> List[Tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_sizes, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    def num_params(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_shapes())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_dim': self.input_dim,
            'hidden_sizes': list(self.hidden_sizes),
            'output_dim': self.output_dim,
            'activation': self.activation,
            'head': self.head.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> MlpSpec:
        return cls(
            input_dim=int(data['input_dim']),
            hidden_sizes=tuple(data['hidden_sizes']),
            output_dim=int(data['output_dim']),
            activation=data.get('activation', 'relu'),
            head=MlpHead(data.get('head', 'linear')),
        )


@dataclass(frozen=True)
class LayerLayout:
    """Положение весов и смещений слоя в плоском векторе"""
    weight_offset: int
    fan_in: int
    fan_out: int

    @property
    def bias_offset(self) -> int:
        return self.weight_offset + self.fan_in * self.fan_out

    @property
    def end(self) -> int:
        return self.bias_offset + self.fan_out

    def to_dict(self) -> Dict[str, int]:
        return {'weight_offset': self.weight_offset, 'fan_in': self.fan_in, 'fan_out': self.fan_out}


def param_layout(spec: MlpSpec) -> Tuple[LayerLayout, ...]:
    layout = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes():
        layer = LayerLayout(weight_offset=offset, fan_in=fan_in, fan_out=fan_out)
        layout.append(layer)
        offset = layer.end
    return tuple(layout)


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Плоский вектор всех весов и смещений сети с описанием раскладки"""
    values: np.ndarray
    layout: Tuple[LayerLayout, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        expected = self.layout[-1].end if self.layout else 0
        if values.shape != (expected,):
            raise DimensionMismatchError("parameter vector", expected, values.size)
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter vector contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, spec: MlpSpec) -> ParamVector:
        return cls(np.zeros(spec.num_params()), param_layout(spec))

    @classmethod
    def initialize(cls, spec: MlpSpec, rng: np.random.Generator) -> ParamVector:
        """Равномерная инициализация U(-1/sqrt(fan_in), 1/sqrt(fan_in)) для весов и смещений"""
        layout = param_layout(spec)
        values = np.empty(spec.num_params())
        for layer in layout:
            bound = 1.0 / np.sqrt(layer.fan_in)
            values[layer.weight_offset:layer.end] = rng.uniform(-bound, bound, layer.end - layer.weight_offset)
        return cls(values, layout)

    @classmethod
    def from_layers(cls, spec: MlpSpec, layers: Sequence[Tuple[np.ndarray, np.ndarray]]) -> ParamVector:
        """Сборка вектора из списка пар (W[fan_in, fan_out], b[fan_out])"""
        layout = param_layout(spec)
        if len(layers) != len(layout):
            raise DimensionMismatchError("layers", len(layout), len(layers))
        values = np.empty(spec.num_params())
        for layer, (weight, bias) in zip(layout, layers):
            weight = np.asarray(weight, dtype=np.float64)
            bias = np.asarray(bias, dtype=np.float64)
            if weight.shape != (layer.fan_in, layer.fan_out) or bias.shape != (layer.fan_out,):
                raise ValueError(f"layer shapes {weight.shape}/{bias.shape} do not match "
                                 f"({layer.fan_in}, {layer.fan_out})")
            values[layer.weight_offset:layer.bias_offset] = weight.ravel()
            values[layer.bias_offset:layer.end] = bias
        return cls(values, layout)

    def with_values(self, values: np.ndarray) -> ParamVector:
        return ParamVector(values, self.layout)

    def layers(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        for layer in self.layout:
            weight = self.values[layer.weight_offset:layer.bias_offset].reshape(layer.fan_in, layer.fan_out)
            bias = self.values[layer.bias_offset:layer.end]
            yield weight, bias

    def fingerprint(self) -> str:
        return hashlib.sha256(self.values.astype('<f8').tobytes()).hexdigest()[:16]

    def __len__(self) -> int:
        return self.values.size


class Tape:
    """
    Лента операций прямого прохода

    Каждая операция сохраняет замыкание, которое по градиенту выхода
    накапливает градиент параметров и возвращает градиент входа.
    """

    def __init__(self, num_params: int):
        self.param_grad = np.zeros(num_params)
        self._ops: List[Callable[[np.ndarray], np.ndarray]] = []

    def push(self, backward_fn: Callable[[np.ndarray], np.ndarray]) -> None:
        self._ops.append(backward_fn)

    def linear(self, x: np.ndarray, weight: np.ndarray, bias: np.ndarray, layer: LayerLayout) -> np.ndarray:
        grad = self.param_grad

        def backward(upstream: np.ndarray) -> np.ndarray:
            grad[layer.weight_offset:layer.bias_offset] += (x.T @ upstream).ravel()
            grad[layer.bias_offset:layer.end] += upstream.sum(axis=0)
            return upstream @ weight.T

        self.push(backward)
        return x @ weight + bias

    def activation(self, pre: np.ndarray, kind: str) -> np.ndarray:
        if kind == "relu":
            active = pre > 0.0
            self.push(lambda upstream: upstream * active)
            return np.where(active, pre, 0.0)
        out = np.tanh(pre)
        self.push(lambda upstream: upstream * (1.0 - out * out))
        return out

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        grad = upstream
        for backward_fn in reversed(self._ops):
            grad = backward_fn(grad)
        return grad


def _as_batch(spec: MlpSpec, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise DimensionMismatchError("MLP input", spec.input_dim, batch.shape[-1] if batch.ndim else 0)
    if not np.all(np.isfinite(batch)):
        raise ValueError("MLP input contains non-finite entries")
    return batch, single


def _check_params(spec: MlpSpec, params: ParamVector) -> None:
    if params.values.size != spec.num_params():
        raise DimensionMismatchError("parameter vector", spec.num_params(), params.values.size)


def _run(spec: MlpSpec, params: ParamVector, batch: np.ndarray, tape: Tape = None) -> np.ndarray:
    h = batch
    last = len(params.layout) - 1
    for index, (layer, (weight, bias)) in enumerate(zip(params.layout, params.layers())):
        if tape is None:
            h = h @ weight + bias
            if index < last:
                h = np.maximum(h, 0.0) if spec.activation == "relu" else np.tanh(h)
        else:
            h = tape.linear(h, weight, bias, layer)
            if index < last:
                h = tape.activation(h, spec.activation)
    return h


def forward(spec: MlpSpec, params: ParamVector, x: np.ndarray) -> np.ndarray:
    """
    Прямой проход

    x - вектор входа или батч [B, input_dim]; форма выхода соответствует форме входа.
    """
    _check_params(spec, params)
    batch, single = _as_batch(spec, x)
    out = _run(spec, params, batch)
    return out[0] if single else out


def backward(spec: MlpSpec,
             params: ParamVector,
             x: np.ndarray,
             upstream_gradient: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Обратный проход

    Returns:
        (градиент по параметрам - плоский массив раскладки params,
         градиент по входу той же формы, что x).
        Для батча градиенты параметров суммируются по примерам.
    """
    _check_params(spec, params)
    batch, single = _as_batch(spec, x)
    upstream = np.asarray(upstream_gradient, dtype=np.float64)
    upstream = upstream[None, :] if single else upstream
    if upstream.shape != (batch.shape[0], spec.output_dim):
        raise DimensionMismatchError("upstream gradient", spec.output_dim, upstream.shape[-1])

    tape = Tape(spec.num_params())
    _run(spec, params, batch, tape)
    input_grad = tape.backward(upstream)
    return tape.param_grad, (input_grad[0] if single else input_grad)


def forward_backward(spec: MlpSpec,
                     params: ParamVector,
                     x: np.ndarray) -> Tuple[np.ndarray, Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]]:
    """Прямой проход с возвратом функции обратного прохода (одна лента на оба прохода)"""
    _check_params(spec, params)
    batch, _ = _as_batch(spec, x)
    tape = Tape(spec.num_params())
    out = _run(spec, params, batch, tape)

    def pullback(upstream: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != out.shape:
            raise DimensionMismatchError("upstream gradient", spec.output_dim, upstream.shape[-1])
        input_grad = tape.backward(upstream)
        return tape.param_grad, input_grad

    return out, pullback
