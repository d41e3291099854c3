# -*- coding: utf-8 -*-
# ------------------------------------------------------------------------------
#
#   Copyright 2024 Valory AG
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.
#
# ------------------------------------------------------------------------------

"""This module contains the branching dueling Q-network and its checkpoint format."""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from aea.exceptions import enforce

from packages.valory.skills.attractor_control.exceptions import CheckpointError


CHECKPOINT_MAGIC = b"BDQN"
CHECKPOINT_VERSION = 1
ACTIONS_PER_BRANCH = 2  # keep, flip

_HEADER = struct.Struct("<4sHII")
_TENSOR_HEADER = struct.Struct("<HB")
_DIM = struct.Struct("<I")


@dataclass
class QNetworkParams:
    """
    The parameter tensors of a branching dueling Q-network.

    A trunk of fully connected rectified-linear layers feeds a value stream
    (one hidden layer, scalar output) and one advantage stream per gene (one
    hidden layer, two outputs: keep and flip). Branch tensors carry the gene
    as their leading axis.
    """

    tensors: Dict[str, np.ndarray]

    @property
    def trunk_depth(self) -> int:
        """Number of trunk layers."""
        return sum(
            1
            for name in self.tensors
            if name.startswith("trunk.") and name.endswith(".weight")
        )

    @property
    def input_width(self) -> int:
        """Expected observation width (2n)."""
        return int(self.tensors["trunk.0.weight"].shape[0])

    @property
    def branches(self) -> int:
        """Number of advantage branches (n)."""
        return int(self.tensors["branch.out.weight"].shape[0])

    @property
    def dtype(self) -> np.dtype:
        """The floating point type of the tensors."""
        return self.tensors["trunk.0.weight"].dtype

    def copy(self) -> "QNetworkParams":
        """A deep copy."""
        return QNetworkParams(
            {name: value.copy() for name, value in self.tensors.items()}
        )

    def astype(self, dtype: Union[type, np.dtype]) -> "QNetworkParams":
        """A copy with every tensor cast to `dtype`."""
        return QNetworkParams(
            {name: value.astype(dtype) for name, value in self.tensors.items()}
        )

    def assign(self, other: "QNetworkParams") -> None:
        """Overwrite the tensors with those of `other`."""
        for name, value in other.tensors.items():
            self.tensors[name][...] = value


def parameter_names(trunk_depth: int) -> List[str]:
    """Tensor names in declaration order."""
    names = []
    for layer in range(trunk_depth):
        names += [f"trunk.{layer}.weight", f"trunk.{layer}.bias"]
    names += [
        "value.hidden.weight",
        "value.hidden.bias",
        "value.out.weight",
        "value.out.bias",
        "branch.hidden.weight",
        "branch.hidden.bias",
        "branch.out.weight",
        "branch.out.bias",
    ]
    return names


def init_params(
    n: int,
    rng: np.random.Generator,
    trunk_widths: Sequence[int] = (128, 128),
    stream_width: int = 64,
    dtype: Union[type, np.dtype] = np.float32,
) -> QNetworkParams:
    """
    He-initialised parameters for an n-gene model; biases start at zero.

    :param n: gene count; the input width is 2n.
    :param rng: the random source.
    :param trunk_widths: widths of the trunk layers.
    :param stream_width: width of the hidden layer of every stream.
    :param dtype: floating point type.
    :return: the parameters.
    """
    enforce(n >= 1 and len(trunk_widths) >= 1, "empty network", ValueError)

    def he(*shape: int) -> np.ndarray:
        fan_in = shape[-2]
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)

    tensors: Dict[str, np.ndarray] = {}
    width = 2 * n
    for layer, out_width in enumerate(trunk_widths):
        tensors[f"trunk.{layer}.weight"] = he(width, out_width)
        tensors[f"trunk.{layer}.bias"] = np.zeros(out_width, dtype=dtype)
        width = out_width
    tensors["value.hidden.weight"] = he(width, stream_width)
    tensors["value.hidden.bias"] = np.zeros(stream_width, dtype=dtype)
    tensors["value.out.weight"] = he(stream_width, 1)
    tensors["value.out.bias"] = np.zeros(1, dtype=dtype)
    tensors["branch.hidden.weight"] = he(n, width, stream_width)
    tensors["branch.hidden.bias"] = np.zeros((n, stream_width), dtype=dtype)
    tensors["branch.out.weight"] = he(n, stream_width, ACTIONS_PER_BRANCH)
    tensors["branch.out.bias"] = np.zeros((n, ACTIONS_PER_BRANCH), dtype=dtype)
    return QNetworkParams(tensors)


@dataclass
class ForwardCache:
    """Intermediate activations kept for backpropagation."""

    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    trunk_output: np.ndarray = field(default_factory=lambda: np.zeros(0))
    value_pre: np.ndarray = field(default_factory=lambda: np.zeros(0))
    value_hidden: np.ndarray = field(default_factory=lambda: np.zeros(0))
    branch_pre: np.ndarray = field(default_factory=lambda: np.zeros(0))
    branch_hidden: np.ndarray = field(default_factory=lambda: np.zeros(0))
    value: np.ndarray = field(default_factory=lambda: np.zeros(0))
    advantages: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def dueling_aggregate(value: np.ndarray, advantages: np.ndarray) -> np.ndarray:
    """
    Combine state values of shape (batch,) with advantages of shape (batch, n, 2).

    :param value: the state values.
    :param advantages: the per-branch advantages.
    :return: the Q-values, same shape as `advantages`.
    """
    return (
        np.asarray(value)[..., None, None]
        + advantages
        - advantages.mean(axis=-1, keepdims=True)
    )


def forward_with_cache(
    params: QNetworkParams, observations: np.ndarray
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Evaluate the network on a batch and keep the activations.

    :param params: the parameters.
    :param observations: array of shape (batch, 2n).
    :return: Q-values of shape (batch, n, 2) and the cache.
    """
    t = params.tensors
    cache = ForwardCache()
    hidden = observations.astype(params.dtype, copy=False)
    for layer in range(params.trunk_depth):
        cache.inputs.append(hidden)
        pre = hidden @ t[f"trunk.{layer}.weight"] + t[f"trunk.{layer}.bias"]
        cache.pre_activations.append(pre)
        hidden = _relu(pre)
    cache.trunk_output = hidden

    cache.value_pre = hidden @ t["value.hidden.weight"] + t["value.hidden.bias"]
    cache.value_hidden = _relu(cache.value_pre)
    value = cache.value_hidden @ t["value.out.weight"] + t["value.out.bias"]
    cache.value = value[:, 0]

    cache.branch_pre = (
        np.einsum("bh,dhs->bds", hidden, t["branch.hidden.weight"])
        + t["branch.hidden.bias"]
    )
    cache.branch_hidden = _relu(cache.branch_pre)
    cache.advantages = (
        np.einsum("bds,dsa->bda", cache.branch_hidden, t["branch.out.weight"])
        + t["branch.out.bias"]
    )
    return dueling_aggregate(cache.value, cache.advantages), cache


def forward(params: QNetworkParams, observation: np.ndarray) -> np.ndarray:
    """
    Per-branch Q pairs `Q_d(s, a) = V(s) + A_d(s, a) - mean_a' A_d(s, a')`.

    :param params: the parameters.
    :param observation: one observation of width 2n, or a batch of them.
    :return: shape (n, 2) for one observation, (batch, n, 2) for a batch.
    """
    enforce(
        observation.shape[-1] == params.input_width,
        f"observation width {observation.shape[-1]} does not match "
        f"the network input {params.input_width}",
        ValueError,
    )
    if observation.ndim == 1:
        return forward_with_cache(params, observation[None, :])[0][0]
    return forward_with_cache(params, observation)[0]


def backward(
    params: QNetworkParams, cache: ForwardCache, q_gradient: np.ndarray
) -> Dict[str, np.ndarray]:
    """
    Backpropagate a gradient with respect to the Q-values.

    :param params: the parameters used in the forward pass.
    :param cache: the forward cache.
    :param q_gradient: dLoss/dQ of shape (batch, n, 2).
    :return: gradients keyed like `params.tensors`.
    """
    t = params.tensors
    grads: Dict[str, np.ndarray] = {}
    advantage_gradient = q_gradient - q_gradient.mean(axis=2, keepdims=True)
    value_gradient = q_gradient.sum(axis=(1, 2))

    grads["branch.out.weight"] = np.einsum(
        "bds,bda->dsa", cache.branch_hidden, advantage_gradient
    )
    grads["branch.out.bias"] = advantage_gradient.sum(axis=0)
    branch_hidden_gradient = np.einsum(
        "bda,dsa->bds", advantage_gradient, t["branch.out.weight"]
    )
    branch_pre_gradient = branch_hidden_gradient * (cache.branch_pre > 0)
    grads["branch.hidden.weight"] = np.einsum(
        "bh,bds->dhs", cache.trunk_output, branch_pre_gradient
    )
    grads["branch.hidden.bias"] = branch_pre_gradient.sum(axis=0)
    trunk_gradient = np.einsum(
        "bds,dhs->bh", branch_pre_gradient, t["branch.hidden.weight"]
    )

    grads["value.out.weight"] = cache.value_hidden.T @ value_gradient[:, None]
    grads["value.out.bias"] = np.array(
        [value_gradient.sum()], dtype=value_gradient.dtype
    )
    value_hidden_gradient = value_gradient[:, None] @ t["value.out.weight"].T
    value_pre_gradient = value_hidden_gradient * (cache.value_pre > 0)
    grads["value.hidden.weight"] = cache.trunk_output.T @ value_pre_gradient
    grads["value.hidden.bias"] = value_pre_gradient.sum(axis=0)
    trunk_gradient = trunk_gradient + value_pre_gradient @ t["value.hidden.weight"].T

    for layer in reversed(range(params.trunk_depth)):
        pre_gradient = trunk_gradient * (cache.pre_activations[layer] > 0)
        grads[f"trunk.{layer}.weight"] = cache.inputs[layer].T @ pre_gradient
        grads[f"trunk.{layer}.bias"] = pre_gradient.sum(axis=0)
        trunk_gradient = pre_gradient @ t[f"trunk.{layer}.weight"].T
    return {name: grads[name].astype(params.dtype, copy=False) for name in t}


def td_loss(
    params: QNetworkParams,
    observations: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Mean squared error between the Q-values of the taken actions and the targets.

    The error is averaged over the batch and over the branches.

    :param params: the parameters.
    :param observations: shape (batch, 2n).
    :param actions: 0/1 flip decisions of shape (batch, n).
    :param targets: one target per entry, shape (batch,).
    :return: the loss and its gradients.
    """
    q_values, cache = forward_with_cache(params, observations)
    batch, branches, _ = q_values.shape
    rows = np.arange(batch)[:, None]
    columns = np.arange(branches)[None, :]
    taken = q_values[rows, columns, actions]
    error = taken - targets.astype(q_values.dtype)[:, None]
    loss = float(np.mean(np.square(error, dtype=np.float64)))
    q_gradient = np.zeros_like(q_values)
    q_gradient[rows, columns, actions] = 2.0 * error / (batch * branches)
    return loss, backward(params, cache, q_gradient)


class Adam:  # pylint: disable=too-few-public-methods
    """Adaptive moment estimation."""

    def __init__(
        self,
        learning_rate: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> None:
        """Initialize the optimiser."""
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.steps = 0
        self._first: Dict[str, np.ndarray] = {}
        self._second: Dict[str, np.ndarray] = {}

    def step(self, params: QNetworkParams, grads: Dict[str, np.ndarray]) -> None:
        """Update the parameters in place."""
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for name, gradient in grads.items():
            first = self._first.setdefault(name, np.zeros_like(gradient))
            second = self._second.setdefault(name, np.zeros_like(gradient))
            first *= self.beta1
            first += (1.0 - self.beta1) * gradient
            second *= self.beta2
            second += (1.0 - self.beta2) * np.square(gradient)
            update = (
                self.learning_rate
                * (first / correction1)
                / (np.sqrt(second / correction2) + self.epsilon)
            )
            params.tensors[name] -= update.astype(params.dtype, copy=False)


def save_checkpoint(params: QNetworkParams, path: Union[str, Path]) -> None:
    """
    Write the parameters as little-endian float32 tensors after a versioned header.

    :param params: the parameters.
    :param path: the checkpoint file.
    """
    names = parameter_names(params.trunk_depth)
    header = [
        _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, params.branches, len(names))
    ]
    for name in names:
        encoded = name.encode("utf-8")
        shape = params.tensors[name].shape
        header.append(_TENSOR_HEADER.pack(len(encoded), len(shape)) + encoded)
        header.extend(_DIM.pack(dim) for dim in shape)
    body = [
        np.ascontiguousarray(params.tensors[name], dtype="<f4").tobytes()
        for name in names
    ]
    Path(path).write_bytes(b"".join(header + body))


def load_checkpoint(path: Union[str, Path]) -> QNetworkParams:
    """
    Read a checkpoint written by `save_checkpoint`.

    :param path: the checkpoint file.
    :return: float32 parameters.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    try:
        magic, version, branches, count = _HEADER.unpack_from(data, 0)
        enforce(
            magic == CHECKPOINT_MAGIC, f"{path} is not a checkpoint", CheckpointError
        )
        enforce(
            version == CHECKPOINT_VERSION,
            f"unsupported checkpoint version {version}",
            CheckpointError,
        )
        offset = _HEADER.size
        layout = []
        for _ in range(count):
            name_length, ndim = _TENSOR_HEADER.unpack_from(data, offset)
            offset += _TENSOR_HEADER.size
            name = data[offset : offset + name_length].decode("utf-8")
            offset += name_length
            shape = tuple(
                _DIM.unpack_from(data, offset + i * _DIM.size)[0] for i in range(ndim)
            )
            offset += ndim * _DIM.size
            layout.append((name, shape))
        tensors = {}
        for name, shape in layout:
            size = int(np.prod(shape)) if shape else 1
            values = np.frombuffer(data, dtype="<f4", count=size, offset=offset)
            tensors[name] = values.reshape(shape).astype(np.float32)
            offset += 4 * size
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from e
    enforce(
        offset == len(data), f"trailing bytes in checkpoint {path}", CheckpointError
    )
    params = QNetworkParams(tensors)
    enforce(
        list(tensors) == parameter_names(params.trunk_depth),
        f"inconsistent checkpoint layout in {path}",
        CheckpointError,
    )
    enforce(
        params.branches == branches,
        f"checkpoint {path} declares {branches} branches but holds {params.branches}",
        CheckpointError,
    )
    return params
