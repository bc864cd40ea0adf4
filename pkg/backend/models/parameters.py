"""
模型參數容器
Model Parameter Bundle

所有可訓練張量以名稱登記（例如 'node_emb'、'dgi.fc1.weight'），BatchNorm 的滑動統計另存為 buffer。
"""

from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from backend.autodiff.functional import BatchNormState
from backend.autodiff.tensor import Tensor
from backend.errors import CheckpointError, ShapeError


class BgnParameters:
    """具名參數集合"""

    def __init__(self):
        self.tensors: Dict[str, Tensor] = {}
        self.bn_states: Dict[str, BatchNormState] = {}

    # ========== 登記 ==========

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"參數重複登記: {name}")
        tensor = Tensor(value, requires_grad=True, name=name)
        self.tensors[name] = tensor
        return tensor

    def add_batchnorm(self, name: str, features: int) -> BatchNormState:
        state = BatchNormState.create(features)
        self.bn_states[name] = state
        return state

    # ========== 存取 ==========

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def group(self, prefix: str) -> Dict[str, Tensor]:
        return {k: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grad_norms(self, groups: Mapping[str, str]) -> Dict[str, float]:
        """每個參數群組（label → 名稱前綴）的梯度範數"""
        norms = {}
        for label, prefix in groups.items():
            total = 0.0
            for t in self.group(prefix).values():
                if t.grad is not None:
                    total += float(np.sum(t.grad * t.grad))
            norms[label] = float(np.sqrt(total))
        return norms

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    # ========== 快照 / 還原 ==========

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """參數與 BatchNorm buffer 的複本（檢查點用）"""
        arrays = {name: t.data.copy() for name, t in self.tensors.items()}
        for name, state in self.bn_states.items():
            arrays[f'{name}.running_mean'] = state.running_mean.copy()
            arrays[f'{name}.running_var'] = state.running_var.copy()
        return arrays

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
        expected = set(self.tensors)
        for name in self.bn_states:
            expected |= {f'{name}.running_mean', f'{name}.running_var'}
        missing = expected - set(arrays)
        unexpected = set(arrays) - expected
        if strict and (missing or unexpected):
            raise CheckpointError(f"參數名稱不符: 缺少 {sorted(missing)}，多出 {sorted(unexpected)}")

        for name, t in self.tensors.items():
            if name in arrays:
                value = np.asarray(arrays[name], dtype=np.float64)
                if value.shape != t.shape:
                    raise ShapeError(f"參數 {name} 形狀 {value.shape} 與模型 {t.shape} 不符")
                t.data = value.copy()
        for name, state in self.bn_states.items():
            if f'{name}.running_mean' in arrays:
                state.running_mean = np.asarray(arrays[f'{name}.running_mean'], dtype=np.float64).copy()
                state.running_var = np.asarray(arrays[f'{name}.running_var'], dtype=np.float64).copy()


class ParamFactory:
    """
    參數初始化

    權重 ~ Uniform(±√(1/fan_in))，偏差 0，節點嵌入 ~ Normal(0, 1/√d)，BatchNorm gamma=1 beta=0。
    """

    def __init__(self, params: BgnParameters, rng: np.random.Generator, prefix: str = ''):
        self.params = params
        self.rng = rng
        self.prefix = prefix

    def _name(self, name: str) -> str:
        return f'{self.prefix}{name}'

    def scoped(self, prefix: str) -> 'ParamFactory':
        return ParamFactory(self.params, self.rng, self.prefix + prefix)

    def weight(self, name: str, out_features: int, in_features: int) -> Tensor:
        bound = np.sqrt(1.0 / in_features)
        return self.params.add(self._name(name), self.rng.uniform(-bound, bound, size=(out_features, in_features)))

    def bias(self, name: str, size: int) -> Tensor:
        return self.params.add(self._name(name), np.zeros(size))

    def embedding(self, name: str, n: int, d: int) -> Tensor:
        return self.params.add(self._name(name), self.rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d)))

    def batchnorm(self, name: str, features: int) -> Tuple[Tensor, Tensor, BatchNormState]:
        gamma = self.params.add(self._name(f'{name}.gamma'), np.ones(features))
        beta = self.params.add(self._name(f'{name}.beta'), np.zeros(features))
        state = self.params.add_batchnorm(self._name(name), features)
        return gamma, beta, state

    def linear(self, name: str, out_features: int, in_features: int, bias: bool = True) -> Tuple[Tensor, Optional[Tensor]]:
        w = self.weight(f'{name}.weight', out_features, in_features)
        b = self.bias(f'{name}.bias', out_features) if bias else None
        return w, b
