"""
自動微分張量
Reverse-mode Automatic Differentiation Tensor

以 numpy float64 陣列為底的最小張量型別。每個前向運算記錄父節點與反向函式，
backward() 依建立順序（node_id）排出拓撲序，每個節點只走訪一次。
"""

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from backend.errors import NonFiniteError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_node_ids = itertools.count(1)
_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, 'enabled', True)


@contextmanager
def no_grad():
    """評估模式：不記錄計算圖"""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把廣播後的梯度加總回原始形狀"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} 產生非有限值（NaN/Inf）")


class Tensor:
    """
    稠密張量

    Attributes:
        data: float64 陣列（row-major）
        grad: 與 data 同形狀的梯度，backward 後才存在
        requires_grad: 是否需要梯度
        node_id: 在計算圖中的遞增編號
    """

    __slots__ = ('data', 'grad', 'requires_grad', 'node_id', 'op', 'name', '_parents', '_backward')

    # ndarray ⊕ Tensor 交給 Tensor 的反射運算子
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self.op = 'leaf'
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[BackwardFn] = None

    # ========== 基本屬性 ==========

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> 'Tensor':
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{req}{nm})"

    # ========== 計算圖 ==========

    @staticmethod
    def _from_op(data: np.ndarray, parents: Tuple['Tensor', ...], op: str, backward: BackwardFn) -> 'Tensor':
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.node_id = next(_node_ids)
        out.op = op
        out.name = None
        out.requires_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """
        反向傳播，梯度累加到 requires_grad 的葉節點

        Args:
            grad: 上游梯度；純量輸出可省略
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"非純量輸出 {self.shape} 需要提供 grad")
            seed = np.ones_like(self.data)
        else:
            seed = np.array(grad, dtype=np.float64)
            if seed.shape != self.shape:
                raise ShapeError(f"grad 形狀 {seed.shape} 與輸出 {self.shape} 不符")
        if not self.requires_grad:
            return

        tape = Tape.record(self)
        pending: Dict[int, np.ndarray] = {self.node_id: seed}

        for node in reversed(tape.nodes):
            upstream = pending.pop(node.node_id, None)
            if upstream is None:
                continue
            tensor = node.tensor
            if tensor._backward is None:
                tensor.grad = upstream.copy() if tensor.grad is None else tensor.grad + upstream
                continue
            for parent, parent_grad in zip(tensor._parents, tensor._backward(upstream)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent.node_id in pending:
                    pending[parent.node_id] = pending[parent.node_id] + parent_grad
                else:
                    pending[parent.node_id] = parent_grad

    # ========== 算術 ==========

    @staticmethod
    def _lift(value: Union['Tensor', ArrayLike]) -> 'Tensor':
        return value if isinstance(value, Tensor) else Tensor(value)

    def __add__(self, other):
        other = Tensor._lift(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._from_op(self.data + other.data, (self, other), 'add', backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return Tensor._from_op(self.data - other.data, (self, other), 'sub', backward)

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), 'neg', lambda g: (-g,))

    def __mul__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data

        def backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._from_op(a * b, (self, other), 'mul', backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data

        def backward(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._from_op(a / b, (self, other), 'div', backward)

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("只支援純量指數")
        a = self.data
        p = float(exponent)

        def backward(g):
            return (g * p * np.power(a, p - 1.0),)

        return Tensor._from_op(np.power(a, p), (self,), 'pow', backward)

    def __matmul__(self, other):
        return matmul(self, other)

    # ========== 形狀運算 ==========

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            data = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"無法將 {original} reshape 成 {shape}") from exc
        return Tensor._from_op(data, (self,), 'reshape', lambda g: (g.reshape(original),))

    def transpose(self, *axes) -> 'Tensor':
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._from_op(np.transpose(self.data, axes), (self,), 'transpose',
                               lambda g: (np.transpose(g, inverse),))

    def swapaxes(self, a: int, b: int) -> 'Tensor':
        return Tensor._from_op(np.swapaxes(self.data, a, b), (self,), 'swapaxes',
                               lambda g: (np.swapaxes(g, a, b),))

    @property
    def T(self) -> 'Tensor':
        return self.swapaxes(-1, -2)

    def expand(self, *shape) -> 'Tensor':
        """廣播到指定形狀（反向時加總）"""
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            data = np.broadcast_to(self.data, shape).copy()
        except ValueError as exc:
            raise ShapeError(f"無法將 {original} 廣播成 {shape}") from exc
        return Tensor._from_op(data, (self,), 'expand', lambda g: (_unbroadcast(g, original),))

    def __getitem__(self, index) -> 'Tensor':
        original = self.shape

        def backward(g):
            full = np.zeros(original, dtype=np.float64)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._from_op(np.array(self.data[index], dtype=np.float64), (self,), 'getitem', backward)

    # ========== 歸約 ==========

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        original = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                axes = tuple(a % len(original) for a in axes)
                for a in sorted(axes):
                    g = np.expand_dims(g, a)
            return (np.broadcast_to(g, original).copy(),)

        return Tensor._from_op(np.asarray(self.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64),
                               (self,), 'sum', backward)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ========== 逐元素函數 ==========

    def exp(self) -> 'Tensor':
        y = np.exp(self.data)
        return Tensor._from_op(y, (self,), 'exp', lambda g: (g * y,))

    def log(self) -> 'Tensor':
        x = self.data
        if np.any(x <= 0):
            raise NonFiniteError("log 的輸入必須為正")
        return Tensor._from_op(np.log(x), (self,), 'log', lambda g: (g / x,))

    def sqrt(self) -> 'Tensor':
        y = np.sqrt(self.data)
        return Tensor._from_op(y, (self,), 'sqrt', lambda g: (g * 0.5 / y,))

    def tanh(self) -> 'Tensor':
        y = np.tanh(self.data)
        return Tensor._from_op(y, (self,), 'tanh', lambda g: (g * (1.0 - y * y),))

    def sigmoid(self) -> 'Tensor':
        # exp(-logaddexp(0, -x)) 在兩端都不會溢位
        y = np.exp(-np.logaddexp(0.0, -self.data))
        return Tensor._from_op(y, (self,), 'sigmoid', lambda g: (g * y * (1.0 - y),))

    def relu(self) -> 'Tensor':
        mask = (self.data > 0).astype(np.float64)
        return Tensor._from_op(self.data * mask, (self,), 'relu', lambda g: (g * mask,))

    def softplus(self) -> 'Tensor':
        x = self.data
        slope = np.exp(-np.logaddexp(0.0, -x))
        return Tensor._from_op(np.logaddexp(0.0, x), (self,), 'softplus', lambda g: (g * slope,))

    def clamp(self, low: Optional[float] = None, high: Optional[float] = None) -> 'Tensor':
        x = self.data
        y = np.clip(x, low, high)
        inside = (y == x).astype(np.float64)
        return Tensor._from_op(y, (self,), 'clamp', lambda g: (g * inside,))

    def abs(self) -> 'Tensor':
        sign = np.sign(self.data)
        return Tensor._from_op(np.abs(self.data), (self,), 'abs', lambda g: (g * sign,))


@dataclass(frozen=True)
class TapeNode:
    """計算圖上的一個原始運算"""
    node_id: int
    op: str
    input_ids: Tuple[int, ...]
    tensor: Tensor


class Tape:
    """
    由輸出往回收集的計算圖節點，依 node_id 排序

    node_id 隨建立遞增，父節點一定先於子節點，排序後即為拓撲序。
    """

    def __init__(self, nodes: List[TapeNode]):
        self.nodes = nodes

    @classmethod
    def record(cls, output: Tensor) -> 'Tape':
        seen: Dict[int, TapeNode] = {}
        stack = [output]
        while stack:
            tensor = stack.pop()
            if tensor.node_id in seen or not tensor.requires_grad:
                continue
            seen[tensor.node_id] = TapeNode(
                node_id=tensor.node_id,
                op=tensor.op,
                input_ids=tuple(p.node_id for p in tensor._parents),
                tensor=tensor,
            )
            stack.extend(tensor._parents)
        return cls(sorted(seen.values(), key=lambda n: n.node_id))

    def __len__(self) -> int:
        return len(self.nodes)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    矩陣乘法（支援前置批次維度廣播）

    dL/da = dL/dout · bᵀ，dL/db = aᵀ · dL/dout
    """
    a, b = Tensor._lift(a), Tensor._lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul 需要至少二維輸入，收到 {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul 內側維度不符: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul 批次維度無法廣播: {a.shape} @ {b.shape}") from exc
    a_data, b_data = a.data, b.data

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b_data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return _unbroadcast(grad_a, a_data.shape), _unbroadcast(grad_b, b_data.shape)

    return Tensor._from_op(out, (a, b), 'matmul', backward)


def tensor(data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)
