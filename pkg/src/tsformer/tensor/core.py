"""Tensors, parameters and the recording tape used for reverse-mode differentiation."""
from __future__ import annotations

import contextvars
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "tsformer_active_tape", default=None
)


class Tensor:
    """A dense array with an optional gradient slot.

    Feature maps are carried as ``[B, C, H, W]`` arrays; other ranks appear
    internally (scalars for losses, patch grids inside attention).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_recorded", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._recorded = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # Arithmetic sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


class Parameter(Tensor):
    """A named trainable tensor; its gradient starts at zero."""

    __slots__ = ()

    def __init__(self, data, name: str, dtype=DEFAULT_DTYPE):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class _Node:
    __slots__ = ("op", "output", "inputs", "vjp")

    def __init__(self, op: str, output: Tensor, inputs: tuple[Tensor, ...], vjp: VJP):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of differentiable operations.

    Operations executed inside ``with Tape() as tape:`` are appended in
    execution order, so reversing the list is a valid reverse topological
    order for :meth:`backward`. Outside any tape, ops run without recording.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ops(self) -> list[str]:
        return [n.op for n in self.nodes]

    def record(self, op: str, output: Tensor, inputs: Iterable[Tensor], vjp: VJP) -> None:
        output._recorded = True
        output.requires_grad = True
        self.nodes.append(_Node(op, output, tuple(inputs), vjp))

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(leaf) into the ``grad`` of every leaf that requires it."""
        if loss.data.ndim != 0 and loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss._recorded:
            raise ValueError("loss was not produced on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.vjp(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.data.shape:
                    raise RuntimeError(
                        f"{node.op}: gradient shape {gi.shape} != input shape {inp.data.shape}"
                    )
                if inp._recorded:
                    key = id(inp)
                    prev = grads.get(key)
                    grads[key] = gi if prev is None else prev + gi
                else:
                    gi = gi.astype(inp.data.dtype, copy=False)
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    """Wrap ``data`` as an op output and record it if any input needs a gradient."""
    out = Tensor(data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, out, inputs, vjp)
    return out


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))
