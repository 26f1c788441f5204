"""Reverse-mode autodiff core: Tensor, Parameter, and the backward tape.

Tensors wrap a numpy array (float32 by default, float64 when gradient
checking). Every op in `ops` records its inputs and a backward rule on the
produced tensor; `backward(loss)` replays those records in reverse order.
"""

from __future__ import annotations

import threading

import numpy as np


_FLOAT_DTYPES = (np.float32, np.float64)


class _GradState(threading.local):
    def __init__(self):
        self.enabled = True


_state = _GradState()


def grad_enabled() -> bool:
    """Whether ops currently record backward rules."""
    return _state.enabled


class no_grad:
    """Context manager that suspends graph recording (eval-only forward)."""

    def __enter__(self):
        self._prev = _state.enabled
        _state.enabled = False
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.enabled = self._prev
        return False


class Tensor:
    """A numpy array plus optional gradient and a record of how it was made.

    `_parents` and `_backward` are set only by ops while recording is
    enabled; leaves have neither. `grad` is populated by `backward()` and
    accumulates across calls until reset to None.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._backward = None
        self._op = ""

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same data, cut off from the graph."""
        return Tensor(self.data)

    def reset_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self):
        backward(self)

    def __repr__(self):
        tag = f" op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad}{tag})"


class Parameter(Tensor):
    """A trainable tensor; its path name is assigned by the owning module."""

    __slots__ = ("name",)

    def __init__(self, data, dtype=np.float32):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = None


def record(out_data: np.ndarray, parents, backward_fn, op: str) -> Tensor:
    """Wrap an op result, attaching the backward rule when recording applies.

    `backward_fn(g)` must return one gradient array (or None) per parent,
    in parent order.
    """
    out = Tensor(out_data)
    if _state.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


class Tape:
    """Ordered backward schedule for one output: the recorded ops reachable
    from `root`, in a topological order ending at the root."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, root: Tensor) -> "Tape":
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def replay(self, root: Tensor):
        """Run every backward rule once, newest first, accumulating grads.

        Each tensor's gradient within this replay is summed over all its
        consumers before its own rule runs, so per-tensor rules fire exactly
        once per call; `.grad` then accumulates across replays.
        """
        pending = {id(root): np.ones_like(root.data)}
        for node in reversed(self.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node._accumulate(g)
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


def backward(loss: Tensor):
    """Populate `.grad` for every requires_grad tensor reachable from `loss`.

    `loss` must be scalar (one element). Calling twice without resetting
    grads accumulates.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    Tape.from_output(loss).replay(loss)
