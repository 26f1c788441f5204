"""Central finite-difference verification of every op's backward rule.

Each registered op has at least three cases of different shapes. A case
supplies float64 input arrays and a forward closure producing a scalar
Tensor; non-scalar ops are reduced through a fixed random projection so the
check still exercises their full Jacobian. The analytic gradient from
`backward` is compared elementwise against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from holoforge.autograd import ops
from holoforge.autograd.tensor import Tensor, backward

DEFAULT_STEP = 1e-4
DEFAULT_TOL = 1e-5


def numeric_grad(forward, arrays, index, step=DEFAULT_STEP):
    """Central differences of forward(arrays) w.r.t. arrays[index]."""
    base = [a.copy() for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        keep = flat[j]
        flat[j] = keep + step
        hi = forward(*base)
        flat[j] = keep - step
        lo = forward(*base)
        flat[j] = keep
        gflat[j] = (hi - lo) / (2.0 * step)
    return grad


def analytic_grads(forward_t, arrays):
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    loss = forward_t(*tensors)
    backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def relative_error(analytic, numeric):
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


@dataclass
class CheckResult:
    op: str
    cases: int
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _projected(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Reduce a non-scalar output to a scalar via a fixed random projection."""
    r = Tensor(rng.standard_normal(out.shape))
    return ops.sum_all(ops.elementwise_mul(out, r))


def _away_from(rng, shape, margin=0.15, span=1.0):
    """Values whose magnitude stays >= margin, clear of kinks at zero."""
    mag = rng.uniform(margin, margin + span, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


# --- case builders -------------------------------------------------------
# each returns (input_arrays, forward_on_tensors); the forward closes over
# any non-differentiated extras (projection vectors, running stats, flags).

def _case_conv2d(rng, xshape, wshape, stride, pad, with_bias):
    x = rng.standard_normal(xshape)
    w = rng.standard_normal(wshape)
    arrays = [x, w] + ([rng.standard_normal(wshape[0])] if with_bias else [])
    proj = None

    def forward(*ts):
        nonlocal proj
        out = ops.conv2d(ts[0], ts[1], ts[2] if with_bias else None, stride=stride, pad=pad)
        if proj is None:
            proj = rng.standard_normal(out.shape)
        return ops.sum_all(ops.elementwise_mul(out, Tensor(proj)))

    return arrays, forward


def _case_batchnorm(rng, shape, training):
    c = shape[1]
    arrays = [rng.standard_normal(shape), rng.uniform(0.5, 1.5, c), rng.standard_normal(c)]
    rm = rng.standard_normal(c)
    rv = rng.uniform(0.5, 2.0, c)
    proj = rng.standard_normal(shape)

    def forward(x, gamma, beta):
        out = ops.batchnorm2d(x, gamma, beta, rm.copy(), rv.copy(), training=training)
        return ops.sum_all(ops.elementwise_mul(out, Tensor(proj)))

    return arrays, forward


def _case_unary(rng, shape, op_fn, sampler=None):
    x = sampler(rng, shape) if sampler else rng.standard_normal(shape)
    proj = None

    def forward(t):
        nonlocal proj
        out = op_fn(t)
        if proj is None:
            proj = rng.standard_normal(out.shape)
        return ops.sum_all(ops.elementwise_mul(out, Tensor(proj)))

    return [x], forward


def _case_binary(rng, ashape, bshape, op_fn, b_sampler=None):
    a = rng.standard_normal(ashape)
    b = b_sampler(rng, bshape) if b_sampler else rng.standard_normal(bshape)
    proj = None

    def forward(ta, tb):
        nonlocal proj
        out = op_fn(ta, tb)
        if proj is None:
            proj = rng.standard_normal(out.shape)
        return ops.sum_all(ops.elementwise_mul(out, Tensor(proj)))

    return [a, b], forward


def _case_loss(rng, shape, loss_fn, separate=False):
    a = rng.standard_normal(shape)
    if separate:
        b = a + _away_from(rng, shape, margin=0.2, span=0.8)
    else:
        b = rng.standard_normal(shape)
    return [a, b], lambda ta, tb: loss_fn(ta, tb)


def _case_ssim(rng, shape, window):
    a = rng.uniform(0.0, 1.0, shape)
    b = np.clip(a + rng.uniform(-0.3, 0.3, shape), 0.0, 1.0)
    return [a, b], lambda ta, tb: ops.ssim(ta, tb, window=window)


OP_CASES = {
    "conv2d": [
        lambda rng: _case_conv2d(rng, (1, 2, 5, 5), (3, 2, 3, 3), 1, 1, True),
        lambda rng: _case_conv2d(rng, (2, 3, 6, 6), (4, 3, 3, 3), 2, 1, True),
        lambda rng: _case_conv2d(rng, (1, 4, 4, 4), (2, 4, 1, 1), 1, 0, False),
    ],
    "batchnorm2d": [
        lambda rng: _case_batchnorm(rng, (4, 3, 2, 2), True),
        lambda rng: _case_batchnorm(rng, (2, 5, 3, 3), True),
        lambda rng: _case_batchnorm(rng, (3, 2, 4, 4), False),
    ],
    "bilinear_upsample2x": [
        lambda rng: _case_unary(rng, (1, 1, 2, 2), ops.bilinear_upsample2x),
        lambda rng: _case_unary(rng, (2, 3, 4, 5), ops.bilinear_upsample2x),
        lambda rng: _case_unary(rng, (1, 2, 1, 3), ops.bilinear_upsample2x),
    ],
    "leaky_relu": [
        lambda rng: _case_unary(rng, (1, 1, 4, 4), ops.leaky_relu, _away_from),
        lambda rng: _case_unary(rng, (2, 3, 3, 3), ops.leaky_relu, _away_from),
        lambda rng: _case_unary(rng, (1, 2, 5, 2), lambda t: ops.leaky_relu(t, 0.2), _away_from),
    ],
    "sigmoid": [
        lambda rng: _case_unary(rng, (1, 1, 3, 3), ops.sigmoid),
        lambda rng: _case_unary(rng, (2, 2, 4, 4), ops.sigmoid),
        lambda rng: _case_unary(rng, (1, 3, 2, 5), ops.sigmoid),
    ],
    "add": [
        lambda rng: _case_binary(rng, (1, 2, 3, 3), (1, 2, 3, 3), ops.add),
        lambda rng: _case_binary(rng, (2, 1, 4, 4), (2, 1, 4, 4), ops.add),
        lambda rng: _case_binary(rng, (3, 2, 2, 5), (3, 2, 2, 5), ops.add),
    ],
    "sub": [
        lambda rng: _case_binary(rng, (1, 2, 3, 3), (1, 2, 3, 3), ops.sub),
        lambda rng: _case_binary(rng, (2, 1, 4, 4), (2, 1, 4, 4), ops.sub),
        lambda rng: _case_binary(rng, (3, 2, 2, 5), (3, 2, 2, 5), ops.sub),
    ],
    "elementwise_mul": [
        lambda rng: _case_binary(rng, (1, 2, 3, 3), (1, 2, 3, 3), ops.elementwise_mul),
        lambda rng: _case_binary(rng, (2, 1, 4, 4), (2, 1, 4, 4), ops.elementwise_mul),
        lambda rng: _case_binary(rng, (3, 2, 2, 5), (3, 2, 2, 5), ops.elementwise_mul),
    ],
    "div": [
        lambda rng: _case_binary(rng, (1, 2, 3, 3), (1, 2, 3, 3), ops.div, _away_from),
        lambda rng: _case_binary(rng, (2, 1, 4, 4), (2, 1, 4, 4), ops.div, _away_from),
        lambda rng: _case_binary(rng, (3, 2, 2, 5), (3, 2, 2, 5), ops.div, _away_from),
    ],
    "scale": [
        lambda rng: _case_unary(rng, (1, 2, 3, 3), lambda t: ops.scale(t, 2.5)),
        lambda rng: _case_unary(rng, (2, 1, 4, 4), lambda t: ops.scale(t, -0.7)),
        lambda rng: _case_unary(rng, (1, 3, 2, 2), lambda t: ops.scale(t, 1e-3)),
    ],
    "offset": [
        lambda rng: _case_unary(rng, (1, 2, 3, 3), lambda t: ops.offset(t, 1.5)),
        lambda rng: _case_unary(rng, (2, 1, 4, 4), lambda t: ops.offset(t, -0.25)),
        lambda rng: _case_unary(rng, (1, 3, 2, 2), lambda t: ops.offset(t, 0.0)),
    ],
    "concat_channels": [
        lambda rng: _case_binary(rng, (1, 2, 3, 3), (1, 4, 3, 3), ops.concat_channels),
        lambda rng: _case_binary(rng, (2, 1, 2, 2), (2, 1, 2, 2), ops.concat_channels),
        lambda rng: _case_binary(rng, (1, 3, 4, 2), (1, 2, 4, 2), ops.concat_channels),
    ],
    "sum_all": [
        lambda rng: ([rng.standard_normal((1, 2, 3, 3))], ops.sum_all),
        lambda rng: ([rng.standard_normal((2, 1, 4, 4))], ops.sum_all),
        lambda rng: ([rng.standard_normal((3, 2, 2, 5))], ops.sum_all),
    ],
    "mean_all": [
        lambda rng: ([rng.standard_normal((1, 2, 3, 3))], ops.mean_all),
        lambda rng: ([rng.standard_normal((2, 1, 4, 4))], ops.mean_all),
        lambda rng: ([rng.standard_normal((3, 2, 2, 5))], ops.mean_all),
    ],
    "mse_loss": [
        lambda rng: _case_loss(rng, (1, 2, 3, 3), ops.mse_loss),
        lambda rng: _case_loss(rng, (2, 1, 4, 4), ops.mse_loss),
        lambda rng: _case_loss(rng, (3, 2, 2, 5), ops.mse_loss),
    ],
    "l1_loss": [
        lambda rng: _case_loss(rng, (1, 2, 3, 3), ops.l1_loss, separate=True),
        lambda rng: _case_loss(rng, (2, 1, 4, 4), ops.l1_loss, separate=True),
        lambda rng: _case_loss(rng, (3, 2, 2, 5), ops.l1_loss, separate=True),
    ],
    "ssim": [
        lambda rng: _case_ssim(rng, (1, 1, 12, 12), 11),
        lambda rng: _case_ssim(rng, (2, 1, 9, 9), 7),
        lambda rng: _case_ssim(rng, (1, 1, 8, 14), 5),
    ],
}


def check_op(name: str, step: float = DEFAULT_STEP, tol: float = DEFAULT_TOL,
             seed: int = 0) -> CheckResult:
    """Run every registered case for one op, returning the worst error."""
    if name not in OP_CASES:
        raise KeyError(f"no gradient cases registered for op '{name}'")
    worst = 0.0
    cases = OP_CASES[name]
    for i, build in enumerate(cases):
        rng = np.random.default_rng([seed, i, len(name)])
        arrays, forward_t = build(rng)
        arrays = [np.asarray(a, dtype=np.float64) for a in arrays]

        def forward_value(*arrs):
            return forward_t(*[Tensor(a, dtype=np.float64) for a in arrs]).item()

        ana = analytic_grads(forward_t, arrays)
        for idx in range(len(arrays)):
            num = numeric_grad(forward_value, arrays, idx, step=step)
            worst = max(worst, relative_error(ana[idx], num))
    return CheckResult(op=name, cases=len(cases), max_rel_err=worst, tol=tol)


def check_all(step: float = DEFAULT_STEP, tol: float = DEFAULT_TOL,
              seed: int = 0) -> list[CheckResult]:
    return [check_op(name, step=step, tol=tol, seed=seed) for name in OP_CASES]
