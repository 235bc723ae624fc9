"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward

EPS = 1e-12


@dataclass
class GradReport:
    max_rel_error: float
    tol: float
    n_checked: int
    worst_index: tuple = ()
    analytic: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    numeric: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __bool__(self) -> bool:
        return self.passed


def _scalar(f, *args) -> Tensor:
    out = f(*args)
    if not isinstance(out, Tensor) or out.size != 1:
        shape = getattr(out, "shape", type(out).__name__)
        raise ValueError(f"check_gradients: function must return a scalar Tensor, got {shape}")
    return out


def check_gradients(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    tol: float = 1e-4,
    indices: Sequence[tuple] | None = None,
) -> GradReport:
    """Compare the tape gradient of scalar ``f`` at ``x`` with central differences.

    The per-coordinate error is ``|g_ad - g_fd| / (|g_fd| + 1e-12)``. ``indices``
    restricts the check to a subset of coordinates of ``x`` (all by default).
    """
    if not np.all(np.isfinite(x.data)):
        raise ValueError("check_gradients: x must be finite")
    x.requires_grad = True
    x.grad = None
    with Tape():
        y = _scalar(f, x)
    backward(y)
    g_ad = x.grad.copy()
    x.grad = None

    if indices is None:
        indices = list(np.ndindex(*x.shape))
    base = x.data.copy()
    ana, num = [], []
    for idx in indices:
        x.data[idx] = base[idx] + h
        fp = _scalar(f, x).item()
        x.data[idx] = base[idx] - h
        fm = _scalar(f, x).item()
        x.data[idx] = base[idx]
        fd = (fp - fm) / (2.0 * h)
        if not np.isfinite(fd):
            raise ValueError(f"check_gradients: non-finite difference at {idx}")
        ana.append(g_ad[idx])
        num.append(fd)
    ana_a, num_a = np.array(ana), np.array(num)
    rel = np.abs(ana_a - num_a) / (np.abs(num_a) + EPS)
    worst = int(np.argmax(rel)) if len(rel) else 0
    return GradReport(
        max_rel_error=float(rel.max()) if len(rel) else 0.0,
        tol=tol,
        n_checked=len(rel),
        worst_index=tuple(indices[worst]) if len(rel) else (),
        analytic=ana_a,
        numeric=num_a,
    )


def check_param_gradients(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    per_param: int = 3,
    rng: np.random.Generator | None = None,
) -> dict[str, GradReport]:
    """Spot-check a few random coordinates of every parameter of a model loss."""
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    with Tape():
        loss = loss_fn()
    backward(loss)
    grads = {k: p.grad.copy() if p.grad is not None else np.zeros(p.shape)
             for k, p in params.items()}
    for p in params.values():
        p.grad = None

    reports = {}
    for name, p in params.items():
        flat = rng.choice(p.size, size=min(per_param, p.size), replace=False)
        idxs = [np.unravel_index(int(i), p.shape) for i in flat]
        ana, num = [], []
        for idx in idxs:
            orig = p.data[idx]
            p.data[idx] = orig + h
            fp = loss_fn().item()
            p.data[idx] = orig - h
            fm = loss_fn().item()
            p.data[idx] = orig
            ana.append(grads[name][idx])
            num.append((fp - fm) / (2.0 * h))
        ana_a, num_a = np.array(ana), np.array(num)
        rel = np.abs(ana_a - num_a) / (np.abs(num_a) + EPS)
        w = int(np.argmax(rel))
        reports[name] = GradReport(float(rel.max()), tol, len(rel), tuple(idxs[w]), ana_a, num_a)
    return reports


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    from . import tensor as T
    return T.sum(out * Tensor(w))


def primitive_cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[Tensor], Tensor], Tensor]]:
    """One scalar test function and input per differentiable primitive.

    Each output is contracted with fixed random weights so every output
    coordinate contributes. Inputs are drawn away from kinks and poles.
    """
    from . import tensor as T

    def u(*shape, lo=-1.0, hi=1.0):
        return rng.uniform(lo, hi, size=shape)

    def case(op, x, out_shape):
        w = rng.standard_normal(out_shape)
        return (lambda t: _weighted(op(t), w)), Tensor(x)

    a35, b35 = u(3, 5), u(3, 5)
    pos = u(3, 5, lo=0.5, hi=2.0)
    # constants are drawn once here, never inside the lambdas
    row, w54, b234, sig, filt = u(5), u(5, 4), u(2, 3, 4), u(2, 12), u(2, 5)
    cases = {
        "add": case(lambda t: T.add(t, Tensor(b35)), a35, (3, 5)),
        "add_broadcast": case(lambda t: T.add(t, Tensor(row)), a35, (3, 5)),
        "sub": case(lambda t: T.sub(Tensor(b35), t), a35, (3, 5)),
        "mul": case(lambda t: T.mul(t, Tensor(b35)), a35, (3, 5)),
        "mul_self": case(lambda t: T.mul(t, t), a35, (3, 5)),
        "div_num": case(lambda t: T.div(t, Tensor(pos)), a35, (3, 5)),
        "div_den": case(lambda t: T.div(Tensor(b35), t), pos, (3, 5)),
        "neg": case(T.neg, a35, (3, 5)),
        "tanh": case(T.tanh, 2 * a35, (3, 5)),
        "sigmoid": case(T.sigmoid, 3 * a35, (3, 5)),
        "exp": case(T.exp, a35, (3, 5)),
        "log": case(T.log, pos, (3, 5)),
        "sqrt": case(T.sqrt, pos, (3, 5)),
        "clamp_min": case(lambda t: T.clamp_min(t, 0.05), np.where(np.abs(a35 - 0.05) < 0.05, 0.3, a35), (3, 5)),
        "sum_axis": case(lambda t: T.sum(t, axis=1), a35, (3,)),
        "sorted_sum": case(lambda t: T.sorted_sum(t, 0), a35, (5,)),
        "mean_axis": case(lambda t: T.mean(t, axis=0, keepdims=True), a35, (1, 5)),
        "l2norm": case(lambda t: T.l2norm(t, axis=-1), a35, (3,)),
        "matmul": case(lambda t: T.matmul(t, Tensor(w54)), a35, (3, 4)),
        "matmul_batched": case(lambda t: T.matmul(Tensor(b234), t), u(2, 4, 6), (2, 3, 6)),
        "corr_valid_signal": case(lambda t: T.corr_valid(t, Tensor(filt)), u(2, 12), (2, 8)),
        "corr_valid_filter": case(lambda t: T.corr_valid(Tensor(sig), t), u(2, 5), (2, 8)),
        "concat": case(lambda t: T.concat([t, Tensor(b35), t], axis=1), a35, (3, 15)),
        "stack": case(lambda t: T.stack([t, Tensor(b35)], axis=0), a35, (2, 3, 5)),
        "reshape": case(lambda t: T.reshape(t, (5, 3)), a35, (5, 3)),
        "transpose": case(lambda t: T.transpose(t, (1, 0)), a35, (5, 3)),
        "slice": case(lambda t: t[1:, 2:4], a35, (2, 2)),
        "index_repeat": case(lambda t: t[np.array([0, 2, 0])], a35, (3, 5)),
        "pad": case(lambda t: T.pad(t, [(1, 0), (2, 3)]), a35, (4, 10)),
        "unfold": case(lambda t: T.unfold(t, 4, 2), u(2, 10), (2, 4, 4)),
        "fold": case(lambda t: T.fold(t, 2, 10), u(2, 4, 4), (2, 10)),
    }
    return cases


def check_directional(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    names: Sequence[str] | None = None,
    h: float = 1e-5,
    tol: float = 1e-4,
    rng: np.random.Generator | None = None,
    joint: bool = True,
) -> dict[str, GradReport]:
    """Central differences along unit directions, one per parameter tensor.

    For each named tensor the direction is ``v = normalize(g_hat + r)`` with
    ``g_hat`` the unit analytic gradient and ``r`` a random unit vector, and
    ``g . v`` is compared with ``(f(p + h v) - f(p - h v)) / 2h`` using the
    same relative error as :func:`check_gradients`. The random part keeps the
    check sensitive to errors in any direction; the gradient part keeps the
    directional derivative away from zero, where a purely random direction
    would compare two numbers below the finite-difference noise floor. With
    ``joint`` one more direction perturbs all parameters (reported as ``"*"``).
    """
    rng = rng or np.random.default_rng(0)
    names = list(params) if names is None else list(names)
    for p in params.values():
        p.grad = None
    with Tape():
        loss = _scalar(lambda: loss_fn())
    backward(loss)
    grads = {k: (p.grad.copy() if p.grad is not None else np.zeros(p.shape)) for k, p in params.items()}
    for p in params.values():
        p.grad = None

    def normalize(d):
        norm = np.sqrt(sum(np.sum(v * v) for v in d.values()))
        return {k: v / norm for k, v in d.items()} if norm > 0 else d

    def unit(shapes):
        r = normalize({k: rng.standard_normal(sh) for k, sh in shapes.items()})
        g = normalize({k: grads[k] for k in shapes})
        return normalize({k: r[k] + g[k] for k in shapes})

    def probe(keys, dirs):
        base = {k: params[k].data.copy() for k in keys}
        for k in keys:
            params[k].data[...] = base[k] + h * dirs[k]
        fp = loss_fn().item()
        for k in keys:
            params[k].data[...] = base[k] - h * dirs[k]
        fm = loss_fn().item()
        for k in keys:
            params[k].data[...] = base[k]
        fd = (fp - fm) / (2.0 * h)
        if not np.isfinite(fd):
            raise ValueError(f"check_directional: non-finite difference along {keys[:3]}")
        ad = float(sum(np.sum(grads[k] * dirs[k]) for k in keys))
        return GradReport(abs(ad - fd) / (abs(fd) + EPS), tol, 1, (), np.array([ad]), np.array([fd]))

    reports = {}
    for k in names:
        reports[k] = probe([k], unit({k: params[k].shape}))
    if joint:
        keys = list(params)
        reports["*"] = probe(keys, unit({k: params[k].shape for k in keys}))
    return reports
