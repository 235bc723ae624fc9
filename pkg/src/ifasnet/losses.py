"""Training objectives and evaluation metrics."""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

EPS = 1e-8
SDR_CAP = 80.0


def snr_loss(est, ref) -> Tensor:
    """Negative SNR in dB: ``-10 log10(|ref|^2 / (|est - ref|^2 + eps))``."""
    est, ref = T.as_tensor(est), T.as_tensor(ref)
    if est.shape != ref.shape:
        raise T.ShapeError(f"snr_loss: est {est.shape} vs ref {ref.shape}")
    sig = T.sum(ref * ref)
    if sig.item() == 0.0:
        raise ValueError("snr_loss: reference has zero power")
    diff = est - ref
    err = T.sum(diff * diff) + EPS
    # one log of the ratio rounds better than a difference of two logs
    return T.log(err / sig) * (10.0 / np.log(10.0))


def si_sdr(est, ref) -> float:
    """Scale-invariant SDR in dB, clipped to +-80 dB."""
    est = np.asarray(getattr(est, "data", est), dtype=np.float64).ravel()
    ref = np.asarray(getattr(ref, "data", ref), dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise ValueError(f"si_sdr: length mismatch {est.shape} vs {ref.shape}")
    ref_pow = ref @ ref
    if ref_pow == 0.0:
        raise ValueError("si_sdr: reference is all zeros")
    if not np.any(est):
        raise ValueError("si_sdr: estimate is all zeros")
    target = (est @ ref / ref_pow) * ref
    noise = est - target
    t_pow, n_pow = target @ target, noise @ noise
    if t_pow == 0.0:
        return -SDR_CAP
    if n_pow == 0.0:
        return SDR_CAP
    return float(np.clip(10.0 * np.log10(t_pow / n_pow), -SDR_CAP, SDR_CAP))


def si_sdri(est, ref, mixture_ref) -> float:
    return si_sdr(est, ref) - si_sdr(mixture_ref, ref)


def pit_loss(ests, refs, base_loss: Callable = snr_loss) -> tuple[Tensor, tuple[int, ...]]:
    """Best mean loss over source permutations.

    Returns the loss and ``perm`` such that ``ests[perm[k]]`` pairs with
    ``refs[k]``. Ties go to the earliest permutation (identity first).
    """
    ests, refs = T.as_tensor(ests), T.as_tensor(refs)
    S = refs.shape[0]
    if ests.shape[0] != S:
        raise T.ShapeError(f"pit_loss: {ests.shape[0]} estimates for {S} references")
    pair = [[base_loss(ests[i], refs[k]) for k in range(S)] for i in range(S)]
    best = best_perm = None
    for perm in itertools.permutations(range(S)):
        val = sum(pair[perm[k]][k].item() for k in range(S)) / S
        if best is None or val < best:
            best, best_perm = val, perm
    total = pair[best_perm[0]][0]
    for k in range(1, S):
        total = total + pair[best_perm[k]][k]
    return total * (1.0 / S), best_perm


def a2t_loss(model, single_source_input, target, ref: int | None = None) -> Tensor:
    """Auxiliary autoencoding term: separating a lone source must reproduce it.

    The outputs of all source slots are summed and scored against ``target``
    with the SNR objective.
    """
    out = model(single_source_input, ref)
    return snr_loss(T.sum(out, axis=0), target)


def global_grad_norm(params: Sequence[Tensor]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm
