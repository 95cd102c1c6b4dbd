"""Central finite-difference gradient checking in float64."""

from __future__ import annotations

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from psgan.autodiff.tensor import Tape, Tensor, backward, mul, sum_


def numerical_grad(f: Callable[[], float], arr: np.ndarray, index, h: float = 1e-3) -> float:
    old = arr[index]
    arr[index] = old + h
    fp = f()
    arr[index] = old - h
    fm = f()
    arr[index] = old
    return (fp - fm) / (2.0 * h)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor).

    The floor is 1e-3 of the largest numeric magnitude, so entries that are
    tiny relative to the gradient's own scale are judged absolutely.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    floor = max(1e-3 * float(np.abs(numeric).max(initial=0.0)), 1e-8)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], h: float = 1e-3,
                    seed: int = 0, max_entries: Optional[int] = None) -> Dict[int, float]:
    """Compare tape gradients of ``sum(fn(*inputs) * R)`` with finite differences.

    ``R`` is a fixed random projection so non-scalar outputs are covered.
    Everything runs in float64. Returns the worst relative error per input.
    With ``max_entries`` only that many randomly chosen entries per input are
    probed.
    """
    # a derived stream, so the probe never equals an input drawn from default_rng(seed)
    rng = np.random.default_rng([seed, 1])
    arrays = [np.array(a, dtype=np.float64) for a in inputs]

    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    with Tape() as tape:
        out = fn(*tensors)
        probe = rng.standard_normal(out.shape)
        loss = sum_(mul(out, Tensor(probe, dtype=np.float64)))
    backward(loss, tape)

    def evaluate():
        ts = [Tensor(a, dtype=np.float64) for a in arrays]
        return float((fn(*ts).data * probe).sum())

    worst = {}
    for k, (arr, t) in enumerate(zip(arrays, tensors)):
        analytic = t.grad if t.grad is not None else np.zeros_like(arr)
        if max_entries is None or arr.size <= max_entries:
            idx = list(np.ndindex(arr.shape))
        else:
            flat = rng.choice(arr.size, size=max_entries, replace=False)
            idx = [np.unravel_index(i, arr.shape) for i in flat]
        num = np.array([numerical_grad(evaluate, arr, i, h) for i in idx])
        ana = np.array([analytic[i] for i in idx])
        worst[k] = float(relative_error(ana, num).max(initial=0.0))
    return worst
