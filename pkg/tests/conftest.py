"""Shared helpers: float64 module conversion and parameter gradient checks."""

import numpy as np
import pytest

from psgan.autodiff import Tape, backward
from psgan.autodiff.gradcheck import numerical_grad, relative_error
from psgan.data.synth import SynthSpec, synthetic_samples


def to_float64(*modules):
    for m in modules:
        for _, p in m.named_parameters():
            p.data = p.data.astype(np.float64)


def param_gradcheck(named_params, loss_fn, n_entries=3, h=1e-6, seed=0):
    """Relative errors between tape gradients of ``loss_fn()`` and central
    differences on ``n_entries`` random entries of every parameter.

    ``loss_fn`` must be deterministic (reseed any dropout RNG inside it).
    Returns ``{name: worst relative error}``.
    """
    named_params = list(named_params)
    for _, p in named_params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    grads = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for n, p in named_params}
    rng = np.random.default_rng(seed)
    ana, num, owner = [], [], []
    for name, p in named_params:
        for i in rng.choice(p.size, min(n_entries, p.size), replace=False):
            idx = np.unravel_index(i, p.shape)
            num.append(numerical_grad(lambda: loss_fn().item(), p.data, idx, h))
            ana.append(grads[name][idx])
            owner.append(name)
        p.grad = None
    err = relative_error(np.array(ana), np.array(num))
    worst = {}
    for name, e in zip(owner, err):
        worst[name] = max(worst.get(name, 0.0), float(e))
    return worst


@pytest.fixture(scope="session")
def two_region_samples():
    return synthetic_samples(SynthSpec(min_polys=2, max_polys=2), 24, start=500)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
