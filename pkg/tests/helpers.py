"""Shared test utilities: toy nets, finite-difference gradient checking."""

import numpy as np

from slide.network import SlideNetwork, TrainConfig
from slide.sparse import SparseVector


def toy_net(rng, *, n_hidden_layers=None, seed=None):
    """A random small network plus a compatible input, labels, and frozen
    active sets (labels always inside the output set)."""
    input_dim = int(rng.integers(4, 9))
    n_hidden = n_hidden_layers if n_hidden_layers is not None else int(rng.integers(1, 3))
    widths = [int(rng.integers(3, 9)) for _ in range(n_hidden)] + [int(rng.integers(4, 11))]
    cfg = TrainConfig(batch_size=2, seed=int(rng.integers(0, 2**31)) if seed is None else seed)
    net = SlideNetwork(input_dim, widths, cfg)
    nnz = int(rng.integers(1, input_dim + 1))
    idx = np.sort(rng.choice(input_dim, size=nnz, replace=False))
    vals = rng.standard_normal(nnz)
    vals[vals == 0] = 0.3
    x = SparseVector(idx, vals, input_dim)
    forced = []
    for li, w in enumerate(widths):
        size = int(rng.integers(1, w + 1))
        forced.append(np.sort(rng.choice(w, size=size, replace=False)))
    out = forced[-1]
    n_labels = int(rng.integers(1, min(3, out.size) + 1))
    labels = sorted(rng.choice(out, size=n_labels, replace=False).tolist())
    return net, x, labels, forced


def frozen_loss(net, x, labels, forced):
    trace = net.forward(x, 0, labels=None, forced_active=forced)
    return trace.loss(labels)


def _rel_err(analytic, fd):
    # central differences carry ~1e-10 rounding noise; below that scale the
    # comparison is meaningless, so small absolute gaps count as agreement
    if abs(analytic - fd) <= 1e-8:
        return 0.0
    return abs(analytic - fd) / max(abs(fd), abs(analytic))


def fd_check(net, x, labels, forced, h=1e-6, rel_tol=1e-4):
    """Compare captured backward gradients against central differences on the
    frozen active subnetwork. Returns the worst relative error seen."""
    trace = net.forward(x, 0, labels=None, forced_active=forced)
    captured = []
    net.backward(trace, labels, 0, update=False, capture=captured)
    worst = 0.0
    for li, rows, cols, grad, bias_grad in captured:
        layer = net.layers[li]
        for ri, r in enumerate(rows):
            if cols is not None:
                for ci, c in enumerate(cols):
                    keep = layer.w[r, c]
                    layer.w[r, c] = keep + h
                    up = frozen_loss(net, x, labels, forced)
                    layer.w[r, c] = keep - h
                    down = frozen_loss(net, x, labels, forced)
                    layer.w[r, c] = keep
                    fd = (up - down) / (2 * h)
                    err = _rel_err(grad[ri, ci], fd)
                    worst = max(worst, err)
                    assert err <= rel_tol, (
                        f"layer {li} w[{r},{c}]: grad {grad[ri, ci]:.8g} vs fd {fd:.8g}"
                    )
            keep = layer.b[r]
            layer.b[r] = keep + h
            up = frozen_loss(net, x, labels, forced)
            layer.b[r] = keep - h
            down = frozen_loss(net, x, labels, forced)
            layer.b[r] = keep
            fd = (up - down) / (2 * h)
            err = _rel_err(bias_grad[ri], fd)
            worst = max(worst, err)
            assert err <= rel_tol, f"layer {li} bias[{r}]: {bias_grad[ri]:.8g} vs fd {fd:.8g}"
    return worst


def touched_cells(access_log):
    """Set of (layer, row, col) weight cells recorded by the access log."""
    cells = set()
    for li, rows, cols in access_log:
        for r in np.asarray(rows).tolist():
            for c in np.asarray(cols).tolist():
                cells.add((li, r, c))
    return cells
