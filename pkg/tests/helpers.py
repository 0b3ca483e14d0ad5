"""Independent oracles shared by the test modules.

Everything here is deliberately written the slow, obvious way (scalar
loops, O(n^2) scans, quadrature) so the fast library paths are checked
against arithmetic that shares no code with them.
"""

from __future__ import annotations

import math

import numpy as np

from ganland.autodiff import Mlp


def scalar_forward(net: Mlp, batch: np.ndarray) -> np.ndarray:
    """Pure-Python per-element forward pass."""
    out = np.zeros((batch.shape[0], net.layer_dims[-1]))
    last = net.n_layers - 1
    for r in range(batch.shape[0]):
        h = [float(v) for v in batch[r]]
        for li, (w, b) in enumerate(zip(net.weights, net.biases)):
            nxt = []
            for i in range(w.shape[0]):
                acc = float(b[i])
                for j in range(w.shape[1]):
                    acc += float(w[i, j]) * h[j]
                if li < last:
                    if net.hidden_activation == "relu":
                        acc = acc if acc > 0.0 else 0.0
                    else:
                        acc = acc if acc > 0.0 else net.leaky_slope * acc
                elif net.output_activation == "tanh":
                    acc = math.tanh(acc)
                nxt.append(acc)
            h = nxt
        out[r] = h
    return out


def fd_param_grads(loss_fn, net: Mlp, h: float = 1e-5):
    """Central finite differences of a scalar loss over all parameters."""
    grads = []
    for li in range(net.n_layers):
        gw = np.zeros_like(net.weights[li])
        for idx in np.ndindex(*gw.shape):
            plus, minus = net.copy(), net.copy()
            plus.weights[li][idx] += h
            minus.weights[li][idx] -= h
            gw[idx] = (loss_fn(plus) - loss_fn(minus)) / (2 * h)
        gb = np.zeros_like(net.biases[li])
        for idx in np.ndindex(*gb.shape):
            plus, minus = net.copy(), net.copy()
            plus.biases[li][idx] += h
            minus.biases[li][idx] -= h
            gb[idx] = (loss_fn(plus) - loss_fn(minus)) / (2 * h)
        grads.append((gw, gb))
    return grads


def fd_input_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(*x.shape):
        plus, minus = x.copy(), x.copy()
        plus[idx] += h
        minus[idx] -= h
        g[idx] = (f(plus) - f(minus)) / (2 * h)
    return g


def fd_jacobian(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Finite-difference Jacobian of a vector map at a single point."""
    base = f(x)
    J = np.zeros((base.shape[0], x.shape[0]))
    for j in range(x.shape[0]):
        plus, minus = x.copy(), x.copy()
        plus[j] += h
        minus[j] -= h
        J[:, j] = (f(plus) - f(minus)) / (2 * h)
    return J


def max_rel_err(a, b, floor: float = 1e-10) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float((np.abs(a - b) / np.maximum(np.abs(b), floor)).max())


def relu_preactivations_safe(net: Mlp, batch: np.ndarray, margin: float = 1e-3) -> bool:
    """True when no hidden pre-activation sits within margin of a relu kink."""
    h = batch
    for i in range(net.n_layers - 1):
        pre = h @ net.weights[i].T + net.biases[i]
        if np.abs(pre).min() < margin:
            return False
        h = np.maximum(pre, 0.0) if net.hidden_activation == "relu" else np.where(
            pre > 0.0, pre, net.leaky_slope * pre
        )
    return True


def brute_knn_radius(points: np.ndarray, i: int, k: int) -> float:
    """k-th nearest neighbor distance of point i by full scan."""
    dists = sorted(
        math.sqrt(float(((points[i] - points[j]) ** 2).sum()))
        for j in range(len(points))
        if j != i
    )
    return dists[k - 1]


def brute_improved_pr(x: np.ndarray, y: np.ndarray, k: int) -> tuple[float, float]:
    """O(n^2) precision/recall with per-point scans."""
    y_radii = [brute_knn_radius(y, j, k) for j in range(len(y))]
    x_radii = [brute_knn_radius(x, i, k) for i in range(len(x))]
    prec = sum(
        any(
            math.sqrt(float(((xi - y[j]) ** 2).sum())) <= y_radii[j]
            for j in range(len(y))
        )
        for xi in x
    ) / len(x)
    rec = sum(
        any(
            math.sqrt(float(((yj - x[i]) ** 2).sum())) <= x_radii[i]
            for i in range(len(x))
        )
        for yj in y
    ) / len(y)
    return prec, rec


def brute_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    def directed(p, q):
        return max(
            min(math.sqrt(float(((pi - qj) ** 2).sum())) for qj in q) for pi in p
        )

    return max(directed(a, b), directed(b, a))


def gauss_cdf_quadrature(x: float, n: int = 200_001) -> float:
    """Simpson quadrature of the normal density from -40 to x."""
    lo = -40.0
    if x <= lo:
        return 0.0
    t = np.linspace(lo, x, n)
    f = np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    return float(
        (t[1] - t[0]) / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())
    )
