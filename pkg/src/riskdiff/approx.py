"""Function approximators for the backward solver.

Three interchangeable regressor kinds:

* ``poly``  -- least squares on the tensor polynomial basis {S^j V^k, j+k <= d}
  via normal equations with a tiny ridge, inputs standardized first;
* ``net``   -- a small ReLU MLP with three output heads trained by mini-batch
  Adam, with analytic backprop (no autodiff framework);
* ``table`` -- exact conditional expectations by group averaging, used on the
  oracle tree's enumerated path space.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, ParameterError, TrainingDivergedError

__all__ = [
    "PolyRegressor", "NetConfig", "NetRegressor", "TableRegressor",
    "fit_poly", "fit_net", "SquaredErrorLoss", "Adam",
    "save_regressor", "load_regressor",
]


def _poly_exponents(degree: int):
    return [(j, k) for total in range(degree + 1)
            for j in range(total + 1) for k in [total - j]]


def _standardize_stats(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def _design(x_std: np.ndarray, exponents) -> np.ndarray:
    cols = [x_std[:, 0] ** j * x_std[:, 1] ** k for j, k in exponents]
    return np.column_stack(cols)


@dataclass
class PolyRegressor:
    """Fitted polynomial least-squares regressor (possibly multi-output)."""

    degree: int
    mean: np.ndarray
    std: np.ndarray
    coef: np.ndarray  # (n_basis, n_outputs)

    kind = "poly"

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        x = (np.asarray(inputs, dtype=float) - self.mean) / self.std
        a = _design(x, _poly_exponents(self.degree))
        return a @ self.coef


def fit_poly(samples: np.ndarray, targets: np.ndarray, degree: int,
             ridge: float = 1e-10) -> PolyRegressor:
    """Least squares of ``targets`` on the standardized polynomial basis.

    ``targets`` may be (n,) or (n, k); each column is fitted independently
    through shared normal equations.
    """
    if degree < 0 or degree > 4:
        raise ParameterError(f"degree must be in [0, 4], got {degree}")
    x = np.asarray(samples, dtype=float)
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    exponents = _poly_exponents(degree)
    if x.shape[0] < len(exponents):
        raise FitError(f"need at least {len(exponents)} samples for degree "
                       f"{degree}, got {x.shape[0]}")

    mean, std = _standardize_stats(x)
    a = _design((x - mean) / std, exponents)
    gram = a.T @ a + ridge * np.eye(a.shape[1])
    try:
        coef = np.linalg.solve(gram, a.T @ y)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"normal equations singular beyond ridge repair "
                       f"(cond ~ {np.linalg.cond(gram):.3e})") from exc
    if not np.all(np.isfinite(coef)):
        raise FitError(f"non-finite coefficients; condition number "
                       f"{np.linalg.cond(gram):.3e}")
    return PolyRegressor(degree=degree, mean=mean, std=std, coef=coef)


@dataclass(frozen=True)
class NetConfig:
    """Hyperparameters of the MLP regressor.

    Epoch schedule: ``epochs_first`` for early backward steps,
    ``epochs_late`` for the final ``late_window`` steps of the backward loop
    (warm-starting from the previous step's network is what makes the
    reduced count viable).
    """

    hidden: tuple = (32, 32)
    epochs_first: int = 1000
    epochs_late: int = 300
    late_window: int = 5
    batch_size: int = 1100
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if any(w < 1 for w in self.hidden):
            raise ParameterError("hidden widths must be >= 1")
        if self.learning_rate <= 0:
            raise ParameterError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ParameterError("batch size must be >= 1")


class Adam:
    """Adam optimizer over a flat list of parameter arrays."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class _MLP:
    """ReLU MLP with linear 3-head output and hand-written backprop."""

    def __init__(self, widths, rng=None, params=None):
        self.widths = list(widths)
        if params is not None:
            self.params = [p.copy() for p in params]
            return
        self.params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = np.sqrt(2.0 / fan_in)
            w = rng.normal(0.0, scale, size=(fan_in, fan_out))
            self.params.append(w)
            self.params.append(np.zeros(fan_out))
        # zero output head: initial prediction is the output bias
        self.params[-2][:] = 0.0

    def copy(self):
        return _MLP(self.widths, params=self.params)

    def forward(self, x):
        acts = [x]
        n_layers = len(self.widths) - 1
        h = x
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = h @ w + b
            if layer < n_layers - 1:
                h = np.maximum(z, 0.0)  # subgradient 0 at exactly 0
            else:
                h = z
            acts.append(h)
        return h, acts

    def backward(self, acts, dout):
        """Gradients of a scalar loss wrt params, given d(loss)/d(outputs)."""
        n_layers = len(self.widths) - 1
        grads = [None] * len(self.params)
        delta = dout
        for layer in reversed(range(n_layers)):
            h_in = acts[layer]
            if layer < n_layers - 1:
                delta = delta * (acts[layer + 1] > 0.0)
            grads[2 * layer] = h_in.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = delta @ self.params[2 * layer].T
        return grads


@dataclass
class NetRegressor:
    """Trained MLP with frozen input standardization."""

    mlp: _MLP
    mean: np.ndarray
    std: np.ndarray
    final_loss: float = float("nan")

    kind = "net"

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        x = (np.asarray(inputs, dtype=float) - self.mean) / self.std
        out, _ = self.mlp.forward(x)
        return out


class SquaredErrorLoss:
    """Plain mean squared error of the first output head against targets."""

    def __init__(self, targets):
        self.targets = np.asarray(targets, dtype=float)

    def __call__(self, outputs, rows):
        r = outputs[:, 0] - self.targets[rows]
        n = len(rows)
        grad = np.zeros_like(outputs)
        grad[:, 0] = 2.0 * r / n
        return float(np.mean(r * r)), grad


def fit_net(samples: np.ndarray, loss, config: NetConfig, epochs: int | None = None,
            warm_start: NetRegressor | None = None,
            init_output_bias=None) -> NetRegressor:
    """Minimize an empirical residual loss over the MLP by mini-batch Adam.

    ``loss(outputs, rows) -> (value, d value / d outputs)`` evaluates the
    squared-residual functional on the batch ``rows``.  Training is
    deterministic under a fixed config seed and sample order.
    """
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    if config.batch_size > n:
        raise ParameterError(f"batch size {config.batch_size} exceeds sample "
                             f"count {n}")
    if epochs is None:
        epochs = config.epochs_first

    rng = np.random.default_rng(config.seed)
    if warm_start is not None:
        mean, std = warm_start.mean, warm_start.std
        mlp = warm_start.mlp.copy()
    else:
        mean, std = _standardize_stats(x)
        widths = [x.shape[1], *config.hidden, 3]
        mlp = _MLP(widths, rng=rng)
        if init_output_bias is not None:
            mlp.params[-1][:] = np.asarray(init_output_bias, dtype=float)

    x_std = (x - mean) / std
    adam = Adam(lr=config.learning_rate, beta1=config.beta1,
                beta2=config.beta2, eps=config.eps)
    last = float("nan")
    step = 0
    total_steps = epochs * ((n + config.batch_size - 1) // config.batch_size)
    # tail averaging: the returned parameters are the average over the last
    # quarter of optimizer steps, which damps minibatch noise considerably
    tail_start = int(total_steps * 0.75)
    tail_sum = None
    tail_count = 0
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            rows = perm[start:start + config.batch_size]
            out, acts = mlp.forward(x_std[rows])
            last, dout = loss(out, rows)
            if not np.isfinite(last):
                raise TrainingDivergedError(
                    f"non-finite loss at optimizer step {step}", step_index=step)
            grads = mlp.backward(acts, dout)
            adam.step(mlp.params, grads)
            step += 1
            if step > tail_start:
                if tail_sum is None:
                    tail_sum = [p.copy() for p in mlp.params]
                else:
                    for acc, p in zip(tail_sum, mlp.params):
                        acc += p
                tail_count += 1
    if tail_count > 0:
        mlp = _MLP(mlp.widths,
                   params=[acc / tail_count for acc in tail_sum])
    return NetRegressor(mlp=mlp, mean=mean, std=std, final_loss=last)


def net_loss_and_param_grads(reg: NetRegressor, samples, loss, rows):
    """Loss and parameter gradients at fixed parameters (for gradient checks)."""
    x = (np.asarray(samples, dtype=float) - reg.mean) / reg.std
    out, acts = reg.mlp.forward(x[rows])
    value, dout = loss(out, rows)
    return value, reg.mlp.backward(acts, dout)


@dataclass
class TableRegressor:
    """Exact lookup regressor keyed by discrete state (tree node) indices."""

    values: np.ndarray      # (n_groups, n_outputs)

    kind = "table"

    def predict(self, group_indices: np.ndarray) -> np.ndarray:
        return self.values[np.asarray(group_indices, dtype=int)]


def fit_table(group_indices: np.ndarray, targets: np.ndarray) -> TableRegressor:
    """Group means of ``targets`` (columns independent) -- the exact
    conditional expectation on a finite path space with uniform weights."""
    gi = np.asarray(group_indices, dtype=int)
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n_groups = gi.max() + 1
    counts = np.bincount(gi, minlength=n_groups).astype(float)
    vals = np.empty((n_groups, y.shape[1]))
    for c in range(y.shape[1]):
        vals[:, c] = np.bincount(gi, weights=y[:, c], minlength=n_groups) / counts
    return TableRegressor(values=vals)


# versioned regressor serialization ("RDRG"), little-endian f64 payloads
_RDRG_MAGIC = b"RDRG"
_RDRG_VERSION = 1
_KIND_POLY, _KIND_NET = 1, 2


def save_regressor(reg, path: str) -> None:
    with open(path, "wb") as fh:
        if isinstance(reg, PolyRegressor):
            fh.write(struct.pack("<4sIIqq", _RDRG_MAGIC, _RDRG_VERSION,
                                 _KIND_POLY, reg.degree, reg.coef.shape[1]))
            for arr in (reg.mean, reg.std, reg.coef):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        elif isinstance(reg, NetRegressor):
            widths = reg.mlp.widths
            fh.write(struct.pack("<4sIIq", _RDRG_MAGIC, _RDRG_VERSION,
                                 _KIND_NET, len(widths)))
            fh.write(struct.pack(f"<{len(widths)}q", *widths))
            for arr in (reg.mean, reg.std, *reg.mlp.params):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        else:
            raise ParameterError(f"cannot serialize regressor kind "
                                 f"{getattr(reg, 'kind', type(reg).__name__)!r}")


def load_regressor(path: str):
    with open(path, "rb") as fh:
        magic, version, kind = struct.unpack("<4sII", fh.read(12))
        if magic != _RDRG_MAGIC:
            raise FitError(f"not a regressor file: bad magic {magic!r}")
        if version != _RDRG_VERSION:
            raise FitError(f"unsupported regressor version {version}")

        def block(shape):
            count = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()

        if kind == _KIND_POLY:
            degree, n_out = struct.unpack("<qq", fh.read(16))
            n_basis = len(_poly_exponents(degree))
            mean = block((2,))
            std = block((2,))
            coef = block((n_basis, n_out))
            return PolyRegressor(degree=degree, mean=mean, std=std, coef=coef)
        if kind == _KIND_NET:
            (n_widths,) = struct.unpack("<q", fh.read(8))
            widths = list(struct.unpack(f"<{n_widths}q", fh.read(8 * n_widths)))
            mean = block((widths[0],))
            std = block((widths[0],))
            params = []
            for fan_in, fan_out in zip(widths[:-1], widths[1:]):
                params.append(block((fan_in, fan_out)))
                params.append(block((fan_out,)))
            mlp = _MLP(widths, params=params)
            return NetRegressor(mlp=mlp, mean=mean, std=std)
        raise FitError(f"unknown regressor kind tag {kind}")
