"""Dense MLP substrate: layers, forward/backward, Adam, gradient checking.

Everything is float64 numpy. Batches are row-major: one sample per row.
The backward pass returns gradients shaped exactly like the parameters,
so Adam and the finite-difference checker can treat a network as a flat
list of arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError

ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh")


def activate(name, z, slope=0.2):
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z >= 0.0, z, slope * z)
    if name == "tanh":
        return np.tanh(z)
    raise ConfigError(f"unknown activation {name!r}")


def activate_grad(name, z, slope=0.2):
    """d activation / d z evaluated at pre-activation z."""
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z >= 0.0).astype(np.float64)
    if name == "leaky_relu":
        return np.where(z >= 0.0, 1.0, slope)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    raise ConfigError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray    # (out_dim,)
    activation: str = "identity"
    slope: float = 0.2

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ConfigError("layer weight must be 2-d and bias 1-d")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ConfigError(
                f"bias length {self.bias.shape[0]} does not match "
                f"weight output dim {self.weight.shape[1]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ConfigError("layer parameters must be finite")


@dataclass
class Mlp:
    layers: list

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ConfigError(
                    f"layer dims incompatible: {prev.weight.shape} -> {nxt.weight.shape}"
                )

    @property
    def in_dim(self):
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self):
        return self.layers[-1].weight.shape[1]

    def param_arrays(self):
        """References to all parameter arrays, weight then bias per layer."""
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def copy(self):
        return Mlp([
            Layer(l.weight.copy(), l.bias.copy(), l.activation, l.slope)
            for l in self.layers
        ])


def glorot_init(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_mlp(dims, activations, rng, slope=0.2):
    """Build an MLP with Glorot-uniform weights and zero biases.

    dims has one more entry than activations: dims[i] -> dims[i+1] with
    activations[i] applied after each affine map.
    """
    if len(dims) != len(activations) + 1:
        raise ConfigError("need len(dims) == len(activations) + 1")
    layers = []
    for i, act in enumerate(activations):
        w = glorot_init(rng, dims[i], dims[i + 1])
        b = np.zeros(dims[i + 1])
        layers.append(Layer(w, b, act, slope))
    return Mlp(layers)


def mlp_forward(mlp, x):
    """Run the network on a batch. Returns (output, cache).

    cache holds per-layer (input, pre-activation) pairs and is consumed
    by mlp_backward.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("input must be a 2-d batch")
    if x.shape[1] != mlp.in_dim:
        raise ConfigError(
            f"input dim {x.shape[1]} does not match network input dim {mlp.in_dim}"
        )
    cache = []
    h = x
    for layer in mlp.layers:
        z = h @ layer.weight + layer.bias
        cache.append((h, z))
        h = activate(layer.activation, z, layer.slope)
    if not np.isfinite(h).all():
        raise UsageError("non-finite values in forward pass output")
    return h, cache


def mlp_backward(mlp, cache, d_out):
    """Backpropagate an upstream gradient through the network.

    Returns (grads, d_input) where grads is a flat list aligned with
    mlp.param_arrays().
    """
    if len(cache) != len(mlp.layers):
        raise UsageError("cache does not match network depth")
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != (cache[-1][1].shape[0], mlp.out_dim):
        raise UsageError(
            f"upstream gradient shape {d_out.shape} does not match output"
        )
    grads = [None] * (2 * len(mlp.layers))
    d_h = d_out
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        h_in, z = cache[i]
        if h_in.shape[1] != layer.weight.shape[0]:
            raise UsageError("stale cache: layer input dim changed")
        d_z = d_h * activate_grad(layer.activation, z, layer.slope)
        grads[2 * i] = h_in.T @ d_z
        grads[2 * i + 1] = d_z.sum(axis=0)
        d_h = d_z @ layer.weight.T
    return grads, d_h


@dataclass
class AdamState:
    alpha: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.9
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, alpha=0.001, beta1=0.5, beta2=0.9, epsilon=1e-8):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError("Adam decay rates must lie in [0, 1)")
        return cls(
            alpha=alpha, beta1=beta1, beta2=beta2, epsilon=epsilon, t=0,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on the parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UsageError("parameter/gradient/state lengths differ")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise UsageError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        p -= state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)


def gradient_check(f, params, step=1e-5):
    """Compare analytic gradients with central finite differences.

    f() evaluates the loss using the current contents of the arrays in
    params and returns (loss, grads) with grads aligned with params.
    Returns the max relative error over all parameter entries.
    """
    _, grads = f()
    worst = 0.0
    for p, g in zip(params, grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + step
            plus, _ = f()
            p[idx] = orig - step
            minus, _ = f()
            p[idx] = orig
            numeric = (plus - minus) / (2.0 * step)
            analytic = g[idx]
            # the floor keeps round-off noise in near-zero gradients from
            # registering as relative error (loss ulp / step is ~1e-11)
            denom = max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
