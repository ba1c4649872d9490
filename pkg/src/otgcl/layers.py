"""Neural building blocks: GCN, GraphSAGE mean aggregation, single-head graph
attention, the Gaussian reparameterization head, Glorot init, and Adam.

Layer parameters are plain Tensors; call ``tape.watch(p)`` on each parameter
at the start of a training step so gradients accumulate into ``p.grad``.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LEAKY_SLOPE = 0.2
MASK_OFF = -1e9  # additive mask for softmax over closed neighborhoods


def glorot(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform init; a pure function of (shape, generator state)."""
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class GcnLayer:
    """H = relu(A_hat @ X @ W), with the activation optional."""

    def __init__(self, c_in: int, c_out: int, rng, activation: bool = True):
        self.weight = Tensor(glorot(c_in, c_out, rng))
        self.activation = activation

    def params(self):
        return [("weight", self.weight)]


def gcn_forward(layer: GcnLayer, a_hat: Tensor, x: Tensor) -> Tensor:
    out = ad.matmul(a_hat, ad.matmul(x, layer.weight))
    return ad.relu(out) if layer.activation else out


class SageLayer:
    """x_v <- relu(W @ mean({x_v} u {x_u: u ~ v}) + b)."""

    def __init__(self, c_in: int, c_out: int, rng):
        self.weight = Tensor(glorot(c_in, c_out, rng))
        self.bias = Tensor(np.zeros((1, c_out)))

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]


def _closed_mean_matrix(neighborhoods, k: int) -> np.ndarray:
    """Row-stochastic matrix averaging over {v} and its neighbors."""
    m = np.zeros((k, k))
    for v, neigh in enumerate(neighborhoods):
        members = [v] + list(neigh)
        for u in members:
            if not 0 <= u < k:
                raise IndexError(f"neighbor index {u} out of range for {k} nodes")
        w = 1.0 / len(members)
        for u in members:
            m[v, u] += w
    return m


def sage_forward(layer: SageLayer, neighborhoods, x: Tensor) -> Tensor:
    k = x.shape[0]
    mean_mat = Tensor(_closed_mean_matrix(neighborhoods, k))
    agg = ad.matmul(mean_mat, x)
    out = ad.add(ad.matmul(agg, layer.weight),
                 ad.broadcast_row(layer.bias, k))
    return ad.relu(out)


class GatLayer:
    """Single-head graph attention over closed neighborhoods.

    Scores e(v, u) = leakyrelu(a . [W x_u || W x_v]) are softmax-normalized
    over u in {v} u N(v); the output row v is the attention-weighted sum of
    W x_u. No output nonlinearity.
    """

    def __init__(self, c_in: int, c_out: int, rng):
        self.weight = Tensor(glorot(c_in, c_out, rng))
        self.att = Tensor(glorot(1, 2 * c_out, rng))

    def params(self):
        return [("weight", self.weight), ("att", self.att)]


def gat_forward(layer: GatLayer, neighborhoods, x: Tensor) -> Tensor:
    k = x.shape[0]
    c_out = layer.weight.shape[1]
    h = ad.matmul(x, layer.weight)  # (k, c_out)

    # split attention vector: first half scores the source u, second the center v
    att_t = ad.transpose(layer.att)  # (2c, 1)
    src_scores = ad.matmul(h, ad.gather_rows(att_t, np.arange(0, c_out)))
    dst_scores = ad.matmul(h, ad.gather_rows(att_t, np.arange(c_out, 2 * c_out)))

    # e[v, u] = src_scores[u] + dst_scores[v], masked to the closed neighborhood
    ones_row = Tensor(np.ones((k, 1)))
    e = ad.add(ad.matmul(ones_row, ad.transpose(src_scores)),
               ad.matmul(dst_scores, ad.transpose(ones_row)))
    e = ad.leaky_relu(e, LEAKY_SLOPE)

    mask = np.full((k, k), MASK_OFF)
    for v, neigh in enumerate(neighborhoods):
        mask[v, v] = 0.0
        for u in neigh:
            if not 0 <= u < k:
                raise IndexError(f"neighbor index {u} out of range for {k} nodes")
            mask[v, u] = 0.0
    alpha = ad.softmax_rows(ad.add(e, Tensor(mask)))
    return ad.matmul(alpha, h)


def attention_weights(layer: GatLayer, neighborhoods, x_values: np.ndarray) -> np.ndarray:
    """Attention matrix for inspection/tests (no tape)."""
    k = x_values.shape[0]
    h = x_values @ layer.weight.values
    a = layer.att.values.ravel()
    c_out = layer.weight.shape[1]
    src = h @ a[:c_out]
    dst = h @ a[c_out:]
    e = src[None, :] + dst[:, None]
    e = np.where(e > 0, e, LEAKY_SLOPE * e)
    mask = np.full((k, k), MASK_OFF)
    for v, neigh in enumerate(neighborhoods):
        mask[v, v] = 0.0
        for u in neigh:
            mask[v, u] = 0.0
    e = e + mask
    e -= e.max(axis=1, keepdims=True)
    w = np.exp(e)
    return w / w.sum(axis=1, keepdims=True)


def gaussian_reparam(mu: Tensor, logvar: Tensor, noise: Tensor,
                     convention: str = "half") -> Tensor:
    """x = mu + sigma * eps with eps supplied externally (no gradient into it).

    ``convention`` selects how the log-variance head output L is read:
    "half" gives sigma = exp(0.5 L) (L is log sigma^2), "literal" gives
    sigma = exp(L).
    """
    if mu.shape != logvar.shape or mu.shape != noise.shape:
        raise ValueError(
            f"gaussian_reparam: shape mismatch {mu.shape} / {logvar.shape} / {noise.shape}")
    if convention == "half":
        sigma = ad.exp(ad.smul(logvar, 0.5))
    elif convention == "literal":
        sigma = ad.exp(logvar)
    else:
        raise ValueError(f"unknown sigma convention: {convention!r}")
    eps = Tensor(noise.values)  # detach: no gradient flows into the noise
    return ad.add(mu, ad.mul(sigma, eps))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment buffers and step counter for a fixed parameter list."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(state: AdamState, grads, lr: float) -> None:
    """One bias-corrected Adam update, in place on the parameter values."""
    if len(grads) != len(state.params):
        raise ValueError("adam_step: gradient list length mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(state.params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.values)
        if g.shape != p.values.shape:
            raise ValueError("adam_step: gradient shape mismatch")
        if not np.isfinite(g).all():
            raise FloatingPointError("adam_step: non-finite gradient")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.values -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# checkpoint format: text manifest + flat little-endian float64 payload
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"OTGCL-CKPT-1\n"


def save_params(named_params, path) -> None:
    """Write named arrays as a text shape manifest followed by raw float64 data.

    Layout: magic line; one "name rows cols" line per array; a '.' line;
    then each array's entries row-major as little-endian float64.
    """
    named_params = list(named_params)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        for name, t in named_params:
            r, c = t.values.shape
            fh.write(f"{name} {r} {c}\n".encode())
        fh.write(b".\n")
        for _, t in named_params:
            fh.write(np.ascontiguousarray(t.values, dtype="<f8").tobytes())


def load_params(path):
    """Read a checkpoint back as an ordered list of (name, array)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        manifest = []
        while True:
            line = b""
            while not line.endswith(b"\n"):
                ch = fh.read(1)
                if not ch:
                    raise ValueError("truncated checkpoint manifest")
                line += ch
            text = line.decode().strip()
            if text == ".":
                break
            name, r, c = text.rsplit(None, 2)
            manifest.append((name, int(r), int(c)))
        out = []
        for name, r, c in manifest:
            raw = fh.read(r * c * 8)
            if len(raw) != r * c * 8:
                raise ValueError("truncated checkpoint payload")
            out.append((name, np.frombuffer(raw, dtype="<f8").reshape(r, c).copy()))
    return out
