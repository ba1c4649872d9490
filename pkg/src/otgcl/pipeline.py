"""Training orchestration, linear-probe evaluation, and random search.

Randomness scheme: every number reported is a pure function of (graph,
config). A master seed fans out into fixed substreams via
``numpy.random.SeedSequence([seed, STREAM_*])``:

  STREAM_INIT    weight initialization
  STREAM_SAMPLE  per-epoch center sampling
  STREAM_NOISE   reparameterization noise and dropout masks
  STREAM_PROBE   probe init; repetition r uses [seed, STREAM_PROBE, r]
  STREAM_SEARCH  hyperparameter draws in random_search
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import graphstore, layers, objective, sampler
from .autodiff import Tape, Tensor

log = logging.getLogger(__name__)

STREAM_INIT = 0
STREAM_SAMPLE = 1
STREAM_NOISE = 2
STREAM_PROBE = 3
STREAM_SEARCH = 4


def _stream(seed: int, stream_id: int, *extra) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream_id, *extra]))


@dataclass
class TrainConfig:
    alpha: float = 0.5
    beta: float = 1e-3
    tau: float = 0.5
    k: int = 15
    s_size: int = 16
    eps_sinkhorn: float = 0.05
    lr: float = 1e-3
    epochs: int = 300
    seed: int = 0
    hidden_dim: int = 256
    latent_dim: int = 128
    gw_metric: str = "feature-weighted"
    ablation: str = "none"
    sigma_convention: str = "half"
    denominator_includes_positive: bool = False
    sinkhorn_max_iter: int = 500
    sinkhorn_tol: float = 1e-6
    gw_outer_iter: int = 20
    threads: int = 1

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("config: alpha must be in [0, 1]")
        if self.beta < 0:
            raise ValueError("config: beta must be >= 0")
        if self.tau <= 0:
            raise ValueError("config: tau must be > 0")
        if self.k < 1:
            raise ValueError("config: k must be >= 1")
        if self.s_size < 2:
            raise ValueError("config: s_size must be >= 2")
        if self.eps_sinkhorn <= 0:
            raise ValueError("config: eps_sinkhorn must be > 0")
        if self.epochs < 0:
            raise ValueError("config: epochs must be >= 0")
        if self.lr <= 0:
            raise ValueError("config: lr must be > 0")
        if self.hidden_dim < 1 or self.latent_dim < 1:
            raise ValueError("config: layer widths must be >= 1")
        if self.gw_metric not in sampler.STRUCTURE_MODES:
            raise ValueError(f"config: unknown gw_metric {self.gw_metric!r}")
        if self.sigma_convention not in ("half", "literal"):
            raise ValueError(f"config: unknown sigma_convention {self.sigma_convention!r}")
        if self.threads < 1:
            raise ValueError("config: threads must be >= 1")
        objective.ablation_variant(self.ablation)


@dataclass
class RunReport:
    history: list  # one dict of loss components per epoch
    embeddings: np.ndarray  # (n_nodes, latent_dim)
    accuracy_mean: float | None = None
    accuracy_std: float | None = None
    probe_repeats: int = 0
    wall_clock: float = 0.0
    config: TrainConfig | None = None
    model: object = None  # trained Model (not serialized into reports)


class Model:
    """Encoder (two GCN layers) plus the subgraph Gaussian embedding stack."""

    def __init__(self, n_features: int, cfg: TrainConfig):
        rng = _stream(cfg.seed, STREAM_INIT)
        self.cfg = cfg
        self.enc1 = layers.GcnLayer(n_features, cfg.hidden_dim, rng, activation=True)
        self.enc2 = layers.GcnLayer(cfg.hidden_dim, cfg.latent_dim, rng, activation=True)
        self.sage = layers.SageLayer(cfg.latent_dim, cfg.latent_dim, rng)
        self.gat_mu = layers.GatLayer(cfg.latent_dim, cfg.latent_dim, rng)
        self.gat_sigma = layers.GatLayer(cfg.latent_dim, cfg.latent_dim, rng)
        self.decoder = None
        if objective.ablation_variant(cfg.ablation).use_decoder:
            self.decoder = (
                layers.Tensor(layers.glorot(cfg.latent_dim, cfg.latent_dim, rng)),
                layers.Tensor(np.zeros((1, cfg.latent_dim))),
                layers.Tensor(layers.glorot(cfg.latent_dim, cfg.latent_dim, rng)),
                layers.Tensor(np.zeros((1, cfg.latent_dim))),
            )

    def named_params(self):
        out = []
        for prefix, layer in (("enc1", self.enc1), ("enc2", self.enc2),
                              ("sage", self.sage), ("gat_mu", self.gat_mu),
                              ("gat_sigma", self.gat_sigma)):
            out.extend((f"{prefix}.{n}", p) for n, p in layer.params())
        if self.decoder is not None:
            for n, p in zip(("dec.w1", "dec.b1", "dec.w2", "dec.b2"), self.decoder):
                out.append((n, p))
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def encode(self, a_hat: Tensor, x: Tensor) -> Tensor:
        return layers.gcn_forward(self.enc2, a_hat,
                                  layers.gcn_forward(self.enc1, a_hat, x))

    def decode(self, x_emb: Tensor) -> Tensor:
        w1, b1, w2, b2 = self.decoder
        k = x_emb.shape[0]
        hidden = ad.relu(ad.add(ad.matmul(x_emb, w1), ad.broadcast_row(b1, k)))
        return ad.add(ad.matmul(hidden, w2), ad.broadcast_row(b2, k))

    def load_state(self, named_arrays) -> None:
        params = dict(self.named_params())
        for name, arr in named_arrays:
            if name not in params:
                raise ValueError(f"checkpoint names unknown parameter {name!r}")
            if params[name].values.shape != arr.shape:
                raise ValueError(f"checkpoint shape mismatch for {name!r}")
            params[name].values[...] = arr


def build_batch(model: Model, g: graphstore.Graph, h2: Tensor, centers,
                noise_rng: np.random.Generator, neigh=None,
                training: bool = True) -> objective.SubgraphBatch:
    """Extract BFS subgraphs and run the Gaussian embedding on each."""
    cfg = model.cfg
    variant = objective.ablation_variant(cfg.ablation)
    if neigh is None:
        neigh = g.adjacency_lists()
    views = []
    for center in centers:
        sub = sampler.bfs_subgraph_from_lists(neigh, center, cfg.k)
        x_i = ad.gather_rows(h2, sub.index_map)
        h_s = layers.sage_forward(model.sage, sub.local_adj, x_i)
        mu = layers.gat_forward(model.gat_mu, sub.local_adj, h_s)
        logvar = layers.gat_forward(model.gat_sigma, sub.local_adj, h_s)
        noise = Tensor(noise_rng.standard_normal((sub.size, cfg.latent_dim)))
        x_emb = layers.gaussian_reparam(mu, logvar, noise, cfg.sigma_convention)
        if variant.use_decoder:
            x_emb = model.decode(x_emb)
        if variant.use_dropout and training:
            mask = (noise_rng.random((sub.size, cfg.latent_dim)) >= 0.5) / 0.5
            x_emb = ad.mul(x_emb, Tensor(mask))
        if cfg.gw_metric == "hops":
            hop = sampler.structure_matrix(sub, mode="hops")
            struct_orig = struct_emb = hop
        else:
            struct_orig = sampler.structure_matrix(sub, x_i, "feature-weighted")
            struct_emb = sampler.structure_matrix(sub, x_emb, "feature-weighted")
        views.append(objective.SubgraphView(
            subgraph=sub, x_orig=x_i, x_emb=x_emb, mu=mu, logvar=logvar,
            struct_orig=struct_orig, struct_emb=struct_emb))
    return objective.SubgraphBatch(views=views,
                                   sigma_convention=cfg.sigma_convention)


def train(g: graphstore.Graph, cfg: TrainConfig) -> RunReport:
    """Self-supervised pre-training; deterministic given (graph, config)."""
    cfg.validate()
    started = time.perf_counter()
    sample_rng = _stream(cfg.seed, STREAM_SAMPLE)
    noise_rng = _stream(cfg.seed, STREAM_NOISE)

    a_hat = Tensor(graphstore.normalize_adjacency(g))
    x_const = Tensor(g.features)
    neigh = g.adjacency_lists()
    model = Model(g.n_features, cfg)
    adam = layers.AdamState(model.params())
    s_size = min(cfg.s_size, g.n_nodes)
    if s_size < cfg.s_size:
        log.warning("s_size %d clamped to n_nodes %d", cfg.s_size, g.n_nodes)

    history = []
    for epoch in range(cfg.epochs):
        tape = Tape()
        for p in model.params():
            tape.watch(p)
        try:
            h2 = model.encode(a_hat, x_const)
            centers = sampler.sample_node_set(g.n_nodes, s_size, sample_rng)
            batch = build_batch(model, g, h2, centers, noise_rng, neigh=neigh)
            breakdown = objective.total_loss(batch, cfg)
            tape.backward(breakdown.total)
        except FloatingPointError as e:
            raise FloatingPointError(
                f"non-finite loss at epoch {epoch}: {e}") from e
        layers.adam_step(adam, [p.grad for p in model.params()], cfg.lr)
        entry = {"epoch": epoch}
        entry.update(breakdown.as_floats())
        history.append(entry)
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d: total=%.6f l_w=%.6f l_gw=%.6f kl=%.6f",
                     epoch, entry["total"], entry["l_w"], entry["l_gw"],
                     entry["kl"])

    embeddings = model.encode(a_hat, x_const).values
    return RunReport(history=history, embeddings=embeddings, config=cfg,
                     wall_clock=time.perf_counter() - started, model=model)


# ---------------------------------------------------------------------------
# linear probe
# ---------------------------------------------------------------------------

def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _accuracy(w, b, x, y) -> float:
    pred = (x @ w + b).argmax(axis=1)
    return float((pred == y).mean() * 100.0)


def linear_probe(embeddings: np.ndarray, g: graphstore.Graph,
                 probe_seed: int = 0, lr: float = 1e-2, max_steps: int = 2000,
                 patience: int = 50) -> float:
    """Test accuracy (percent) of a softmax regression on frozen embeddings.

    Trains on the labeled train split with Adam, early-stops on validation
    accuracy, and reports test accuracy at the best validation step.
    """
    acc, _ = _probe_full(embeddings, g, probe_seed, lr, max_steps, patience)
    return acc


def _probe_full(embeddings, g, probe_seed, lr=1e-2, max_steps=2000,
                patience=50):
    """(test accuracy, validation accuracy) at the best validation step."""
    def split_ids(name):
        ids = np.array([i for i in g.splits.get(name, ()) if g.labels[i] >= 0],
                       dtype=np.intp)
        if ids.size == 0:
            raise ValueError(f"linear_probe: empty {name} split")
        return ids

    tr, va, te = split_ids("train"), split_ids("val"), split_ids("test")
    x_tr, y_tr = embeddings[tr], g.labels[tr]
    x_va, y_va = embeddings[va], g.labels[va]
    x_te, y_te = embeddings[te], g.labels[te]
    n_classes = g.n_classes

    rng = np.random.default_rng(np.random.SeedSequence([int(probe_seed), STREAM_PROBE]))
    w = rng.normal(0.0, 0.01, size=(embeddings.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y_tr]

    m_w = np.zeros_like(w); v_w = np.zeros_like(w)
    m_b = np.zeros_like(b); v_b = np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    best_val = -1.0
    best_test = 0.0
    since_best = 0
    for t in range(1, max_steps + 1):
        probs = _softmax(x_tr @ w + b)
        delta = (probs - onehot) / x_tr.shape[0]
        g_w = x_tr.T @ delta
        g_b = delta.sum(axis=0)
        for param, grad, m, v in ((w, g_w, m_w, v_w), (b, g_b, m_b, v_b)):
            m *= beta1; m += (1 - beta1) * grad
            v *= beta2; v += (1 - beta2) * grad * grad
            param -= lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
        val_acc = _accuracy(w, b, x_va, y_va)
        if val_acc > best_val:
            best_val = val_acc
            best_test = _accuracy(w, b, x_te, y_te)
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    return best_test, best_val


def evaluate(g: graphstore.Graph, cfg: TrainConfig, n_repeats: int = 5) -> RunReport:
    """Train once, probe ``n_repeats`` times with distinct seeds."""
    if n_repeats < 1:
        raise ValueError("evaluate: n_repeats must be >= 1")
    report = train(g, cfg)
    mean, std = probe_embeddings(report.embeddings, g, cfg.seed, n_repeats)
    report.accuracy_mean = mean
    report.accuracy_std = std
    report.probe_repeats = n_repeats
    return report


def probe_embeddings(embeddings: np.ndarray, g: graphstore.Graph, seed: int,
                     n_repeats: int):
    """Mean and sample std of test accuracy over probe repetitions."""
    accs = [linear_probe(embeddings, g, probe_seed=int(np.random.SeedSequence(
        [int(seed), STREAM_PROBE, r]).generate_state(1)[0]))
        for r in range(n_repeats)]
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return mean, std


# ---------------------------------------------------------------------------
# random hyperparameter search
# ---------------------------------------------------------------------------

DEFAULT_RANGES = {
    "lr": (1e-4, 1e-2),  # log-uniform
    "alpha": (0.0, 1.0),  # uniform
    "beta": (1e-6, 1e2),  # log-uniform
}


def random_search(g: graphstore.Graph, base_cfg: TrainConfig,
                  ranges: dict | None = None, trials: int = 20,
                  seed: int = 0, score_fn=None):
    """Random search over (lr, alpha, beta) scored by validation probe accuracy.

    Returns (best config, trial log); ties go to the earlier trial.
    ``score_fn(g, cfg) -> float`` may replace the train-and-probe scorer.
    """
    if trials < 1:
        raise ValueError("random_search: trials must be >= 1")
    ranges = dict(DEFAULT_RANGES, **(ranges or {}))
    for name, (lo, hi) in ranges.items():
        if not lo < hi:
            raise ValueError(f"random_search: invalid range for {name}: ({lo}, {hi})")
        if name in ("lr", "beta") and lo <= 0:
            raise ValueError(f"random_search: {name} range must be positive")

    rng = _stream(seed, STREAM_SEARCH)
    if score_fn is None:
        def score_fn(graph, cfg):
            report = train(graph, cfg)
            _, val_acc = _probe_full(report.embeddings, graph, probe_seed=cfg.seed)
            return val_acc

    trial_log = []
    best_idx, best_score = -1, -np.inf
    for t in range(trials):
        lo, hi = ranges["lr"]
        lr = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        lo, hi = ranges["alpha"]
        alpha = float(rng.uniform(lo, hi))
        lo, hi = ranges["beta"]
        beta = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        cfg = replace(base_cfg, lr=lr, alpha=alpha, beta=beta)
        score = float(score_fn(g, cfg))
        trial_log.append({"trial": t, "lr": lr, "alpha": alpha, "beta": beta,
                          "val_accuracy": score})
        log.info("trial %d: lr=%.2e alpha=%.3f beta=%.2e -> val %.2f",
                 t, lr, alpha, beta, score)
        if score > best_score:
            best_idx, best_score = t, score
    best = trial_log[best_idx]
    best_cfg = replace(base_cfg, lr=best["lr"], alpha=best["alpha"],
                       beta=best["beta"])
    return best_cfg, trial_log
