"""Loss assembly: closed-form KL regularizer, Wasserstein and
Gromov-Wasserstein InfoNCE terms, total loss, and the ablation variants.

The contrastive terms consume distances through a provider object so the
InfoNCE algebra is testable with injected scalars, independent of the
transport solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from . import ot
from .autodiff import Tensor
from .sampler import StructureMatrix, Subgraph

ABLATION_MODES = ("none", "no-reg", "decoder", "recon", "dropout")


@dataclass
class AblationVariant:
    """Declarative loss-assembly modifier for one Table-style ablation mode."""

    mode: str
    use_kl: bool
    use_decoder: bool
    use_recon: bool
    use_dropout: bool


def ablation_variant(mode: str) -> AblationVariant:
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}, expected one of {ABLATION_MODES}")
    return AblationVariant(
        mode=mode,
        use_kl=mode not in ("no-reg", "dropout"),
        use_decoder=mode == "decoder",
        use_recon=mode == "recon",
        use_dropout=mode == "dropout",
    )


@dataclass
class SubgraphView:
    """Everything the loss needs about one sampled subgraph."""

    subgraph: Subgraph
    x_orig: Tensor  # (k, latent) encoder rows
    x_emb: Tensor  # (k, latent) reparameterized (and possibly ablated) rows
    mu: Tensor
    logvar: Tensor
    struct_orig: StructureMatrix
    struct_emb: StructureMatrix


@dataclass
class SubgraphBatch:
    views: list  # list[SubgraphView]
    sigma_convention: str = "half"

    def __len__(self):
        return len(self.views)


@dataclass
class LossBreakdown:
    l_w: Tensor
    l_gw: Tensor
    kl: Tensor
    recon: Tensor
    total: Tensor

    def as_floats(self) -> dict:
        return {"l_w": self.l_w.item(), "l_gw": self.l_gw.item(),
                "kl": self.kl.item(), "recon": self.recon.item(),
                "total": self.total.item()}


# ---------------------------------------------------------------------------
# KL regularizer
# ---------------------------------------------------------------------------

def kl_term(batch: SubgraphBatch) -> Tensor:
    """(1/|P|) sum over nodes and latent dims of (mu^2 + sigma^2 - 1 - 2 log sigma).

    |P| counts nodes across all sampled subgraphs (with multiplicity: a node
    appearing in two subgraphs has two embeddings). No 1/2 factor; the
    regularization weight absorbs scale.
    """
    total_nodes = sum(v.subgraph.size for v in batch.views)
    if total_nodes == 0:
        raise ValueError("kl_term: empty batch")
    acc = None
    for v in batch.views:
        mu, lv = v.mu, v.logvar
        if batch.sigma_convention == "half":
            # head output L = log sigma^2: sigma^2 = exp(L), 2 log sigma = L
            per = ad.sub(ad.sadd(ad.add(ad.mul(mu, mu), ad.exp(lv)), -1.0), lv)
        elif batch.sigma_convention == "literal":
            # sigma = exp(L): sigma^2 = exp(2L), 2 log sigma = 2L
            two_lv = ad.smul(lv, 2.0)
            per = ad.sub(ad.sadd(ad.add(ad.mul(mu, mu), ad.exp(two_lv)), -1.0), two_lv)
        else:
            raise ValueError(f"unknown sigma convention {batch.sigma_convention!r}")
        s = ad.sum_all(per)
        acc = s if acc is None else ad.add(acc, s)
    return ad.smul(acc, 1.0 / total_nodes)


# ---------------------------------------------------------------------------
# InfoNCE terms over a distance provider
# ---------------------------------------------------------------------------

class DistanceProvider:
    """Interface the contrastive terms consume.

    ``view`` is "emb" when the j-side uses embedded features and "orig" when
    it uses the original ones; the positive pair is (i, i, "emb").
    """

    def wasserstein(self, i: int, j: int, view: str) -> Tensor:
        raise NotImplementedError

    def gromov(self, i: int, j: int, view: str) -> Tensor:
        raise NotImplementedError


class InjectedDistances(DistanceProvider):
    """Fixed scalar distances keyed by (kind, i, j, view); for tests."""

    def __init__(self, table: dict):
        self.table = {k: (v if isinstance(v, Tensor) else Tensor([[float(v)]]))
                      for k, v in table.items()}

    def wasserstein(self, i, j, view):
        return self.table[("w", i, j, view)]

    def gromov(self, i, j, view):
        return self.table[("gw", i, j, view)]


def _logsumexp(terms) -> Tensor:
    """Stable log-sum-exp of 1x1 tensors via a constant max shift."""
    row = ad.concat_cols(terms)  # (1, m)
    shift = float(row.values.max())
    z = ad.sum_all(ad.exp(ad.sadd(row, -shift)))
    return ad.sadd(ad.log(z), shift)


def _infonce_sum(n: int, dist, tau: float, include_positive: bool) -> Tensor:
    """sum_i [ d_pos(i)/tau + log sum_{j != i} (e^{-d_emb(i,j)/tau} + e^{-d_orig(i,j)/tau}) ].

    ``dist(i, j, view)`` returns a scalar tensor; the positive is
    dist(i, i, "emb"). Equals -sum_i log(numerator/denominator) of the
    contrastive ratio, computed with max-shifted exponentials.
    """
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 subgraphs")
    total = None
    for i in range(n):
        d_pos = dist(i, i, "emb")
        exponents = []
        for j in range(n):
            if j == i:
                continue
            exponents.append(ad.smul(dist(i, j, "emb"), -1.0 / tau))
            exponents.append(ad.smul(dist(i, j, "orig"), -1.0 / tau))
        if include_positive:
            exponents.append(ad.smul(d_pos, -1.0 / tau))
        term = ad.add(ad.smul(d_pos, 1.0 / tau), _logsumexp(exponents))
        total = term if total is None else ad.add(total, term)
    return total


def loss_w(batch_size: int, provider: DistanceProvider, alpha: float,
           tau: float, include_positive: bool = False) -> Tensor:
    """Feature-distribution InfoNCE over Wasserstein distances, scaled by alpha."""
    return ad.smul(
        _infonce_sum(batch_size, provider.wasserstein, tau, include_positive),
        alpha)


def loss_gw(batch_size: int, provider: DistanceProvider, alpha: float,
            tau: float, include_positive: bool = False) -> Tensor:
    """Topology InfoNCE over Gromov-Wasserstein distances, scaled by 1 - alpha."""
    return ad.smul(
        _infonce_sum(batch_size, provider.gromov, tau, include_positive),
        1.0 - alpha)


# ---------------------------------------------------------------------------
# pairwise OT provider over a concrete batch
# ---------------------------------------------------------------------------

class PairwiseOTProvider(DistanceProvider):
    """Solves every needed transport problem for a batch, in sorted pair order.

    Original-view distances are symmetric in (i, j) and solved once per
    unordered pair. ``plans`` maps (kind, i, j, view) to the coupling used;
    passing ``plans`` replays those couplings frozen (envelope objective),
    which makes the loss a smooth function of the parameters for
    finite-difference checks.
    """

    def __init__(self, batch: SubgraphBatch, tau: float, eps: float,
                 max_iter: int = ot.DEFAULT_MAX_ITER, tol: float = ot.DEFAULT_TOL,
                 gw_outer_iter: int = ot.DEFAULT_OUTER_ITER,
                 plans: dict | None = None, threads: int = 1):
        self.batch = batch
        self.tau = tau
        self.eps = eps
        self.max_iter = max_iter
        self.tol = tol
        self.gw_outer_iter = gw_outer_iter
        self.replay = plans
        self.threads = threads
        self.plans: dict = {}
        self._cost: dict = {}
        self._solved = False

    def _canonical(self, kind, i, j, view):
        if view == "orig" and j < i:
            return (kind, j, i, view)
        return (kind, i, j, view)

    def _needed_keys(self):
        n = len(self.batch)
        keys = []
        for i in range(n):
            keys.append(("w", i, i, "emb"))
            keys.append(("gw", i, i, "emb"))
            for j in range(n):
                if j == i:
                    continue
                keys.append(("w", i, j, "emb"))
                keys.append(("gw", i, j, "emb"))
                keys.append(self._canonical("w", i, j, "orig"))
                keys.append(self._canonical("gw", i, j, "orig"))
        return sorted(set(keys))

    def solve_all(self) -> None:
        """Solve plans and build tracked costs for every pair.

        Tape operations (cost matrices, tracked costs) run serially in sorted
        key order so the recorded graph is reproducible; the plan solves touch
        only numpy values and may fan out to a thread pool.
        """
        if self._solved:
            return
        views = self.batch.views
        keys = self._needed_keys()

        # phase 1 (serial, on tape): differentiable cost inputs per key
        w_costs = {}
        gw_inputs = {}
        for key in keys:
            kind, i, j, view = key
            if kind == "w":
                xa = views[i].x_orig
                xb = views[j].x_emb if view == "emb" else views[j].x_orig
                w_costs[key] = ot.cost_matrix(xa, xb, self.tau)
            else:
                dbm = views[j].struct_emb if view == "emb" else views[j].struct_orig
                gw_inputs[key] = (views[i].struct_orig.matrix, dbm.matrix)

        # phase 2 (parallelizable, values only): transport plans
        def solve(key):
            if self.replay is not None:
                return self.replay[key]
            if key[0] == "w":
                return ot.sinkhorn_plan(w_costs[key].matrix.values, eps=self.eps,
                                        max_iter=self.max_iter, tol=self.tol)
            da, db = gw_inputs[key]
            return ot.gw_plan(da.values, db.values, eps=self.eps,
                              outer_iter=self.gw_outer_iter,
                              max_iter=self.max_iter, tol=self.tol)

        if self.threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                solved = dict(zip(keys, pool.map(solve, keys)))
        else:
            solved = {key: solve(key) for key in keys}

        # phase 3 (serial, on tape): envelope costs in sorted key order
        for key in keys:
            plan = solved[key]
            self.plans[key] = plan
            if key[0] == "w":
                self._cost[key] = ot.plan_cost(w_costs[key], plan)
            else:
                da, db = gw_inputs[key]
                cost, _ = ot.gromov_wasserstein(da, db, plan=plan)
                self._cost[key] = cost
        self._solved = True

    def wasserstein(self, i, j, view):
        self.solve_all()
        return self._cost[self._canonical("w", i, j, view)]

    def gromov(self, i, j, view):
        self.solve_all()
        return self._cost[self._canonical("gw", i, j, view)]


# ---------------------------------------------------------------------------
# total loss
# ---------------------------------------------------------------------------

def recon_term(batch: SubgraphBatch) -> Tensor:
    """Mean over subgraphs of the elementwise L1 norm of X - X_embedded."""
    acc = None
    for v in batch.views:
        s = ad.sum_all(ad.absval(ad.sub(v.x_orig, v.x_emb)))
        acc = s if acc is None else ad.add(acc, s)
    return ad.smul(acc, 1.0 / len(batch.views))


def total_loss(batch: SubgraphBatch, cfg, provider: DistanceProvider | None = None,
               ) -> LossBreakdown:
    """Contrastive terms plus the weighted KL (and the recon ablation extra).

    ``cfg`` supplies alpha, beta, tau, eps_sinkhorn, ablation and solver
    settings; ``provider`` overrides the pairwise OT solver for testing.
    """
    variant = ablation_variant(cfg.ablation)
    if provider is None:
        provider = PairwiseOTProvider(
            batch, tau=cfg.tau, eps=cfg.eps_sinkhorn,
            max_iter=cfg.sinkhorn_max_iter, tol=cfg.sinkhorn_tol,
            gw_outer_iter=cfg.gw_outer_iter, threads=cfg.threads)
    n = len(batch)
    lw = loss_w(n, provider, cfg.alpha, cfg.tau,
                include_positive=cfg.denominator_includes_positive)
    lgw = loss_gw(n, provider, cfg.alpha, cfg.tau,
                  include_positive=cfg.denominator_includes_positive)
    kl = kl_term(batch)
    beta_eff = cfg.beta if variant.use_kl else 0.0
    total = ad.add(ad.add(lw, lgw), ad.smul(kl, beta_eff))
    if variant.use_recon:
        rec = recon_term(batch)
        total = ad.add(total, rec)
    else:
        rec = Tensor([[0.0]])
    return LossBreakdown(l_w=lw, l_gw=lgw, kl=kl, recon=rec, total=total)
