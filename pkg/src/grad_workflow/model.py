"""The assembled workflow recogniser: encoders, graph fusion, decoder, discriminator."""

from . import tensor as tn
from .adversarial import Discriminator, vka_loss
from .decoder import FusionParams, calibrated_ce, fuse, total_loss
from .encoders import EMBED, Encoders, encode_all
from .graph import GatParams, gat_forward
from .layers import Module
from .rng import Rng


class GradModel(Module):
    def __init__(self, cfg, n_classes=6, kin_dim=14):
        cfg.validate()
        self.cfg = cfg
        self.n_classes = n_classes
        root = Rng(cfg.seed)
        self.encoders = Encoders(root.spawn(1), kin_dim, cfg.domains)
        self.modalities = cfg.domains + ("k",)
        n = len(self.modalities)
        self.gat = GatParams(root.spawn(2), self.modalities) if cfg.fusion == "graph" else None
        fused_in = EMBED if cfg.fusion == "add" else n * EMBED
        self.fusion = FusionParams(root.spawn(3), n_classes, n, alpha=cfg.alpha, beta=cfg.beta,
                                   fused_in=fused_in)
        self.disc = Discriminator(root.spawn(4))

    def network_parameters(self, include_convs=True):
        """Everything the joint objective updates (never the discriminator)."""
        out = []
        for name, p in self.named_parameters():
            if name.startswith("disc."):
                continue
            if not include_convs and ".cnn.convs." in name:
                continue
            out.append(p)
        return out

    def forward(self, window, rng=None, training=False, pooled=None):
        emb = encode_all(window, self.encoders, rng, training, pooled=pooled)
        nodes = emb.as_dict()
        ordered = [nodes[m] for m in self.modalities]
        if self.cfg.fusion == "graph":
            graph = gat_forward(nodes, self.gat, rng, training)
            second = [graph.nodes[m] for m in self.modalities]
        elif self.cfg.fusion == "concat":
            graph, second = None, ordered
        else:
            graph = None
            total = ordered[0]
            for x in ordered[1:]:
                total = tn.add(total, x)
            second = [total]
        E = fuse(ordered, second, self.fusion)
        logits = self.fusion.head(E)
        return {"emb": emb, "nodes": nodes, "graph": graph, "E": E, "logits": logits}

    def adversarial_sets(self, nodes):
        true_set = [nodes[m] for m in self.cfg.vka_source if m in nodes]
        false_set = [nodes[m] for m in self.cfg.vka_target if m in nodes]
        return true_set, false_set

    def objective(self, out, labels):
        """Returns (total, l_cce, adversarial loss or None) for one forward output."""
        cfg = self.cfg
        l_cce = calibrated_ce(out["logits"], labels, cfg.effective_lam)
        adv = None
        if cfg.enable_vka:
            true_set, false_set = self.adversarial_sets(out["nodes"])
            if true_set and false_set:
                adv = vka_loss(None, None, None, None, self.disc, true_set=true_set, false_set=false_set)
        l_al = adv.l_al if adv is not None else None
        return total_loss(l_cce, l_al, cfg.gamma, cfg.effective_delta), l_cce, adv
