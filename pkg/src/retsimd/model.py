"""Detector assembly: encoders, generation, graph fusion, classifier.

``DetectorParams`` holds every trainable tensor of θ exactly once, named
for checkpointing and optimizer grouping.  The forward path of one sample
is: encode text and image, project to shared space, fetch or generate
per-segment image features, build the relationship graph, run the GCN and
the stacked cross-attention, classify.  Two reduced fusion modes support
the ablation grid: ``concat`` (no graph; text, image, and mean generated
feature concatenated) and ``none`` (no augmentation at all).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .classifier import ClassifierParams, classifier_backward, classifier_forward
from .encoders import project_shared
from .errors import ContractError, NumericError
from .fusion import AttentionParams, GcnParams
from .graph import (
    DependencyEdges,
    assemble_graph,
    fallback_dependency_edges,
    normalize_adjacency,
)
from .generator import generate_sequence
from .segmentation import SegmentationConfig, SegmentSet

FUSION_MODES = ("graph", "concat", "none")


@dataclass(frozen=True)
class ModelConfig:
    text_hidden_dim: int = 32
    image_hidden_dim: int = 32
    shared_dim: int = 16
    classifier_hidden_dim: int = 16
    fusion: str = "graph"
    encoder_seed: int = 0
    use_dependency: bool = True

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ContractError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")

    @property
    def classifier_in_dim(self) -> int:
        d = self.shared_dim
        return {"graph": d, "concat": 3 * d, "none": 2 * d}[self.fusion]

    @property
    def uses_generation(self) -> bool:
        return self.fusion != "none"


@dataclass
class DetectorParams:
    """All of θ: projections, GCN, attention, classifier."""

    projection_text: np.ndarray
    projection_image: np.ndarray
    gcn: GcnParams | None
    attention: AttentionParams | None
    classifier: ClassifierParams

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "DetectorParams":
        d = config.shared_dim
        use_graph = config.fusion == "graph"
        return cls(
            projection_text=rng.standard_normal((config.text_hidden_dim, d))
            / np.sqrt(config.text_hidden_dim),
            projection_image=rng.standard_normal((config.image_hidden_dim, d))
            / np.sqrt(config.image_hidden_dim),
            gcn=GcnParams.init(d, rng) if use_graph else None,
            attention=AttentionParams.init(d, rng) if use_graph else None,
            classifier=ClassifierParams.init(
                config.classifier_in_dim, config.classifier_hidden_dim, rng
            ),
        )

    def named(self) -> dict[str, np.ndarray]:
        out = {
            "projection_text": self.projection_text,
            "projection_image": self.projection_image,
            "classifier/w1": self.classifier.w1,
            "classifier/b1": self.classifier.b1,
            "classifier/w2": self.classifier.w2,
            "classifier/b2": self.classifier.b2,
        }
        if self.gcn is not None:
            out.update(
                {"gcn/w1": self.gcn.w1, "gcn/b1": self.gcn.b1, "gcn/w2": self.gcn.w2, "gcn/b2": self.gcn.b2}
            )
        if self.attention is not None:
            out.update(
                {"attn/wq": self.attention.wq, "attn/wk": self.attention.wk, "attn/wv": self.attention.wv}
            )
        return out

    def apply_named(self, arrays: dict[str, np.ndarray]) -> None:
        """Replace parameter tensors in place from a named dict."""
        for name, arr in arrays.items():
            self._set(name, arr)

    def _set(self, name: str, arr: np.ndarray) -> None:
        if name == "projection_text":
            self.projection_text = arr
        elif name == "projection_image":
            self.projection_image = arr
        elif name.startswith("gcn/"):
            setattr(self.gcn, name.split("/", 1)[1], arr)
        elif name.startswith("attn/"):
            key = {"wq": "wq", "wk": "wk", "wv": "wv"}[name.split("/", 1)[1]]
            setattr(self.attention, key, arr)
        elif name.startswith("classifier/"):
            setattr(self.classifier, name.split("/", 1)[1], arr)
        else:
            raise ContractError(f"unknown parameter name {name!r}")

    def copy(self) -> "DetectorParams":
        return DetectorParams(
            projection_text=self.projection_text.copy(),
            projection_image=self.projection_image.copy(),
            gcn=GcnParams(self.gcn.w1.copy(), self.gcn.b1.copy(), self.gcn.w2.copy(), self.gcn.b2.copy())
            if self.gcn is not None
            else None,
            attention=AttentionParams(
                self.attention.wq.copy(), self.attention.wk.copy(), self.attention.wv.copy()
            )
            if self.attention is not None
            else None,
            classifier=self.classifier.copy(),
        )

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray]) -> "DetectorParams":
        gcn = None
        if "gcn/w1" in arrays:
            gcn = GcnParams(arrays["gcn/w1"], arrays["gcn/b1"], arrays["gcn/w2"], arrays["gcn/b2"])
        attention = None
        if "attn/wq" in arrays:
            attention = AttentionParams(arrays["attn/wq"], arrays["attn/wk"], arrays["attn/wv"])
        return cls(
            projection_text=arrays["projection_text"],
            projection_image=arrays["projection_image"],
            gcn=gcn,
            attention=attention,
            classifier=ClassifierParams(
                arrays["classifier/w1"],
                arrays["classifier/b1"],
                arrays["classifier/w2"],
                arrays["classifier/b2"],
            ),
        )


@dataclass
class ForwardCache:
    """Intermediates of one sample's forward pass, consumed by backward."""

    z_t: np.ndarray
    z_v: np.ndarray
    h_t: np.ndarray
    h_v: np.ndarray
    h_g: list[np.ndarray]
    e: np.ndarray
    p: np.ndarray
    cls_cache: tuple
    a_hat: np.ndarray | None = None
    node_features: np.ndarray | None = None
    gcn_cache: tuple | None = None
    e_nodes: np.ndarray | None = None
    attn_cache: tuple | None = None


def forward_sample(
    params: DetectorParams,
    config: ModelConfig,
    z_t: np.ndarray,
    z_v: np.ndarray,
    h_g: list[np.ndarray],
    a_hat: np.ndarray | None,
) -> ForwardCache:
    h_t = project_shared(z_t, params.projection_text)
    h_v = project_shared(z_v, params.projection_image)

    if config.fusion == "graph":
        if a_hat is None:
            raise ContractError("graph fusion requires a normalized adjacency")
        node_features = np.vstack([h_v] + list(h_g))
        e_nodes, gcn_cache = kernels.gcn2_forward(
            a_hat, node_features, params.gcn.w1, params.gcn.b1, params.gcn.w2, params.gcn.b2
        )
        e, attn_cache = kernels.attn_fuse_forward(
            e_nodes, h_v, h_t, params.attention.wq, params.attention.wk, params.attention.wv
        )
        if not np.all(np.isfinite(e)):
            raise NumericError("non-finite fused feature")
        p, cls_cache = classifier_forward(e, params.classifier)
        return ForwardCache(
            z_t=z_t, z_v=z_v, h_t=h_t, h_v=h_v, h_g=list(h_g), e=e, p=p, cls_cache=cls_cache,
            a_hat=a_hat, node_features=node_features, gcn_cache=gcn_cache,
            e_nodes=e_nodes, attn_cache=attn_cache,
        )

    if config.fusion == "concat":
        if not h_g:
            raise ContractError("concat fusion requires generated features")
        e = np.concatenate([h_t, h_v, np.mean(h_g, axis=0)])
    else:
        e = np.concatenate([h_t, h_v])
    p, cls_cache = classifier_forward(e, params.classifier)
    return ForwardCache(
        z_t=z_t, z_v=z_v, h_t=h_t, h_v=h_v, h_g=list(h_g), e=e, p=p, cls_cache=cls_cache
    )


def backward_sample(
    d_logits: np.ndarray,
    fwd: ForwardCache,
    params: DetectorParams,
    config: ModelConfig,
) -> dict[str, np.ndarray]:
    """Gradients of a logit-level upstream signal w.r.t. every θ tensor."""
    d = config.shared_dim
    d_e, cls_grads = classifier_backward(d_logits, fwd.e, params.classifier, fwd.cls_cache)
    grads = {f"classifier/{k}": v for k, v in cls_grads.items()}

    if config.fusion == "graph":
        d_e_nodes, d_h_v_attn, d_h_t, d_wq, d_wk, d_wv = kernels.attn_fuse_backward(
            d_e, fwd.e_nodes, fwd.h_v, fwd.h_t,
            params.attention.wq, params.attention.wk, params.attention.wv, fwd.attn_cache,
        )
        d_nodes, d_gw1, d_gb1, d_gw2, d_gb2 = kernels.gcn2_backward(
            d_e_nodes, fwd.a_hat, params.gcn.w1, params.gcn.w2, fwd.gcn_cache
        )
        d_h_v = d_h_v_attn + d_nodes[0]
        grads.update(
            {
                "attn/wq": d_wq, "attn/wk": d_wk, "attn/wv": d_wv,
                "gcn/w1": d_gw1, "gcn/b1": d_gb1, "gcn/w2": d_gw2, "gcn/b2": d_gb2,
            }
        )
    elif config.fusion == "concat":
        d_h_t = d_e[:d]
        d_h_v = d_e[d : 2 * d]
    else:
        d_h_t = d_e[:d]
        d_h_v = d_e[d:]

    grads["projection_text"] = np.outer(fwd.z_t, d_h_t)
    grads["projection_image"] = np.outer(fwd.z_v, d_h_v)
    return grads


def quantize_features(features) -> list[np.ndarray]:
    """Round-trip through float32 so live values match cached bytes."""
    return [np.asarray(f, dtype=np.float32).astype(np.float64) for f in features]


class Detector:
    """End-to-end prediction pipeline around one parameter set."""

    def __init__(
        self,
        params: DetectorParams,
        model_config: ModelConfig,
        segmentation_config: SegmentationConfig,
        encoder_backend,
        generator_backend=None,
        dep_parser="fallback",
    ):
        if model_config.uses_generation and generator_backend is None:
            raise ContractError(f"fusion {model_config.fusion!r} requires a generator backend")
        self.params = params
        self.model_config = model_config
        self.segmentation_config = segmentation_config
        self.encoder = encoder_backend
        self.generator = generator_backend
        self.dep_parser = dep_parser

    def segment(self, text) -> SegmentSet:
        return self.segmentation_config.segment(text)

    def image_pathway(self, image) -> np.ndarray:
        """Pixels to shared space through the image encoder and W_a^v."""
        return project_shared(self.encoder.encode_image(image), self.params.projection_image)

    def dependency_edges(self, text) -> DependencyEdges | None:
        if not self.model_config.use_dependency:
            return None
        if self.dep_parser == "fallback":
            return fallback_dependency_edges(text)
        if self.dep_parser is None:
            return None
        return self.dep_parser.parse(text)

    def sample_adjacency(self, sample, segments: SegmentSet) -> np.ndarray:
        d = self.model_config.shared_dim
        placeholder = [np.zeros(d)] * segments.k
        graph = assemble_graph(
            np.zeros(d), placeholder, self.dependency_edges(sample.text), segments
        )
        return normalize_adjacency(graph.adjacency)

    def generated_features(
        self, sample, segments: SegmentSet, conditioned: bool = True
    ) -> list[np.ndarray]:
        features = generate_sequence(
            segments,
            self.generator,
            label=sample.label if conditioned else None,
            image_pathway=self.image_pathway,
        )
        return quantize_features(features)

    def predict_proba_visual_ablated(self, sample) -> np.ndarray:
        """Prediction with every visual evidence channel removed.

        The caller supplies a sample whose image is already a white
        placeholder; on top of that, generation runs unconditioned so
        that only content derivable from the surviving text reaches the
        fusion stage.  Detectors that never consume generated features
        fall back to the ordinary prediction path.
        """
        if not self.model_config.uses_generation:
            return self.predict_proba(sample)
        segments = self.segment(sample.text)
        h_g = self.generated_features(sample, segments, conditioned=False)
        return self.forward(sample, h_g=h_g).p

    def forward(self, sample, h_g: list[np.ndarray] | None = None, memo: dict | None = None) -> ForwardCache:
        """Full forward pass; ``memo`` (keyed by sample id) may cache the
        encoder outputs and adjacency of canonical samples."""
        entry = memo.get(sample.id) if memo is not None else None
        if entry is None:
            segments = self.segment(sample.text)
            z_t = self.encoder.encode_text(sample.text)
            z_v = self.encoder.encode_image(sample.image)
            a_hat = (
                self.sample_adjacency(sample, segments)
                if self.model_config.fusion == "graph"
                else None
            )
            if memo is not None:
                memo[sample.id] = (segments, z_t, z_v, a_hat)
        else:
            segments, z_t, z_v, a_hat = entry
        if not self.model_config.uses_generation:
            h_g = []
        elif h_g is None:
            h_g = self.generated_features(sample, segments)
        elif len(h_g) != segments.k:
            raise ContractError(
                f"sample {sample.id!r}: {len(h_g)} cached features for K={segments.k}"
            )
        return forward_sample(self.params, self.model_config, z_t, z_v, h_g, a_hat)

    def predict_proba(self, sample, memo: dict | None = None) -> np.ndarray:
        return self.forward(sample, memo=memo).p
