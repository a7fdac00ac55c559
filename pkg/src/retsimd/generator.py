"""Text-to-image generator G_phi and its training objective.

A backend turns one text segment into a generated image representation
and scores how well a segment explains a representation (a conditional-
entropy proxy).  The trainable desk-scale backend is ``MockGenerator``:
a seeded hash embedding of the segment pushed through a trainable head
matrix, with optional deterministic noise and an optional label-correlated
leak direction for planted-signal experiments.  The generator objective
combines caption-image reconstruction with two mutual-information
regularizers: one contrasting each generated feature against its own
versus distance-weighted other segments, one pushing the mean generated
feature to be label-informative under a synced auxiliary head.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import hashing
from .classifier import ClassifierParams, classifier_backward, classifier_forward, entropy_grad_logits
from .encoders import PAD_TOKEN
from .errors import ContractError, GenerationError, NumericError, RemoteBackendError
from .evaluation import predictive_entropy
from .segmentation import SegmentSet

GEN_URL_ENV = "RETSIMD_GEN_URL"


class MockGenerator:
    """Deterministic trainable generator emitting shared-space features.

    ``generate`` maps a segment to ``embed(segment) @ head`` plus optional
    per-segment noise; with ``leak_strength`` > 0 and a label supplied, a
    fixed unit direction scaled by +-leak_strength is mixed in (planted
    signal for synthetic experiments).  ``cond_score`` is the mean squared
    reconstruction error of a feature from a segment's embedding through
    the head.
    """

    trainable = True
    output_kind = "feature"

    def __init__(
        self,
        dim: int,
        seed: int = 0,
        noise_scale: float = 0.0,
        leak_strength: float = 0.0,
    ):
        if not 0.0 <= leak_strength <= 1.0:
            raise ContractError(f"leak_strength must be in [0, 1], got {leak_strength}")
        self.dim = dim
        self.seed = seed
        self.noise_scale = noise_scale
        self.leak_strength = leak_strength
        self.head = np.eye(dim)

    def segment_embedding(self, segment) -> np.ndarray:
        """Unit-norm mean of hashed token embeddings; the generator input.

        Padding tokens are content-free and contribute nothing, so an
        all-padding segment embeds to the zero vector.
        """
        tokens = tuple(segment)
        if not tokens:
            raise ContractError("cannot embed an empty segment")
        acc = np.zeros(self.dim)
        for tok in tokens:
            if tok != PAD_TOKEN:
                acc += hashing.unit_vector(self.dim, "gen-token", self.seed, tok)
        acc /= len(tokens)
        norm = float(np.linalg.norm(acc))
        if norm > 1e-12:
            acc /= norm
        return acc

    def _noise(self, segment) -> np.ndarray:
        rng = hashing.rng_from(self.seed, "gen-noise", *segment)
        return rng.standard_normal(self.dim) * self.noise_scale

    def leak_vector(self) -> np.ndarray:
        return hashing.unit_vector(self.dim, "gen-leak", self.seed)

    def generate(self, segment, label: int | None = None) -> np.ndarray:
        x = self.segment_embedding(segment) @ self.head
        if self.noise_scale > 0.0:
            x = x + self._noise(segment)
        if label is not None and self.leak_strength > 0.0:
            x = x + (2 * int(label) - 1) * self.leak_strength * self.leak_vector()
        return x

    def cond_score(self, x: np.ndarray, segment) -> float:
        recon = self.segment_embedding(segment) @ self.head
        return float(np.mean((np.asarray(x, dtype=np.float64) - recon) ** 2))


class RemoteGenerator:
    """HTTP adapter for an external generator service.

    ``POST /generate {prompt, seed}`` returns either ``{"feature": [...]}``
    or ``{"image_base64": ...}`` (PNG bytes); ``POST /cond_score {prompt,
    feature}`` returns ``{"score": s}``.  The endpoint comes from the
    RETSIMD_GEN_URL environment variable unless given explicitly.
    """

    trainable = False

    def __init__(self, url: str | None = None, seed: int = 0, timeout: float = 60.0):
        if url is None:
            url = os.environ.get(GEN_URL_ENV)
        if not url:
            raise ContractError(f"remote generator needs a URL ({GEN_URL_ENV} unset)")
        self.url = url.rstrip("/")
        self.seed = seed
        self.timeout = timeout

    def _post(self, route: str, body: dict) -> dict:
        import requests

        try:
            resp = requests.post(self.url + route, json=body, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except Exception as exc:
            raise RemoteBackendError(f"generator endpoint {route} failed: {exc}") from exc

    def generate(self, segment, label: int | None = None):
        payload = self._post("/generate", {"prompt": " ".join(segment), "seed": self.seed})
        if "feature" in payload:
            return np.asarray(payload["feature"], dtype=np.float64)
        if "image_base64" in payload:
            import base64
            import io

            from PIL import Image

            raw = base64.b64decode(payload["image_base64"])
            with Image.open(io.BytesIO(raw)) as im:
                return np.asarray(im.convert("RGB"))
        raise RemoteBackendError("generator response lacks 'feature' and 'image_base64'")

    def cond_score(self, x, segment) -> float:
        payload = self._post(
            "/cond_score",
            {"prompt": " ".join(segment), "feature": [float(v) for v in np.asarray(x).ravel()]},
        )
        score = float(payload["score"])
        if not np.isfinite(score) or score < 0.0:
            raise RemoteBackendError(f"invalid cond_score {score}")
        return score


def make_generator_backend(config: dict, shared_dim: int):
    """Resolve a generator config block to a backend instance."""
    kind = config.get("backend", "mock")
    if kind == "mock":
        return MockGenerator(
            dim=shared_dim,
            seed=int(config.get("seed", 0)),
            noise_scale=float(config.get("noise_scale", 0.0)),
            leak_strength=float(config.get("leak_strength", 0.0)),
        )
    if kind == "remote" or kind.startswith("remote:"):
        url = kind.split(":", 1)[1] if ":" in kind else None
        return RemoteGenerator(url=url, seed=int(config.get("seed", 0)))
    raise ContractError(f"unknown generator backend {kind!r}")


def generate_sequence(
    segments: SegmentSet,
    backend,
    *,
    label: int | None = None,
    image_pathway=None,
) -> list[np.ndarray]:
    """One generated feature per segment, in order.

    Backends emitting pixel tensors are routed through ``image_pathway``
    (the detector's image encoder plus shared projection); backends
    emitting features pass through unchanged.
    """
    out = []
    for idx, seg in enumerate(segments.segments):
        try:
            raw = backend.generate(seg, label=label)
        except Exception as exc:
            raise GenerationError(f"backend failed: {exc}", segment_index=idx) from exc
        arr = np.asarray(raw)
        if arr.ndim == 3:
            if image_pathway is None:
                raise GenerationError(
                    "backend emitted pixels but no image pathway was supplied",
                    segment_index=idx,
                )
            arr = np.asarray(image_pathway(arr))
        if arr.ndim != 1:
            raise GenerationError(
                f"generated representation has shape {arr.shape}", segment_index=idx
            )
        arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise GenerationError("non-finite generated feature", segment_index=idx)
        out.append(arr)
    return out


def xi_weight(j: int, m: int, k: int) -> float:
    """Distance-proportional contrast weight |j - m| / (k - 1), 1-based."""
    if k < 2:
        raise ContractError(f"k must be >= 2, got {k}")
    if not (1 <= j <= k and 1 <= m <= k):
        raise ContractError(f"indices must lie in 1..{k}, got j={j}, m={m}")
    if j == m:
        raise ContractError("self-pairs are excluded")
    return abs(j - m) / (k - 1)


def r_mti(segments: SegmentSet, generated, backend) -> float:
    """Text-image regularizer: own-segment score minus distance-weighted
    other-segment scores, averaged over all ordered pairs.  Lower is
    better; K=1 has no negatives and scores 0."""
    generated = list(generated)
    k = segments.k
    if len(generated) != k:
        raise ContractError(f"got {len(generated)} features for K={k}")
    if k == 1:
        return 0.0
    total = 0.0
    for j in range(k):
        own = backend.cond_score(generated[j], segments.segments[j])
        inner = 0.0
        for m in range(k):
            if m == j:
                continue
            other = backend.cond_score(generated[j], segments.segments[m])
            inner += own - xi_weight(j + 1, m + 1, k) * other
        total += inner / (k - 1)
    value = total / k
    if not np.isfinite(value):
        raise NumericError("non-finite r_mti")
    return float(value)


def r_mil(generated_features, label: int, aux_head: ClassifierParams, label_prior) -> float:
    """Image-label regularizer, stored negated so minimizing it grows the
    label information carried by the mean generated feature.

    Value = H(aux prediction on mean feature) - H(label prior); the true
    label rides along for interface symmetry but the entropy-gain estimate
    itself is label-free.
    """
    prior = np.asarray(label_prior, dtype=np.float64)
    if abs(float(prior.sum()) - 1.0) > 1e-6:
        raise ContractError(f"label prior sums to {float(prior.sum())}, not 1")
    features = [np.asarray(f, dtype=np.float64) for f in generated_features]
    if not features:
        raise ContractError("need at least one generated feature")
    pooled = np.mean(features, axis=0)
    p, _ = classifier_forward(pooled, aux_head)
    return predictive_entropy(p) - predictive_entropy(prior)


def l_t2i(backend, paired_batch, image_pathway) -> float:
    """Mean squared reconstruction error on gold caption-image pairs.

    Targets are the paired images pushed through ``image_pathway`` into
    the backend's output space; the error is the per-coordinate mean,
    averaged over the batch.
    """
    if not backend.trainable:
        raise ContractError("l_t2i requires a trainable backend")
    pairs = list(paired_batch)
    if not pairs:
        raise ContractError("paired batch must be non-empty")
    total = 0.0
    for caption, image in pairs:
        gen = np.asarray(backend.generate(caption), dtype=np.float64)
        target = np.asarray(image_pathway(image), dtype=np.float64)
        if gen.shape != target.shape:
            raise ContractError(f"generated {gen.shape} vs target {target.shape}")
        total += float(np.mean((gen - target) ** 2))
    return total / len(pairs)


@dataclass(frozen=True)
class GeneratorLossReport:
    l_t2i: float
    r_mti: float
    r_mil: float
    l_gen: float
    alpha1: float
    alpha2: float

    @classmethod
    def compose(cls, l_t2i: float, r_mti: float, r_mil: float, alpha1: float, alpha2: float):
        return cls(
            l_t2i=l_t2i,
            r_mti=r_mti,
            r_mil=r_mil,
            l_gen=l_t2i + alpha1 * r_mti + alpha2 * r_mil,
            alpha1=alpha1,
            alpha2=alpha2,
        )


def aux_head_from(classifier: ClassifierParams, d: int) -> ClassifierParams:
    """Sync the auxiliary head from the detector's classifier.

    A classifier reading the fused d-vector is copied whole; a classifier
    reading a concatenated layout contributes the weight rows that face
    the generated-feature block.
    """
    if classifier.in_dim == d:
        return classifier.copy()
    if classifier.in_dim == 3 * d:
        return ClassifierParams(
            w1=classifier.w1[2 * d : 3 * d].copy(),
            b1=classifier.b1.copy(),
            w2=classifier.w2.copy(),
            b2=classifier.b2.copy(),
        )
    raise ContractError(
        f"classifier input dim {classifier.in_dim} has no generated-feature block for d={d}"
    )


def _resolve_aux_head(detector_state, d: int) -> ClassifierParams:
    if isinstance(detector_state, ClassifierParams):
        return aux_head_from(detector_state, d)
    classifier = getattr(detector_state, "classifier", None)
    if isinstance(classifier, ClassifierParams):
        return aux_head_from(classifier, d)
    raise ContractError("detector_state must be or carry ClassifierParams")


def generator_step(
    backend,
    detector_state,
    mmd_batch,
    paired_batch,
    alpha1: float = 0.01,
    alpha2: float = 0.01,
    learning_rate: float = 1e-4,
    *,
    segmenter,
    image_pathway,
    label_prior,
    optimizer=None,
) -> GeneratorLossReport:
    """One update to phi from the combined generator objective.

    The detector's parameters are read only (the auxiliary head is a
    synced copy); a non-finite loss aborts with phi untouched.  With
    ``optimizer`` unset a plain gradient-descent step of ``learning_rate``
    is applied.
    """
    if not getattr(backend, "trainable", False):
        raise ContractError("generator_step requires a trainable backend")
    if not isinstance(backend, MockGenerator):
        raise ContractError("only MockGenerator exposes analytic parameter gradients")
    d = backend.dim
    aux_head = _resolve_aux_head(detector_state, d)
    prior = np.asarray(label_prior, dtype=np.float64)

    mmd_batch = list(mmd_batch)
    pairs = list(paired_batch)
    if not pairs:
        raise ContractError("paired batch must be non-empty")
    grad = np.zeros_like(backend.head)

    # Reconstruction term and its gradient.
    t2i_total = 0.0
    for caption, image in pairs:
        u = backend.segment_embedding(caption)
        gen = np.asarray(backend.generate(caption), dtype=np.float64)
        target = np.asarray(image_pathway(image), dtype=np.float64)
        if gen.shape != target.shape:
            raise ContractError(f"generated {gen.shape} vs target {target.shape}")
        resid = gen - target
        t2i_total += float(np.mean(resid**2))
        grad += (2.0 / (d * len(pairs))) * np.outer(u, resid)
    l_t2i_val = t2i_total / len(pairs)

    # Mutual-information terms over the MMD batch.
    mti_total = 0.0
    mil_total = 0.0
    n = len(mmd_batch)
    if n == 0:
        raise ContractError("mmd batch must be non-empty")
    for sample in mmd_batch:
        segments = segmenter(sample.text)
        generated = [backend.generate(seg, label=sample.label) for seg in segments.segments]
        embeddings = [backend.segment_embedding(seg) for seg in segments.segments]
        k = segments.k

        mti_total += r_mti(segments, generated, backend)
        if alpha1 != 0.0 and k >= 2:
            coeff = alpha1 * 2.0 / (d * k * (k - 1) * n)
            for j in range(k):
                for m in range(k):
                    if m == j:
                        continue
                    resid = generated[j] - embeddings[m] @ backend.head
                    grad -= coeff * xi_weight(j + 1, m + 1, k) * np.outer(
                        embeddings[j] - embeddings[m], resid
                    )

        mil_total += r_mil(generated, sample.label, aux_head, prior)
        if alpha2 != 0.0:
            pooled = np.mean(generated, axis=0)
            p, cache = classifier_forward(pooled, aux_head)
            d_pooled, _ = classifier_backward(entropy_grad_logits(p), pooled, aux_head, cache)
            u_bar = np.mean(embeddings, axis=0)
            grad += (alpha2 / n) * np.outer(u_bar, d_pooled)

    report = GeneratorLossReport.compose(
        l_t2i=l_t2i_val, r_mti=mti_total / n, r_mil=mil_total / n, alpha1=alpha1, alpha2=alpha2
    )
    if not np.isfinite(report.l_gen):
        raise NumericError("non-finite generator loss; phi unchanged")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite generator gradient; phi unchanged")

    if optimizer is not None:
        backend.head = optimizer.step({"head": backend.head}, {"head": grad})["head"]
    elif learning_rate != 0.0:
        backend.head = backend.head - learning_rate * grad
    return report
