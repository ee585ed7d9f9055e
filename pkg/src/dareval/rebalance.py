"""Inference-time attention rebalancing over reference-image key tokens.

The pipeline scores every reference key token by how much probe attention
it receives, then nudges the key matrix before the real attention pass:

1. uniformly subsample m query tokens (index i maps to floor(i*(Lq-1)/(m-1)));
2. probe attention: softmax(Q_sub @ K_ref^T / sqrt(d)), per head, softmax
   taken over reference tokens only;
3. per-token relevance r_k = sum of probe weights over sampled queries and
   heads, so sum_k r_k equals m*H exactly;
4. min-max normalize r to [0, 1] (flat inputs fall back to a configurable
   neutral score);
5. band the normalized scores: >= tau_high gets weight 1+gamma, <= tau_low
   gets 1-gamma, the rest stay at 1; non-reference tokens always stay at 1;
6. recompute attention with per-token-rescaled keys:
   softmax(Q @ (w * K)^T / sqrt(d)).

Because w_k scales a whole key vector, the adjusted pre-softmax logit is
exactly w_k times the baseline logit; gamma=0 reproduces baseline attention
bit for bit. Everything here is pure and deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .tensors import HeadedTensor, KeySegments


@dataclass(frozen=True)
class RebalanceConfig:
    """Hyperparameters for the rebalancing pass.

    Defaults follow the reference operating point: gamma=0.15, m=64
    sampled queries, thresholds 0.7 / 0.3.
    """

    gamma: float = 0.15
    m: int = 64
    tau_high: float = 0.7
    tau_low: float = 0.3
    # score assigned to every token when max == min in the normalization
    degenerate_score: float = 0.5
    # normalize across all reference segments jointly, or per segment
    joint_normalization: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.m < 2:
            raise ConfigError(f"m must be >= 2, got {self.m}")
        if not 0.0 <= self.tau_low < self.tau_high <= 1.0:
            raise ConfigError(
                f"need 0 <= tau_low < tau_high <= 1, got tau_low={self.tau_low} tau_high={self.tau_high}"
            )
        if not 0.0 <= self.degenerate_score <= 1.0:
            raise ConfigError(f"degenerate_score must be in [0, 1], got {self.degenerate_score}")


@dataclass(frozen=True)
class AttentionMap:
    """Row-stochastic attention weights indexed (query, head, key)."""

    weights: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"attention map must be (query, head, key), got shape {arr.shape}")
        sums = arr.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-9, rtol=0.0):
            raise ShapeError("attention rows do not sum to 1 within 1e-9")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)


@dataclass(frozen=True)
class AttentionStats:
    """Diagnostics from one rebalancing pass.

    raw_scores and normalized_scores run over reference tokens (in segment
    order); weights runs over the full key sequence.
    """

    raw_scores: np.ndarray
    normalized_scores: np.ndarray
    weights: np.ndarray
    sampled_indices: tuple[int, ...] = field(default=())

    def to_json(self) -> str:
        return json.dumps(
            {
                "raw_scores": self.raw_scores.tolist(),
                "normalized_scores": self.normalized_scores.tolist(),
                "weights": self.weights.tolist(),
            }
        )


def sample_query_indices(n_queries: int, m: int) -> list[int]:
    """Evenly spaced token indices floor(i*(n-1)/(m-1)), duplicates dropped.

    Endpoints 0 and n_queries-1 are always included for m >= 2. A single
    query yields [0]. Duplicates only arise when m > n_queries; dropping
    them keeps each query counted once in the relevance scores.
    """
    if n_queries < 1:
        raise ShapeError(f"n_queries must be >= 1, got {n_queries}")
    if n_queries == 1:
        return [0]
    if m < 2:
        raise ConfigError(f"m must be >= 2, got {m}")
    seen = set()
    out = []
    for i in range(m):
        idx = i * (n_queries - 1) // (m - 1)
        if idx not in seen:
            seen.add(idx)
            out.append(idx)
    return out


def attention_logits(queries: HeadedTensor, keys: HeadedTensor) -> np.ndarray:
    """Scaled dot-product logits Q @ K^T / sqrt(d), shape (Lq, H, Lk)."""
    if queries.n_heads != keys.n_heads or queries.head_dim != keys.head_dim:
        raise ShapeError(
            f"query shape {queries.data.shape} incompatible with key shape {keys.data.shape}: "
            "head count and head dim must match"
        )
    scale = 1.0 / np.sqrt(queries.head_dim)
    return np.einsum("qhd,khd->qhk", queries.data, keys.data) * scale


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def baseline_attention(queries: HeadedTensor, keys: HeadedTensor) -> AttentionMap:
    """Plain softmax attention, the gamma=0 reference point."""
    return AttentionMap(_row_softmax(attention_logits(queries, keys)))


def probe_attention(sampled_queries: HeadedTensor, reference_keys: HeadedTensor) -> AttentionMap:
    """Attention of the sampled queries over reference keys only.

    The softmax runs over the reference tokens alone, so each (query, head)
    row distributes exactly one unit of mass across them.
    """
    return AttentionMap(_row_softmax(attention_logits(sampled_queries, reference_keys)))


def aggregate_scores(probe: AttentionMap) -> np.ndarray:
    """Per-reference-token relevance: probe mass summed over queries and heads."""
    return probe.weights.sum(axis=(0, 1))


def normalize_minmax(raw_scores: np.ndarray, degenerate_score: float = 0.5) -> np.ndarray:
    """Min-max rescale to [0, 1]; a flat vector maps to degenerate_score."""
    raw = np.asarray(raw_scores, dtype=np.float64)
    if raw.ndim != 1 or raw.size < 1:
        raise ShapeError(f"raw scores must be a non-empty vector, got shape {raw.shape}")
    lo = raw.min()
    hi = raw.max()
    if hi == lo:
        return np.full(raw.shape, float(degenerate_score))
    return (raw - lo) / (hi - lo)


def compute_weights(
    normalized_scores: np.ndarray,
    cfg: RebalanceConfig,
    segments: KeySegments,
) -> np.ndarray:
    """Per-key-token weights in {1-gamma, 1, 1+gamma}.

    Reference tokens are banded by their normalized score (thresholds are
    inclusive on both sides); text and noise tokens always get weight 1.
    """
    scores = np.asarray(normalized_scores, dtype=np.float64)
    ref_segments = segments.reference_segments()
    n_ref = sum(s.length for s in ref_segments)
    if scores.shape != (n_ref,):
        raise ShapeError(
            f"normalized scores have shape {scores.shape} but segments declare {n_ref} reference tokens"
        )
    weights = np.ones(segments.n_tokens, dtype=np.float64)
    offset = 0
    for seg in ref_segments:
        chunk = scores[offset : offset + seg.length]
        band = np.ones(seg.length, dtype=np.float64)
        band[chunk >= cfg.tau_high] = 1.0 + cfg.gamma
        band[chunk <= cfg.tau_low] = 1.0 - cfg.gamma
        weights[seg.start : seg.stop] = band
        offset += seg.length
    return weights


def rebalanced_attention(
    queries: HeadedTensor,
    keys: HeadedTensor,
    weights: np.ndarray,
    segments: KeySegments,
) -> AttentionMap:
    """Attention with per-token key rescaling: softmax(Q @ (w*K)^T / sqrt(d)).

    Each weight multiplies a whole key vector, so the adjusted logit at
    (i, h, k) is exactly weights[k] times the baseline logit.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (keys.n_tokens,):
        raise ShapeError(f"weight vector has shape {w.shape}, expected ({keys.n_tokens},)")
    segments.validate_for(keys.n_tokens)
    scaled = HeadedTensor(keys.data * w[:, None, None])
    return AttentionMap(_row_softmax(attention_logits(queries, scaled)))


def rebalance_pipeline(
    queries: HeadedTensor,
    keys: HeadedTensor,
    segments: KeySegments,
    cfg: RebalanceConfig,
) -> tuple[AttentionMap, AttentionStats]:
    """Full pass: probe, score, band, and recompute attention.

    Returns the adjusted map over the full key sequence plus diagnostics
    (raw scores, normalized scores, weights, sampled query indices).
    """
    segments.validate_for(keys.n_tokens)
    ref_segments = segments.reference_segments()
    if not ref_segments:
        raise ShapeError("rebalancing requires at least one reference-image segment")

    effective_m = min(cfg.m, queries.n_tokens)
    indices = sample_query_indices(queries.n_tokens, effective_m)
    sampled = queries.take_tokens(indices)
    reference_keys = keys.take_tokens(segments.reference_indices())

    probe = probe_attention(sampled, reference_keys)
    raw = aggregate_scores(probe)

    if cfg.joint_normalization:
        normalized = normalize_minmax(raw, cfg.degenerate_score)
    else:
        parts = []
        offset = 0
        for seg in ref_segments:
            parts.append(normalize_minmax(raw[offset : offset + seg.length], cfg.degenerate_score))
            offset += seg.length
        normalized = np.concatenate(parts)

    weights = compute_weights(normalized, cfg, segments)
    adjusted = rebalanced_attention(queries, keys, weights, segments)
    stats = AttentionStats(
        raw_scores=raw,
        normalized_scores=normalized,
        weights=weights,
        sampled_indices=tuple(indices),
    )
    return adjusted, stats


def segment_attention_shares(attn: AttentionMap, segments: KeySegments) -> dict[str, float]:
    """Fraction of total attention mass landing on each segment."""
    total = attn.weights.shape[0] * attn.weights.shape[1]
    shares = {}
    for seg in segments.segments:
        mass = attn.weights[:, :, seg.start : seg.stop].sum()
        shares[seg.label] = float(mass / total)
    return shares
