"""Linear-chain CRF over the 11-tag BIO space.

Emissions come from a sparse hand-feature extractor (pluggable: any
[L x 11] emission matrix can be scored directly), inference is exact
dynamic programming in log space, and training is L2-regularized
gradient ascent. All arithmetic is float64 log-sum-exp; no scaling
tricks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    BIO_TAGS,
    NUM_TAGS,
    TAG_TO_INDEX,
    DiscourseSpan,
    Token,
    bio_to_spans,
    is_valid_bio,
    tokenize,
)

NEG_INF = -np.inf

DEFAULT_GAZETTEER = (
    "county",
    "city",
    "town",
    "municipality",
    "judge",
    "court",
    "commission",
    "commissioner",
    "board",
    "census",
    "population",
    "inhabitant",
    "magistrate",
    "district",
    "governor",
)


class CrfError(Exception):
    pass


class EmptySequence(CrfError):
    pass


class EmptyDataset(CrfError):
    pass


class InvalidGold(CrfError):
    pass


class UnknownVocabMode(CrfError):
    """Raised when a frozen feature vocabulary is asked to grow."""


class FeatureVocab:
    """Bijective string -> id mapping, growable until frozen."""

    def __init__(self, features: Sequence[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        self.frozen = False
        for f in features:
            self.add(f)

    def add(self, feature: str) -> int:
        idx = self._ids.get(feature)
        if idx is None:
            if self.frozen:
                raise UnknownVocabMode(f"vocabulary frozen; cannot add {feature!r}")
            idx = len(self._names)
            self._ids[feature] = idx
            self._names.append(feature)
        return idx

    def get(self, feature: str) -> Optional[int]:
        return self._ids.get(feature)

    def freeze(self) -> None:
        self.frozen = True

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureVocab) and self._names == other._names


def _shape(surface: str) -> str:
    out = []
    for ch in surface:
        if ch.isupper():
            out.append("X")
        elif ch.islower():
            out.append("x")
        elif ch.isdigit():
            out.append("d")
        else:
            out.append(ch)
    return "".join(out)


def _gazetteer_hit(lower: str, gazetteer: Sequence[str]) -> Optional[str]:
    # Lemma-prefix match: the entry itself, or the entry with its final
    # character dropped as a crude stem ("county" -> "count" -> "counties").
    for entry in gazetteer:
        if lower == entry or (len(entry) >= 4 and lower.startswith(entry[:-1])):
            return entry
    return None


def extract_features(
    tokens: Sequence[Token], gazetteer: Sequence[str] = DEFAULT_GAZETTEER
) -> list[list[str]]:
    """Per-token sparse feature names (all features are binary/1.0)."""
    surfaces = [t.surface for t in tokens]
    lowers = [s.lower() for s in surfaces]
    feats: list[list[str]] = []
    for i, surface in enumerate(surfaces):
        lower = lowers[i]
        fs = [
            "bias",
            f"w={lower}",
            f"shape={_shape(surface)}",
        ]
        for n in (1, 2, 3):
            if len(lower) >= n:
                fs.append(f"pre{n}={lower[:n]}")
                fs.append(f"suf{n}={lower[-n:]}")
        if surface.isdigit():
            fs.append("isdigit")
        for off in (-2, -1, 1, 2):
            j = i + off
            ctx = lowers[j] if 0 <= j < len(surfaces) else ("<s>" if j < 0 else "</s>")
            fs.append(f"w[{off}]={ctx}")
        hit = _gazetteer_hit(lower, gazetteer)
        if hit is not None:
            fs.append(f"gaz={hit}")
        feats.append(fs)
    return feats


def _bio_transition_mask() -> tuple[np.ndarray, np.ndarray]:
    """(allowed_start[11], allowed_trans[11,11]) under BIO validity."""
    start = np.ones(NUM_TAGS, dtype=bool)
    trans = np.ones((NUM_TAGS, NUM_TAGS), dtype=bool)
    for j, tag in enumerate(BIO_TAGS):
        if tag.startswith("I-"):
            label = tag[2:]
            start[j] = False
            for i, prev in enumerate(BIO_TAGS):
                ok = prev == f"B-{label}" or prev == f"I-{label}"
                trans[i, j] = ok
    return start, trans


BIO_START_MASK, BIO_TRANS_MASK = _bio_transition_mask()


@dataclass
class CrfModel:
    """Weights plus vocabularies; immutable by convention once trained."""

    emission_weights: np.ndarray  # [F x 11]
    transition_weights: np.ndarray  # [11 x 11]
    start_weights: np.ndarray  # [11]
    end_weights: np.ndarray  # [11]
    feature_vocab: FeatureVocab
    constrain_bio: bool = True

    @classmethod
    def zeros(cls, feature_vocab: FeatureVocab, constrain_bio: bool = True) -> "CrfModel":
        f = len(feature_vocab)
        return cls(
            emission_weights=np.zeros((f, NUM_TAGS)),
            transition_weights=np.zeros((NUM_TAGS, NUM_TAGS)),
            start_weights=np.zeros(NUM_TAGS),
            end_weights=np.zeros(NUM_TAGS),
            feature_vocab=feature_vocab,
            constrain_bio=constrain_bio,
        )

    def effective_potentials(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(start, transitions, end) with -inf on BIO-invalid entries when constrained."""
        start = self.start_weights
        trans = self.transition_weights
        if self.constrain_bio:
            start = np.where(BIO_START_MASK, start, NEG_INF)
            trans = np.where(BIO_TRANS_MASK, trans, NEG_INF)
        return start, trans, self.end_weights

    def emissions_for(self, feature_seq: Sequence[Sequence[str]]) -> np.ndarray:
        """[L x 11] emission scores for one sequence of sparse features."""
        emis = np.zeros((len(feature_seq), NUM_TAGS))
        for t, fs in enumerate(feature_seq):
            for name in fs:
                idx = self.feature_vocab.get(name)
                if idx is not None:
                    emis[t] += self.emission_weights[idx]
        return emis

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CrfModel)
            and np.array_equal(self.emission_weights, other.emission_weights)
            and np.array_equal(self.transition_weights, other.transition_weights)
            and np.array_equal(self.start_weights, other.start_weights)
            and np.array_equal(self.end_weights, other.end_weights)
            and self.feature_vocab == other.feature_vocab
            and self.constrain_bio == other.constrain_bio
        )


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(invalid="ignore"):
        out = np.squeeze(m_safe, axis=axis) + np.log(
            np.sum(np.exp(a - m_safe), axis=axis)
        )
    return np.where(np.isfinite(np.squeeze(m, axis=axis)), out, NEG_INF)


def forward_backward(
    emissions: np.ndarray, model: CrfModel
) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact inference: (log_partition, marginals [L x 11], pairwise [(L-1) x 11 x 11])."""
    emissions = np.asarray(emissions, dtype=float)
    L = emissions.shape[0]
    if L == 0:
        raise EmptySequence("cannot run inference on an empty sequence")
    start, trans, end = model.effective_potentials()

    alpha = np.empty((L, NUM_TAGS))
    alpha[0] = start + emissions[0]
    for t in range(1, L):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emissions[t]
    log_z = float(_logsumexp((alpha[L - 1] + end)[None, :], axis=1)[0])

    beta = np.empty((L, NUM_TAGS))
    beta[L - 1] = end
    for t in range(L - 2, -1, -1):
        beta[t] = _logsumexp(trans + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)

    with np.errstate(invalid="ignore"):
        marginals = np.exp(alpha + beta - log_z)
    marginals = np.nan_to_num(marginals, nan=0.0)

    pairwise = np.zeros((max(L - 1, 0), NUM_TAGS, NUM_TAGS))
    for t in range(L - 1):
        scores = (
            alpha[t][:, None]
            + trans
            + (emissions[t + 1] + beta[t + 1])[None, :]
            - log_z
        )
        with np.errstate(invalid="ignore"):
            pairwise[t] = np.exp(scores)
        pairwise[t] = np.nan_to_num(pairwise[t], nan=0.0)
    return log_z, marginals, pairwise


def viterbi(emissions: np.ndarray, model: CrfModel) -> list[str]:
    """Argmax tag path; ties break toward the lower tag index."""
    emissions = np.asarray(emissions, dtype=float)
    L = emissions.shape[0]
    if L == 0:
        raise EmptySequence("cannot decode an empty sequence")
    start, trans, end = model.effective_potentials()

    delta = start + emissions[0]
    backptr = np.zeros((L, NUM_TAGS), dtype=int)
    for t in range(1, L):
        scores = delta[:, None] + trans
        backptr[t] = np.argmax(scores, axis=0)  # argmax picks the lowest index on ties
        delta = scores[backptr[t], np.arange(NUM_TAGS)] + emissions[t]
    delta = delta + end
    best = int(np.argmax(delta))
    path = [best]
    for t in range(L - 1, 0, -1):
        best = int(backptr[t][best])
        path.append(best)
    path.reverse()
    return [BIO_TAGS[i] for i in path]


def path_score(emissions: np.ndarray, model: CrfModel, tag_indices: Sequence[int]) -> float:
    start, trans, end = model.effective_potentials()
    s = start[tag_indices[0]] + emissions[0, tag_indices[0]]
    for t in range(1, len(tag_indices)):
        s += trans[tag_indices[t - 1], tag_indices[t]] + emissions[t, tag_indices[t]]
    return float(s + end[tag_indices[-1]])


@dataclass
class CrfGradient:
    emission: np.ndarray
    transition: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def scaled(self, factor: float) -> "CrfGradient":
        return CrfGradient(
            self.emission * factor,
            self.transition * factor,
            self.start * factor,
            self.end * factor,
        )


def log_likelihood_and_gradient(
    model: CrfModel,
    feature_seq: Sequence[Sequence[str]],
    gold_tags: Sequence[str],
    l2_lambda: float = 0.0,
) -> tuple[float, CrfGradient]:
    """Regularized log-likelihood of one sequence and its gradient.

    value = score(gold) - log Z - (lambda/2) * ||w||^2
    gradient = empirical counts - expected counts - lambda * w
    """
    if len(feature_seq) != len(gold_tags):
        raise InvalidGold("feature and tag sequence lengths differ")
    if not is_valid_bio(list(gold_tags)):
        raise InvalidGold(f"gold tags are not BIO-valid: {list(gold_tags)}")
    L = len(gold_tags)
    gold = [TAG_TO_INDEX[t] for t in gold_tags]

    emissions = model.emissions_for(feature_seq)
    log_z, marginals, pairwise = forward_backward(emissions, model)
    value = path_score(emissions, model, gold) - log_z

    grad_emis = np.zeros_like(model.emission_weights)
    for t, fs in enumerate(feature_seq):
        delta = -marginals[t]
        delta[gold[t]] += 1.0
        for name in fs:
            idx = model.feature_vocab.get(name)
            if idx is not None:
                grad_emis[idx] += delta

    grad_trans = -pairwise.sum(axis=0)
    for t in range(1, L):
        grad_trans[gold[t - 1], gold[t]] += 1.0

    grad_start = -marginals[0].copy()
    grad_start[gold[0]] += 1.0
    grad_end = -marginals[L - 1].copy()
    grad_end[gold[-1]] += 1.0

    if model.constrain_bio:
        # Masked transitions carry -inf potentials and are not parameters.
        grad_trans = np.where(BIO_TRANS_MASK, grad_trans, 0.0)
        grad_start = np.where(BIO_START_MASK, grad_start, 0.0)

    if l2_lambda:
        sq = (
            np.sum(model.emission_weights**2)
            + np.sum(model.transition_weights**2)
            + np.sum(model.start_weights**2)
            + np.sum(model.end_weights**2)
        )
        value -= 0.5 * l2_lambda * sq
        grad_emis -= l2_lambda * model.emission_weights
        grad_trans -= l2_lambda * model.transition_weights
        grad_start -= l2_lambda * model.start_weights
        grad_end -= l2_lambda * model.end_weights

    return value, CrfGradient(grad_emis, grad_trans, grad_start, grad_end)


@dataclass
class TrainConfig:
    l2_lambda: float = 0.01
    learning_rate: float = 0.1
    epochs: int = 25
    seed: int = 0
    forbid_invalid_bio: bool = True
    gazetteer: tuple[str, ...] = DEFAULT_GAZETTEER
    verbose: bool = False

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def train(
    dataset: Sequence[tuple[Sequence[Token], Sequence[str]]],
    config: TrainConfig = TrainConfig(),
) -> CrfModel:
    """Gradient ascent with per-epoch shuffling; deterministic given the seed.

    dataset: (tokens, gold BIO tags) pairs. The feature vocabulary is built
    from the training data and frozen into the returned model.
    """
    if not dataset:
        raise EmptyDataset("training dataset is empty")
    for tokens, tags in dataset:
        if len(tokens) != len(tags):
            raise InvalidGold("token/tag length mismatch in dataset")
        if not is_valid_bio(list(tags)):
            raise InvalidGold(f"gold tags are not BIO-valid: {list(tags)}")

    vocab = FeatureVocab()
    feature_seqs = []
    for tokens, _ in dataset:
        fs = extract_features(tokens, config.gazetteer)
        for token_feats in fs:
            for name in token_feats:
                vocab.add(name)
        feature_seqs.append(fs)
    vocab.freeze()

    model = CrfModel.zeros(vocab, constrain_bio=config.forbid_invalid_bio)
    rng = np.random.default_rng(config.seed)
    n = len(dataset)
    # Regularization is split per example so the per-epoch updates sum to
    # the gradient of the global objective.
    lam = config.l2_lambda / n

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for i in order:
            _, tags = dataset[i]
            value, grad = log_likelihood_and_gradient(
                model, feature_seqs[i], tags, l2_lambda=lam
            )
            total += value
            lr = config.learning_rate
            model.emission_weights += lr * grad.emission
            model.transition_weights += lr * grad.transition
            model.start_weights += lr * grad.start
            model.end_weights += lr * grad.end
        if config.verbose:
            print(f"epoch {epoch + 1}/{config.epochs} objective {total:.4f}")
    return model


def tag_tokens(model: CrfModel, tokens: Sequence[Token], gazetteer=None) -> list[str]:
    if not tokens:
        return []
    feats = extract_features(tokens, gazetteer or DEFAULT_GAZETTEER)
    emissions = model.emissions_for(feats)
    return viterbi(emissions, model)


def tag_paragraph(model: CrfModel, text: str) -> list[DiscourseSpan]:
    """tokenize -> features -> viterbi -> spans. Empty text yields []."""
    tokens = tokenize(text)
    if not tokens:
        return []
    tags = tag_tokens(model, tokens)
    return bio_to_spans(text, tokens, tags)


MODEL_MAGIC = b"CRF1\n"


def save_model(model: CrfModel, path) -> None:
    """Versioned binary format: magic, JSON header line, raw float64 arrays.

    Byte layout documented in docs/formats.md. load(save(m)) == m bitwise.
    """
    header = {
        "tags": list(BIO_TAGS),
        "features": model.feature_vocab.names,
        "constrain_bio": model.constrain_bio,
    }
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(json.dumps(header, ensure_ascii=False).encode("utf-8"))
        f.write(b"\n")
        for arr in (
            model.emission_weights,
            model.transition_weights,
            model.start_weights,
            model.end_weights,
        ):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> CrfModel:
    with open(path, "rb") as f:
        magic = f.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise CrfError(f"bad model file magic: {magic!r}")
        header = json.loads(f.readline().decode("utf-8"))
        if header["tags"] != list(BIO_TAGS):
            raise CrfError("model tag vocabulary does not match this build")
        vocab = FeatureVocab(header["features"])
        vocab.freeze()
        nf = len(vocab)

        def read_array(shape):
            count = int(np.prod(shape))
            buf = f.read(count * 8)
            return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

        model = CrfModel(
            emission_weights=read_array((nf, NUM_TAGS)),
            transition_weights=read_array((NUM_TAGS, NUM_TAGS)),
            start_weights=read_array((NUM_TAGS,)),
            end_weights=read_array((NUM_TAGS,)),
            feature_vocab=vocab,
            constrain_bio=header["constrain_bio"],
        )
    return model
