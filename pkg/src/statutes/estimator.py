"""sklearn-style wrapper around the CRF tagger.

DiscourseTagger.fit takes paragraph texts and gold span lists, predict
returns span lists, so the tagger composes with sklearn pipelines and
model-selection utilities via get_params/set_params.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import crf
from .model import DiscourseSpan, snap_spans_to_tokens, spans_to_bio, tokenize


class DiscourseTagger(BaseEstimator):
    def __init__(
        self,
        l2_lambda: float = 0.01,
        learning_rate: float = 0.1,
        epochs: int = 25,
        seed: int = 0,
        forbid_invalid_bio: bool = True,
        gazetteer: tuple[str, ...] = crf.DEFAULT_GAZETTEER,
    ):
        self.l2_lambda = l2_lambda
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.forbid_invalid_bio = forbid_invalid_bio
        self.gazetteer = gazetteer

    def fit(self, X: Sequence[str], y: Sequence[Sequence[DiscourseSpan]]):
        """X: paragraph texts; y: gold spans per paragraph.

        Gold spans that cut tokens are snapped outward to token boundaries.
        """
        if len(X) != len(y):
            raise ValueError("X and y must have equal length")
        dataset = []
        for text, spans in zip(X, y):
            tokens = tokenize(text)
            if not tokens:
                continue
            snapped = snap_spans_to_tokens(text, tokens, list(spans))
            dataset.append((tokens, spans_to_bio(tokens, snapped)))
        config = crf.TrainConfig(
            l2_lambda=self.l2_lambda,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            forbid_invalid_bio=self.forbid_invalid_bio,
            gazetteer=tuple(self.gazetteer),
        )
        self.model_ = crf.train(dataset, config)
        return self

    def predict(self, X: Sequence[str]) -> list[list[DiscourseSpan]]:
        if not hasattr(self, "model_"):
            raise NotFittedError("DiscourseTagger is not fitted; call fit first")
        return [crf.tag_paragraph(self.model_, text) for text in X]
