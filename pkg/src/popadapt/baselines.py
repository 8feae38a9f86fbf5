"""Reference methods: target-only LR, pooled LR, FEDA variants and the hierarchy pair."""

from __future__ import annotations

from dataclasses import replace
from enum import Enum
from typing import Sequence

import numpy as np

from .data import (
    AGE_GROUP_ORDER,
    GENDER_ORDER,
    DataError,
    Dataset,
    DomainId,
    Observation,
    SymptomVocabulary,
    symptom_matrix,
    label_vector,
)
from .hierarchy import prepare_hierarchy
from .mapfit import ModelConfig, fit_map
from .predictor import (
    HierPModel,
    _sigmoid,
    build_encoding,
    feature_matrix,
    fit_level_weights,
    fit_logreg,
)


class MethodId(Enum):
    TARGET_ONLY = "TARGET_ONLY"
    POOLED_LR = "POOLED_LR"
    FEDA = "FEDA"
    FEDA_P = "FEDA_P"
    HIER = "HIER"
    HIER_P = "HIER_P"


class SealedLabelError(RuntimeError):
    """Raised on any attempt to read heldout labels outside the evaluator."""


class SealedDataset:
    """Heldout target data with labels hidden from every training path.

    Training code sees only label-stripped observations; the evaluator that
    created the seal holds the key needed to reveal the true labels.
    """

    def __init__(self, dataset: Dataset, key: object):
        self._dataset = dataset
        self._key = key
        self.dataset_id = dataset.dataset_id
        self.domain_id = dataset.domain_id
        self.observations = tuple(
            replace(o, label=None) for o in dataset.observations
        )

    def __len__(self):
        return len(self.observations)

    def reveal_labels(self, key: object) -> np.ndarray:
        if key is not self._key:
            raise SealedLabelError("heldout labels are sealed")
        return label_vector(self._dataset.observations)


def seal_dataset(dataset: Dataset) -> tuple[SealedDataset, object]:
    """Seal a heldout dataset; the returned key stays with the evaluator."""
    key = object()
    return SealedDataset(dataset, key), key


def demographics_onehot(obs: Observation) -> np.ndarray:
    """5-way age one-hot concatenated with 2-way gender one-hot."""
    out = np.zeros(7)
    out[AGE_GROUP_ORDER.index(obs.age_group)] = 1.0
    out[5 + GENDER_ORDER.index(obs.gender)] = 1.0
    return out


def feda_augment(x: np.ndarray, domain_index: int, k_domains: int) -> np.ndarray:
    """General copy followed by k_domains blocks, one holding x."""
    x = np.asarray(x, dtype=float)
    if not 0 <= domain_index < k_domains:
        raise DataError(f"domain index {domain_index} outside [0, {k_domains})")
    width = x.size
    out = np.zeros((k_domains + 1) * width)
    out[:width] = x
    start = (domain_index + 1) * width
    out[start:start + width] = x
    return out


_DOMAIN_ORDER = (DomainId.CITIZEN_SCIENCE, DomainId.HEALTHWORKER)


def _domain_index(domain: DomainId) -> int:
    return _DOMAIN_ORDER.index(domain)


def _base_vectors(observations: Sequence[Observation], with_demographics: bool) -> np.ndarray:
    X = symptom_matrix(observations)
    if with_demographics:
        D = np.array([demographics_onehot(o) for o in observations])
        X = np.hstack([X, D])
    return X


def _feda_matrix(datasets: Sequence[Dataset], with_demographics: bool) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    labels = []
    k = len(_DOMAIN_ORDER)
    for ds in datasets:
        di = _domain_index(ds.domain_id)
        base = _base_vectors(ds.observations, with_demographics)
        for vec, obs in zip(base, ds.observations):
            rows.append(feda_augment(vec, di, k))
            labels.append(obs.label)
    return np.array(rows), np.array(labels, dtype=bool)


def _score_lr(X: np.ndarray, coef: np.ndarray, intercept: float) -> np.ndarray:
    return _sigmoid(X @ coef + intercept)


def _fit_hier(
    method: MethodId,
    sources: Sequence[Dataset],
    target_labelled: Dataset,
    config: ModelConfig,
    vocab: SymptomVocabulary,
) -> HierPModel:
    with_attributes = method == MethodId.HIER_P
    datasets = list(sources) + [target_labelled]
    hierarchy, stats = prepare_hierarchy(
        datasets, vocab, config.lam, with_attributes=with_attributes
    )
    fitted = fit_map(hierarchy, stats, config)
    encoding = build_encoding(hierarchy, target_labelled.dataset_id)
    weights = fit_level_weights(target_labelled, fitted, encoding, config.l2_strength)
    return HierPModel(fitted, weights, encoding, target_labelled.dataset_id)


def run_method(
    method: MethodId,
    sources: Sequence[Dataset],
    target_labelled: Dataset,
    target_heldout: SealedDataset,
    config: ModelConfig,
    vocab: SymptomVocabulary | None = None,
) -> list[tuple[str, float]]:
    """Train one method and score every heldout observation.

    Heldout labels are sealed; only symptom and demographic features of the
    heldout rows are visible here. The vocabulary is only needed by the
    hierarchy methods; positional symptom names are synthesized if absent.
    """
    heldout_obs = target_heldout.observations

    if method == MethodId.TARGET_ONLY:
        X = symptom_matrix(target_labelled.observations)
        y = label_vector(target_labelled.observations)
        coef, intercept = fit_logreg(X, y, config.l2_strength)
        scores = _score_lr(symptom_matrix(heldout_obs), coef, intercept)

    elif method == MethodId.POOLED_LR:
        train = [o for d in sources for o in d.observations]
        train += list(target_labelled.observations)
        X = symptom_matrix(train)
        y = label_vector(train)
        coef, intercept = fit_logreg(X, y, config.l2_strength)
        scores = _score_lr(symptom_matrix(heldout_obs), coef, intercept)

    elif method in (MethodId.FEDA, MethodId.FEDA_P):
        with_demo = method == MethodId.FEDA_P
        X, y = _feda_matrix(list(sources) + [target_labelled], with_demo)
        coef, intercept = fit_logreg(X, y, config.l2_strength)
        di = _domain_index(target_heldout.domain_id)
        base = _base_vectors(heldout_obs, with_demo)
        Xh = np.array([feda_augment(v, di, len(_DOMAIN_ORDER)) for v in base])
        scores = _score_lr(Xh, coef, intercept)

    elif method in (MethodId.HIER, MethodId.HIER_P):
        if vocab is None:
            k = len(target_labelled.observations[0].symptoms)
            vocab = SymptomVocabulary(tuple(f"s{i:03d}" for i in range(k)))
        model = _fit_hier(method, sources, target_labelled, config, vocab)
        Xh = feature_matrix(heldout_obs, model.fitted, model.encoding)
        scores = _score_lr(Xh, model.weights.coefficients, model.weights.intercept)

    else:
        raise ValueError(f"unknown method {method!r}")

    return [(obs.obs_id, float(s)) for obs, s in zip(heldout_obs, scores)]
