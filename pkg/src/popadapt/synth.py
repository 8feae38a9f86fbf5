"""Synthetic multi-domain, multi-population dataset generator with a Bayes oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import (
    AGE_GROUP_ORDER,
    GENDER_ORDER,
    AgeGroup,
    DataError,
    Dataset,
    DomainId,
    Gender,
    Observation,
    SymptomVocabulary,
)

Cell = tuple[AgeGroup, Gender]

ALL_CELLS: tuple[Cell, ...] = tuple(
    (a, g) for a in AGE_GROUP_ORDER for g in GENDER_ORDER
)


def cell_key(cell: Cell) -> str:
    return f"{cell[0].value}|{cell[1].value}"


def parse_cell_key(key: str) -> Cell:
    age, gender = key.split("|")
    return AgeGroup(age), Gender(gender)


@dataclass(frozen=True)
class DatasetSpec:
    dataset_id: str
    domain_id: DomainId
    n_obs: int
    mixture: dict[Cell, float]
    positive_rate: float
    cell_positive_rate: dict[Cell, float] | None = None

    def __post_init__(self):
        total = sum(self.mixture.values())
        if abs(total - 1.0) > 1e-9:
            raise DataError(
                f"mixture for {self.dataset_id!r} sums to {total:g}, expected 1"
            )
        if any(v < 0 for v in self.mixture.values()):
            raise DataError(f"negative mixture weight in {self.dataset_id!r}")
        rates = [self.positive_rate, *(self.cell_positive_rate or {}).values()]
        for rate in rates:
            if not 0.0 < rate < 1.0:
                raise DataError(f"positive rate for {self.dataset_id!r} outside (0, 1)")

    def rate_for(self, cell: Cell) -> float:
        if self.cell_positive_rate and cell in self.cell_positive_rate:
            return self.cell_positive_rate[cell]
        return self.positive_rate


@dataclass(frozen=True)
class SynthSpec:
    n_symptoms: int
    datasets: tuple[DatasetSpec, ...]
    base_predictivity: np.ndarray
    domain_effect: dict[DomainId, np.ndarray]
    group_effect: dict[Cell, np.ndarray]
    noise_sd: float
    seed: int

    def __post_init__(self):
        for name, vec in [("base_predictivity", self.base_predictivity),
                          *((f"domain_effect[{k}]", v) for k, v in self.domain_effect.items()),
                          *((f"group_effect[{k}]", v) for k, v in self.group_effect.items())]:
            if np.asarray(vec).shape != (self.n_symptoms,):
                raise DataError(f"{name} must have length {self.n_symptoms}")

    def vocabulary(self) -> SymptomVocabulary:
        return SymptomVocabulary(tuple(f"s{i:03d}" for i in range(self.n_symptoms)))

    def effect(self, domain: DomainId, cell: Cell) -> np.ndarray:
        e = np.asarray(self.base_predictivity, dtype=float).copy()
        e += self.domain_effect.get(domain, 0.0)
        e += self.group_effect.get(cell, 0.0)
        return e


@dataclass(frozen=True)
class GroundTruth:
    """P(symptom_j = 1 | label, domain, cell) matrices, shape (2, n_symptoms)."""

    emissions: dict[tuple[DomainId, Cell], np.ndarray]

    def probs(self, domain: DomainId, cell: Cell) -> np.ndarray:
        key = (domain, cell)
        if key not in self.emissions:
            raise DataError(f"ground truth does not cover ({domain.value}, {cell_key(cell)})")
        return self.emissions[key]


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(64)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def _noise_averaged_sigmoid(e: np.ndarray, noise_sd: float) -> np.ndarray:
    """E[sigma(e + eps)] for eps ~ N(0, noise_sd), by Gauss-Hermite quadrature."""
    if noise_sd == 0.0:
        return _sigmoid(e)
    z = e[:, None] + noise_sd * _GH_NODES[None, :]
    return _sigmoid(z) @ _GH_WEIGHTS


def ground_truth(spec: SynthSpec) -> GroundTruth:
    emissions = {}
    domains = {d.domain_id for d in spec.datasets}
    for domain in domains:
        for cell in ALL_CELLS:
            e = spec.effect(domain, cell)
            p_pos = _noise_averaged_sigmoid(e, spec.noise_sd)
            p_neg = _noise_averaged_sigmoid(-e, spec.noise_sd)
            emissions[(domain, cell)] = np.vstack([p_neg, p_pos])
    return GroundTruth(emissions)


def generate(spec: SynthSpec) -> tuple[list[Dataset], GroundTruth]:
    """Sample datasets per the given SynthSpec; deterministic for a fixed seed.

    Each symptom is drawn independently with probability
    sigma(sign(label) * effect + Gaussian logit noise).
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.n_symptoms
    datasets = []
    for ds in spec.datasets:
        cells = [c for c in ALL_CELLS if ds.mixture.get(c, 0.0) > 0]
        probs = np.array([ds.mixture[c] for c in cells])
        probs = probs / probs.sum()
        cell_idx = rng.choice(len(cells), size=ds.n_obs, p=probs)
        rates = np.array([ds.rate_for(c) for c in cells])
        labels = rng.random(ds.n_obs) < rates[cell_idx]
        effects = np.array([spec.effect(ds.domain_id, c) for c in cells])
        e = effects[cell_idx]
        sign = np.where(labels, 1.0, -1.0)[:, None]
        logits = sign * e
        if spec.noise_sd > 0:
            logits = logits + rng.normal(0.0, spec.noise_sd, size=(ds.n_obs, k))
        symptoms = (rng.random((ds.n_obs, k)) < _sigmoid(logits)).astype(int)
        observations = tuple(
            Observation(
                obs_id=f"{ds.dataset_id}-{i:05d}",
                symptoms=tuple(int(v) for v in symptoms[i]),
                label=bool(labels[i]),
                age_group=cells[cell_idx[i]][0],
                gender=cells[cell_idx[i]][1],
                dataset_id=ds.dataset_id,
            )
            for i in range(ds.n_obs)
        )
        datasets.append(Dataset(ds.dataset_id, ds.domain_id, observations))
    return datasets, ground_truth(spec)


def oracle_scores(dataset: Dataset, truth: GroundTruth) -> np.ndarray:
    """Bayes-optimal log-likelihood ratio of positive vs negative per observation."""
    scores = np.empty(len(dataset.observations))
    for i, obs in enumerate(dataset.observations):
        p = truth.probs(dataset.domain_id, (obs.age_group, obs.gender))
        s = np.asarray(obs.symptoms, dtype=float)
        p0, p1 = np.clip(p[0], 1e-12, 1 - 1e-12), np.clip(p[1], 1e-12, 1 - 1e-12)
        scores[i] = float(
            s @ (np.log(p1) - np.log(p0))
            + (1 - s) @ (np.log1p(-p1) - np.log1p(-p0))
        )
    return scores


# -- JSON round trip ----------------------------------------------------


def spec_to_json(spec: SynthSpec) -> str:
    payload = {
        "n_symptoms": spec.n_symptoms,
        "noise_sd": spec.noise_sd,
        "seed": spec.seed,
        "base_predictivity": [float(v) for v in spec.base_predictivity],
        "domain_effect": {
            d.value: [float(v) for v in vec] for d, vec in sorted(
                spec.domain_effect.items(), key=lambda kv: kv[0].value
            )
        },
        "group_effect": {
            cell_key(c): [float(v) for v in vec] for c, vec in sorted(
                spec.group_effect.items(), key=lambda kv: cell_key(kv[0])
            )
        },
        "datasets": [
            {
                "dataset_id": d.dataset_id,
                "domain_id": d.domain_id.value,
                "n_obs": d.n_obs,
                "positive_rate": d.positive_rate,
                "mixture": {cell_key(c): w for c, w in sorted(
                    d.mixture.items(), key=lambda kv: cell_key(kv[0])
                ) if w > 0},
                **(
                    {"cell_positive_rate": {
                        cell_key(c): r for c, r in sorted(
                            d.cell_positive_rate.items(),
                            key=lambda kv: cell_key(kv[0]),
                        )
                    }}
                    if d.cell_positive_rate else {}
                ),
            }
            for d in spec.datasets
        ],
    }
    return json.dumps(payload, indent=2)


def spec_from_json(text: str) -> SynthSpec:
    payload = json.loads(text)
    known = {"n_symptoms", "noise_sd", "seed", "base_predictivity",
             "domain_effect", "group_effect", "datasets"}
    unknown = set(payload) - known
    if unknown:
        raise DataError(f"unknown synth spec keys: {sorted(unknown)}")
    datasets = tuple(
        DatasetSpec(
            dataset_id=d["dataset_id"],
            domain_id=DomainId(d["domain_id"]),
            n_obs=int(d["n_obs"]),
            mixture={parse_cell_key(k): float(v) for k, v in d["mixture"].items()},
            positive_rate=float(d["positive_rate"]),
            cell_positive_rate=(
                {parse_cell_key(k): float(v)
                 for k, v in d["cell_positive_rate"].items()}
                if "cell_positive_rate" in d else None
            ),
        )
        for d in payload["datasets"]
    )
    return SynthSpec(
        n_symptoms=int(payload["n_symptoms"]),
        datasets=datasets,
        base_predictivity=np.array(payload["base_predictivity"], dtype=float),
        domain_effect={
            DomainId(k): np.array(v, dtype=float)
            for k, v in payload["domain_effect"].items()
        },
        group_effect={
            parse_cell_key(k): np.array(v, dtype=float)
            for k, v in payload["group_effect"].items()
        },
        noise_sd=float(payload["noise_sd"]),
        seed=int(payload["seed"]),
    )


def truth_to_json(truth: GroundTruth) -> str:
    payload = {
        f"{d.value}|{cell_key(c)}": {
            "negative": ["%.17g" % v for v in mat[0]],
            "positive": ["%.17g" % v for v in mat[1]],
        }
        for (d, c), mat in sorted(
            truth.emissions.items(), key=lambda kv: (kv[0][0].value, cell_key(kv[0][1]))
        )
    }
    return json.dumps(payload, indent=2)


def truth_from_json(text: str) -> GroundTruth:
    payload = json.loads(text)
    emissions = {}
    for key, mats in payload.items():
        domain_token, age, gender = key.split("|")
        emissions[(DomainId(domain_token), (AgeGroup(age), Gender(gender)))] = np.vstack([
            np.array([float(v) for v in mats["negative"]]),
            np.array([float(v) for v in mats["positive"]]),
        ])
    return GroundTruth(emissions)


def default_benchmark_spec(seed: int = 7) -> SynthSpec:
    """Four datasets over two collection modes with skewed demographics.

    One citizen-science dataset (the intended target) has no mass on the
    5-15 age cell. Symptom predictivity varies both by collection mode and
    by age group so that demographic-aware methods have signal to exploit.
    """
    k = 10
    base = np.array([0.3, 0.25, 0.2, 0.15, 0.1, 0.1, 0.05, 0.05, 0.0, 0.0])

    cs = np.array([0.4, -0.4, 0.3, -0.3, 0.2, -0.2, 0.1, -0.1, 0.0, 0.0])
    hw = -cs

    # Symptom meaning flips with age; the unbalanced sign pattern makes the
    # per-cell marginal symptom load informative about the label too.
    age_dir = np.array([1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0])
    age_shift = {
        AgeGroup.A0_4: -1.5 * age_dir,
        AgeGroup.A5_15: -0.75 * age_dir,
        AgeGroup.A16_44: 0.0 * age_dir,
        AgeGroup.A45_64: 0.75 * age_dir,
        AgeGroup.A65_PLUS: 1.5 * age_dir,
    }
    gender_dir = np.array([-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0])
    gender_shift = {
        Gender.MALE: 0.4 * gender_dir,
        Gender.FEMALE: -0.4 * gender_dir,
    }
    group = {
        (a, g): age_shift[a] + gender_shift[g] for a, g in ALL_CELLS
    }

    def mixture(weights: Mapping[AgeGroup, float]) -> dict[Cell, float]:
        out = {}
        for a, g in ALL_CELLS:
            w = weights.get(a, 0.0) / 2.0
            if w > 0:
                out[(a, g)] = w
        return out

    # The target skips the 5-15 bin entirely and mixes the extreme age
    # groups, whose symptom semantics point in opposite directions.
    polarized = {AgeGroup.A0_4: 0.45, AgeGroup.A16_44: 0.10,
                 AgeGroup.A65_PLUS: 0.45}
    broad = {AgeGroup.A0_4: 0.15, AgeGroup.A5_15: 0.15, AgeGroup.A16_44: 0.35,
             AgeGroup.A45_64: 0.20, AgeGroup.A65_PLUS: 0.15}
    child_heavy = {AgeGroup.A0_4: 0.30, AgeGroup.A5_15: 0.30, AgeGroup.A16_44: 0.25,
                   AgeGroup.A45_64: 0.10, AgeGroup.A65_PLUS: 0.05}
    elderly_heavy = {AgeGroup.A0_4: 0.05, AgeGroup.A5_15: 0.05, AgeGroup.A16_44: 0.25,
                     AgeGroup.A45_64: 0.30, AgeGroup.A65_PLUS: 0.35}

    # Infection rate climbs with age everywhere, so demographics carry
    # direct label signal on top of the symptom-meaning shifts.
    age_rate = {AgeGroup.A0_4: -0.14, AgeGroup.A5_15: -0.07, AgeGroup.A16_44: 0.0,
                AgeGroup.A45_64: 0.07, AgeGroup.A65_PLUS: 0.14}

    def rates(center: float) -> dict[Cell, float]:
        return {(a, g): center + age_rate[a] for a, g in ALL_CELLS}

    datasets = (
        DatasetSpec("cs_target", DomainId.CITIZEN_SCIENCE, 200,
                    mixture(polarized), 0.45, rates(0.45)),
        DatasetSpec("cs_source", DomainId.CITIZEN_SCIENCE, 450,
                    mixture(broad), 0.55, rates(0.55)),
        DatasetSpec("hw_clinic", DomainId.HEALTHWORKER, 650,
                    mixture(child_heavy), 0.35, rates(0.35)),
        DatasetSpec("hw_colony", DomainId.HEALTHWORKER, 450,
                    mixture(elderly_heavy), 0.55, rates(0.55)),
    )
    return SynthSpec(
        n_symptoms=k,
        datasets=datasets,
        base_predictivity=base,
        domain_effect={DomainId.CITIZEN_SCIENCE: cs, DomainId.HEALTHWORKER: hw},
        group_effect=group,
        noise_sd=0.4,
        seed=seed,
    )
