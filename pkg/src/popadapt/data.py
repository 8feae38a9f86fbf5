"""Dataset schema, CSV ingestion, vocabulary alignment and labelled splits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np


class AgeGroup(Enum):
    A0_4 = "A0_4"
    A5_15 = "A5_15"
    A16_44 = "A16_44"
    A45_64 = "A45_64"
    A65_PLUS = "A65_PLUS"


AGE_GROUP_ORDER = (
    AgeGroup.A0_4,
    AgeGroup.A5_15,
    AgeGroup.A16_44,
    AgeGroup.A45_64,
    AgeGroup.A65_PLUS,
)

# Closed integer bins; 65+ is open-ended.
_AGE_BIN_UPPER = {
    AgeGroup.A0_4: 4,
    AgeGroup.A5_15: 15,
    AgeGroup.A16_44: 44,
    AgeGroup.A45_64: 64,
}

MAX_AGE_YEARS = 130


class Gender(Enum):
    MALE = "MALE"
    FEMALE = "FEMALE"


GENDER_ORDER = (Gender.MALE, Gender.FEMALE)


class DomainId(Enum):
    CITIZEN_SCIENCE = "CITIZEN_SCIENCE"
    HEALTHWORKER = "HEALTHWORKER"


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class SymptomVocabulary:
    """Canonical ordered symptom names; fixes column order for every vector."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise DataError("vocabulary must not be empty")
        if len(set(self.names)) != len(self.names):
            raise DataError("vocabulary contains duplicate names")
        for name in self.names:
            if name != name.strip().lower():
                raise DataError(f"vocabulary name not normalized: {name!r}")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class Observation:
    obs_id: str
    symptoms: tuple[int, ...]
    label: Optional[bool]
    age_group: AgeGroup
    gender: Gender
    dataset_id: str


@dataclass(frozen=True)
class Dataset:
    dataset_id: str
    domain_id: DomainId
    observations: tuple[Observation, ...]

    def __post_init__(self):
        if not self.observations:
            raise DataError(f"dataset {self.dataset_id!r} is empty")
        for obs in self.observations:
            if obs.dataset_id != self.dataset_id:
                raise DataError(
                    f"observation {obs.obs_id!r} carries dataset_id "
                    f"{obs.dataset_id!r}, expected {self.dataset_id!r}"
                )

    def __len__(self):
        return len(self.observations)

    def labelled(self) -> tuple[Observation, ...]:
        return tuple(o for o in self.observations if o.label is not None)


@dataclass(frozen=True)
class SplitSpec:
    proportion_labelled: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.proportion_labelled < 1.0:
            raise DataError("proportion_labelled must lie in (0, 1)")
        if self.seed < 0:
            raise DataError("seed must be non-negative")


def bin_age(age_years: int) -> AgeGroup:
    """Map an integer age in years to its demographic bin."""
    if age_years < 0 or age_years > MAX_AGE_YEARS:
        raise DataError(f"age {age_years} outside [0, {MAX_AGE_YEARS}]")
    for group in AGE_GROUP_ORDER[:-1]:
        if age_years <= _AGE_BIN_UPPER[group]:
            return group
    return AgeGroup.A65_PLUS


def align_vocabulary(raw_headers: Sequence[Sequence[str]]) -> SymptomVocabulary:
    """Union of normalized symptom names across header lists, sorted."""
    union: set[str] = set()
    for i, headers in enumerate(raw_headers):
        if not headers:
            raise DataError(f"header list {i} is empty")
        union.update(h.strip().lower() for h in headers)
    union.discard("")
    if not union:
        raise DataError("vocabulary union is empty")
    return SymptomVocabulary(tuple(sorted(union)))


_RESERVED_COLUMNS = {"obs_id", "age_years", "age_group", "gender", "label"}

_GENDER_TOKENS = {
    "m": Gender.MALE,
    "male": Gender.MALE,
    "f": Gender.FEMALE,
    "female": Gender.FEMALE,
}

_AGE_GROUP_TOKENS = {g.value.lower(): g for g in AgeGroup}
_AGE_GROUP_TOKENS.update(
    {"0-4": AgeGroup.A0_4, "5-15": AgeGroup.A5_15, "16-44": AgeGroup.A16_44,
     "45-64": AgeGroup.A45_64, "65+": AgeGroup.A65_PLUS}
)


def parse_dataset(
    csv_text: str,
    vocab: SymptomVocabulary,
    domain_id: DomainId,
    dataset_id: str,
) -> tuple[Dataset, list[str]]:
    """Parse a dataset CSV against the vocabulary.

    Returns the dataset plus a list of warnings (one per vocabulary column
    absent from the file; such columns are filled with zeros). Unknown
    symptom columns and malformed rows are hard errors.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty CSV: header row required") from None
    header = [h.strip() for h in header]
    if "obs_id" not in header:
        raise DataError("missing required column obs_id")
    if "age_years" not in header and "age_group" not in header:
        raise DataError("need an age_years or age_group column")
    if "gender" not in header:
        raise DataError("missing required column gender")
    if "label" not in header:
        raise DataError("missing required column label")

    vocab_set = set(vocab.names)
    for col in header:
        if col not in _RESERVED_COLUMNS and col.strip().lower() not in vocab_set:
            raise DataError(f"unknown symptom column {col!r}")

    col_index = {col: i for i, col in enumerate(header)}
    present = {c.strip().lower() for c in header if c not in _RESERVED_COLUMNS}
    warnings = [
        f"symptom column {name!r} missing from {dataset_id!r}; filled with 0"
        for name in vocab.names
        if name not in present
    ]

    observations = []
    for row_num, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {row_num}: expected {len(header)} fields, got {len(row)}")

        def field(col):
            return row[col_index[col]].strip()

        obs_id = field("obs_id")
        if not obs_id:
            raise DataError(f"row {row_num}: empty obs_id")

        if "age_group" in col_index:
            token = field("age_group").lower()
            if token not in _AGE_GROUP_TOKENS:
                raise DataError(f"row {row_num}: unknown age_group {field('age_group')!r}")
            age_group = _AGE_GROUP_TOKENS[token]
        else:
            try:
                age_group = bin_age(int(field("age_years")))
            except (ValueError, DataError) as exc:
                raise DataError(f"row {row_num}: bad age_years: {exc}") from None

        gender_token = field("gender").lower()
        if gender_token not in _GENDER_TOKENS:
            raise DataError(f"row {row_num}: unknown gender token {field('gender')!r}")
        gender = _GENDER_TOKENS[gender_token]

        label_token = field("label")
        if label_token == "":
            label = None
        elif label_token in ("0", "1"):
            label = label_token == "1"
        else:
            raise DataError(f"row {row_num}: label must be 0, 1 or empty, got {label_token!r}")

        symptoms = []
        for name in vocab.names:
            if name in present:
                raw = row[col_index[_original_column(header, name)]].strip()
                if raw not in ("0", "1"):
                    raise DataError(f"row {row_num}: symptom {name!r} must be 0/1, got {raw!r}")
                symptoms.append(int(raw))
            else:
                symptoms.append(0)

        observations.append(
            Observation(obs_id, tuple(symptoms), label, age_group, gender, dataset_id)
        )

    if not observations:
        raise DataError(f"dataset {dataset_id!r} has no data rows")
    ids = [o.obs_id for o in observations]
    if len(set(ids)) != len(ids):
        raise DataError(f"dataset {dataset_id!r} has duplicate obs_id values")
    return Dataset(dataset_id, domain_id, tuple(observations)), warnings


def _original_column(header: list[str], normalized: str) -> str:
    for col in header:
        if col not in _RESERVED_COLUMNS and col.strip().lower() == normalized:
            return col
    raise KeyError(normalized)


def serialize_dataset(dataset: Dataset, vocab: SymptomVocabulary) -> str:
    """Write a dataset back to the CSV format accepted by parse_dataset."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["obs_id", "age_group", "gender", "label", *vocab.names])
    for obs in dataset.observations:
        label = "" if obs.label is None else str(int(obs.label))
        writer.writerow(
            [obs.obs_id, obs.age_group.value, obs.gender.value.lower(), label, *obs.symptoms]
        )
    return out.getvalue()


def load_vocabulary(text: str) -> SymptomVocabulary:
    """Load a vocabulary from JSON array text or one-name-per-line text."""
    stripped = text.strip()
    if stripped.startswith("["):
        names = json.loads(stripped)
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise DataError("vocabulary JSON must be an array of strings")
    else:
        names = [line for line in (ln.strip() for ln in text.splitlines()) if line]
    return align_vocabulary([names])


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_labelled(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic stratified split into a labelled slice and a heldout rest.

    Unlabelled rows always land in the heldout part. Both splits keep at
    least one observation per class whenever the split sizes permit it.
    """
    labelled_obs = [o for o in dataset.observations if o.label is not None]
    if len(labelled_obs) < 10:
        raise DataError("need at least 10 labelled observations to split")

    pos = [i for i, o in enumerate(labelled_obs) if o.label]
    neg = [i for i, o in enumerate(labelled_obs) if not o.label]
    if not pos or not neg:
        raise DataError("cannot stratify: all labelled observations share one class")

    n = len(dataset.observations)
    n_lab = _round_half_up(spec.proportion_labelled * n)
    n_lab = min(max(n_lab, 1), len(labelled_obs) - 1)

    # Proportional positive count, clamped so each split keeps both classes
    # whenever its size allows.
    lo = max(0, n_lab - len(neg))
    hi = min(len(pos), n_lab)
    if n_lab >= 2:
        lo = max(lo, 1)
        hi = min(hi, n_lab - 1)
    if len(labelled_obs) - n_lab >= 2:
        lo = max(lo, n_lab - (len(neg) - 1))
        hi = min(hi, len(pos) - 1)
    lo = max(0, lo)
    hi = min(hi, len(pos))
    n_lab_pos = min(max(_round_half_up(spec.proportion_labelled * len(pos)), lo), hi)
    n_lab_neg = n_lab - n_lab_pos

    rng = np.random.default_rng(spec.seed)
    pos_perm = [pos[i] for i in rng.permutation(len(pos))]
    neg_perm = [neg[i] for i in rng.permutation(len(neg))]
    chosen = set(pos_perm[:n_lab_pos]) | set(neg_perm[:n_lab_neg])

    labelled = [labelled_obs[i] for i in sorted(chosen)]
    heldout = [o for i, o in enumerate(labelled_obs) if i not in chosen]
    heldout.extend(o for o in dataset.observations if o.label is None)

    return (
        Dataset(dataset.dataset_id, dataset.domain_id, tuple(labelled)),
        Dataset(dataset.dataset_id, dataset.domain_id, tuple(heldout)),
    )


def symptom_matrix(observations: Sequence[Observation]) -> np.ndarray:
    """Stack observation symptom vectors into a float matrix."""
    return np.array([o.symptoms for o in observations], dtype=float)


def label_vector(observations: Sequence[Observation]) -> np.ndarray:
    labels = []
    for o in observations:
        if o.label is None:
            raise DataError(f"observation {o.obs_id!r} has no label")
        labels.append(o.label)
    return np.array(labels, dtype=bool)
