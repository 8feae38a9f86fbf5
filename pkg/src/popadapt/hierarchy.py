"""Node hierarchy construction, per-node empirical statistics and prior centers."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .data import (
    AGE_GROUP_ORDER,
    GENDER_ORDER,
    DataError,
    Dataset,
    Observation,
    SymptomVocabulary,
)


class Level(Enum):
    ROOT = "ROOT"
    AGE = "AGE"
    GENDER = "GENDER"
    DOMAIN = "DOMAIN"
    DATASET = "DATASET"


ROOT_ID = "root"


def age_node_id(group) -> str:
    return f"age:{group.value}"


def gender_node_id(gender) -> str:
    return f"gender:{gender.value}"


def domain_node_id(domain) -> str:
    return f"domain:{domain.value}"


def dataset_node_id(dataset_id: str) -> str:
    return f"dataset:{dataset_id}"


@dataclass(frozen=True)
class HierarchyNode:
    node_id: str
    level: Level
    parents: tuple[str, ...]
    params: np.ndarray
    prior_center: np.ndarray


@dataclass(frozen=True)
class NodeStats:
    """Per-symptom positive predictive value and support counts for one node."""

    ppv: np.ndarray
    support: np.ndarray


@dataclass(frozen=True)
class Hierarchy:
    nodes: dict[str, HierarchyNode]
    vocab: SymptomVocabulary

    def node_order(self) -> list[str]:
        """Canonical ordering: root, ages, genders, domains, datasets."""
        rank = {Level.ROOT: 0, Level.AGE: 1, Level.GENDER: 2,
                Level.DOMAIN: 3, Level.DATASET: 4}
        return sorted(self.nodes, key=lambda nid: (rank[self.nodes[nid].level], nid))

    def dataset_node_ids(self) -> list[str]:
        return [n for n in self.node_order() if self.nodes[n].level == Level.DATASET]

    def edges(self) -> list[tuple[str, str]]:
        """All (child, parent) pairs in canonical order."""
        out = []
        for nid in self.node_order():
            for parent in self.nodes[nid].parents:
                out.append((nid, parent))
        return out


def build_hierarchy(
    datasets: Sequence[Dataset],
    vocab: SymptomVocabulary,
    with_attributes: bool = True,
) -> Hierarchy:
    """Build the undirected hierarchy over the given datasets.

    With attributes the layers are root -> {age, gender} -> domain -> dataset,
    every domain node taking all age and gender nodes as parents. Without
    attributes (the symptoms-only variant) domains hang directly off the root.
    """
    if not datasets:
        raise DataError("need at least one dataset")
    ids = [d.dataset_id for d in datasets]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate dataset_id")

    k = len(vocab)
    zeros = np.zeros(k)

    def node(node_id, level, parents):
        return HierarchyNode(node_id, level, tuple(parents), zeros.copy(), zeros.copy())

    nodes: dict[str, HierarchyNode] = {ROOT_ID: node(ROOT_ID, Level.ROOT, ())}

    attribute_ids: list[str] = []
    if with_attributes:
        for group in AGE_GROUP_ORDER:
            nid = age_node_id(group)
            nodes[nid] = node(nid, Level.AGE, (ROOT_ID,))
            attribute_ids.append(nid)
        for gender in GENDER_ORDER:
            nid = gender_node_id(gender)
            nodes[nid] = node(nid, Level.GENDER, (ROOT_ID,))
            attribute_ids.append(nid)

    domains = sorted({d.domain_id for d in datasets}, key=lambda d: d.value)
    for domain in domains:
        nid = domain_node_id(domain)
        parents = attribute_ids if with_attributes else [ROOT_ID]
        nodes[nid] = node(nid, Level.DOMAIN, parents)

    for ds in sorted(datasets, key=lambda d: d.dataset_id):
        nid = dataset_node_id(ds.dataset_id)
        nodes[nid] = node(nid, Level.DATASET, (domain_node_id(ds.domain_id),))

    return Hierarchy(nodes, vocab)


def node_slice(
    node: HierarchyNode, datasets: Sequence[Dataset]
) -> list[Observation]:
    """Labelled observations informing one node's empirical statistics."""
    labelled = [o for d in datasets for o in d.labelled()]
    if node.level == Level.ROOT:
        return labelled
    if node.level == Level.AGE:
        group = node.node_id.split(":", 1)[1]
        return [o for o in labelled if o.age_group.value == group]
    if node.level == Level.GENDER:
        gender = node.node_id.split(":", 1)[1]
        return [o for o in labelled if o.gender.value == gender]
    if node.level == Level.DOMAIN:
        domain = node.node_id.split(":", 1)[1]
        member_ids = {d.dataset_id for d in datasets if d.domain_id.value == domain}
        return [o for o in labelled if o.dataset_id in member_ids]
    dataset_id = node.node_id.split(":", 1)[1]
    return [o for o in labelled if o.dataset_id == dataset_id]


def empirical_ppv(
    slice_obs: Sequence[Observation], vocab: SymptomVocabulary
) -> NodeStats:
    """Per-symptom positive predictive value over a labelled slice."""
    k = len(vocab)
    support = np.zeros(k, dtype=int)
    positive = np.zeros(k, dtype=int)
    for obs in slice_obs:
        if obs.label is None:
            raise DataError(f"unlabelled observation {obs.obs_id!r} in statistics slice")
        s = np.asarray(obs.symptoms)
        support += s
        if obs.label:
            positive += s
    ppv = np.where(support > 0, positive / np.maximum(support, 1), 0.0)
    return NodeStats(ppv=ppv, support=support)


def compute_stats(
    hierarchy: Hierarchy, datasets: Sequence[Dataset]
) -> dict[str, NodeStats]:
    return {
        nid: empirical_ppv(node_slice(node, datasets), hierarchy.vocab)
        for nid, node in hierarchy.nodes.items()
    }


def prior_center_from_ppv(ppv: np.ndarray, lam: float) -> np.ndarray:
    """Log-simplex point proportional to the smoothed symptom weights."""
    w = ppv + lam
    return np.log(w) - np.log(w.sum())


def center_priors(
    hierarchy: Hierarchy, stats: Mapping[str, NodeStats], lam: float
) -> Hierarchy:
    """Center every node's prior on its own smoothed statistics."""
    if lam <= 0:
        raise DataError("lambda must be positive")
    nodes = {}
    for nid, node in hierarchy.nodes.items():
        if nid not in stats:
            raise DataError(f"missing stats for node {nid!r}")
        center = prior_center_from_ppv(stats[nid].ppv, lam)
        nodes[nid] = replace(node, params=center.copy(), prior_center=center)
    return Hierarchy(nodes, hierarchy.vocab)


def prepare_hierarchy(
    datasets: Sequence[Dataset],
    vocab: SymptomVocabulary,
    lam: float,
    with_attributes: bool = True,
) -> tuple[Hierarchy, dict[str, NodeStats]]:
    """Build the hierarchy, compute stats, and center the priors in one go."""
    hierarchy = build_hierarchy(datasets, vocab, with_attributes=with_attributes)
    stats = compute_stats(hierarchy, datasets)
    return center_priors(hierarchy, stats, lam), stats


def _fmt(x: float) -> str:
    return "%.17g" % x


def hierarchy_to_json(hierarchy: Hierarchy) -> str:
    """Serialize with decimal strings that round-trip bit-exactly."""
    payload = {
        "vocab": list(hierarchy.vocab.names),
        "nodes": [
            {
                "id": nid,
                "level": hierarchy.nodes[nid].level.value,
                "parents": list(hierarchy.nodes[nid].parents),
                "params": [_fmt(v) for v in hierarchy.nodes[nid].params],
                "prior_center": [_fmt(v) for v in hierarchy.nodes[nid].prior_center],
            }
            for nid in hierarchy.node_order()
        ],
    }
    return json.dumps(payload, indent=2)


def hierarchy_from_json(text: str) -> Hierarchy:
    payload = json.loads(text)
    vocab = SymptomVocabulary(tuple(payload["vocab"]))
    nodes = {}
    for entry in payload["nodes"]:
        nodes[entry["id"]] = HierarchyNode(
            node_id=entry["id"],
            level=Level(entry["level"]),
            parents=tuple(entry["parents"]),
            params=np.array([float(v) for v in entry["params"]]),
            prior_center=np.array([float(v) for v in entry["prior_center"]]),
        )
    return Hierarchy(nodes, vocab)
