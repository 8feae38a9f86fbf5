import numpy as np
import pytest

from popadapt.baselines import (
    MethodId,
    SealedLabelError,
    demographics_onehot,
    feda_augment,
    run_method,
    seal_dataset,
)
from popadapt.data import (
    AgeGroup,
    DataError,
    Dataset,
    DomainId,
    Gender,
    Observation,
    SplitSpec,
    SymptomVocabulary,
    split_labelled,
)
from popadapt.hierarchy import dataset_node_id, prior_center_from_ppv, prepare_hierarchy
from popadapt.mapfit import ModelConfig
from popadapt.synth import default_benchmark_spec, generate


def obs(i, symptoms, label, age=AgeGroup.A16_44, gender=Gender.MALE, ds="t"):
    return Observation(f"o{i}", symptoms, label, age, gender, ds)


def small_world(seed=0):
    """A tiny synthetic world: target plus one source per domain."""
    rng = np.random.default_rng(seed)

    def make(ds, domain, n, flip):
        rows = []
        for i in range(n):
            label = bool(rng.uniform() < 0.5)
            s0 = int(rng.uniform() < (0.8 if label != flip else 0.2))
            s1 = int(rng.uniform() < (0.7 if label else 0.3))
            s2 = int(rng.uniform() < 0.5)
            rows.append(Observation(
                f"{ds}_{i}", (s0, s1, s2), label,
                rng.choice(list(AgeGroup)), rng.choice(list(Gender)), ds))
        return Dataset(ds, domain, tuple(rows))

    target = make("t", DomainId.CITIZEN_SCIENCE, 60, flip=False)
    s1 = make("s1", DomainId.CITIZEN_SCIENCE, 80, flip=False)
    s2 = make("s2", DomainId.HEALTHWORKER, 80, flip=True)
    return target, [s1, s2]


class TestSealedDataset:
    def test_observations_are_label_stripped(self):
        ds = Dataset("t", DomainId.CITIZEN_SCIENCE,
                     tuple(obs(i, (1, 0, 0), bool(i % 2)) for i in range(4)))
        sealed, _ = seal_dataset(ds)
        assert all(o.label is None for o in sealed.observations)
        assert len(sealed) == 4

    def test_reveal_requires_exact_key(self):
        ds = Dataset("t", DomainId.CITIZEN_SCIENCE,
                     tuple(obs(i, (1, 0, 0), bool(i % 2)) for i in range(4)))
        sealed, key = seal_dataset(ds)
        y = sealed.reveal_labels(key)
        assert y.tolist() == [False, True, False, True]
        with pytest.raises(SealedLabelError):
            sealed.reveal_labels(object())
        with pytest.raises(SealedLabelError):
            sealed.reveal_labels(None)


class TestDemographicsOnehot:
    def test_width_and_hot_positions(self):
        v = demographics_onehot(obs(0, (0, 0, 0), None,
                                    age=AgeGroup.A45_64, gender=Gender.FEMALE))
        assert v.shape == (7,)
        assert v.sum() == 2.0
        assert v[3] == 1.0  # fourth age band
        assert v[6] == 1.0  # second gender slot

    def test_all_cells_distinct(self):
        seen = set()
        for age in AgeGroup:
            for gender in Gender:
                v = demographics_onehot(obs(0, (0, 0, 0), None, age=age, gender=gender))
                seen.add(tuple(v))
        assert len(seen) == 10


class TestFedaAugment:
    def test_block_layout(self):
        x = np.array([1.0, 2.0])
        out = feda_augment(x, domain_index=1, k_domains=2)
        assert out.tolist() == [1.0, 2.0, 0.0, 0.0, 1.0, 2.0]

    def test_first_domain(self):
        x = np.array([3.0])
        out = feda_augment(x, 0, 2)
        assert out.tolist() == [3.0, 3.0, 0.0]

    def test_bad_index_rejected(self):
        with pytest.raises(DataError):
            feda_augment(np.ones(2), 2, 2)


class TestRunMethod:
    def test_scores_cover_heldout_in_order(self):
        target, sources = small_world()
        labelled, heldout = split_labelled(target, SplitSpec(0.3, 0))
        sealed, _ = seal_dataset(heldout)
        for method in MethodId:
            scored = run_method(method, sources, labelled, sealed, ModelConfig())
            assert [oid for oid, _ in scored] == [o.obs_id for o in sealed.observations]
            assert all(0.0 < s < 1.0 for _, s in scored)

    def test_target_only_ignores_sources(self):
        target, sources = small_world()
        labelled, heldout = split_labelled(target, SplitSpec(0.3, 0))
        sealed, _ = seal_dataset(heldout)
        a = run_method(MethodId.TARGET_ONLY, sources, labelled, sealed, ModelConfig())
        b = run_method(MethodId.TARGET_ONLY, [], labelled, sealed, ModelConfig())
        assert a == b

    def test_pooled_differs_from_target_only(self):
        target, sources = small_world()
        labelled, heldout = split_labelled(target, SplitSpec(0.3, 0))
        sealed, _ = seal_dataset(heldout)
        a = dict(run_method(MethodId.TARGET_ONLY, sources, labelled, sealed, ModelConfig()))
        b = dict(run_method(MethodId.POOLED_LR, sources, labelled, sealed, ModelConfig()))
        assert any(abs(a[k] - b[k]) > 1e-9 for k in a)

    def test_feda_single_domain_matches_pooled_ranking(self):
        """With every dataset in one domain the augmentation duplicates the

        features, so with a vanishing penalty the rankings coincide."""
        target, sources = small_world()
        sources = [d for d in sources if d.domain_id == DomainId.CITIZEN_SCIENCE]
        labelled, heldout = split_labelled(target, SplitSpec(0.3, 0))
        sealed, _ = seal_dataset(heldout)
        config = ModelConfig(l2_strength=1e-8)
        feda = run_method(MethodId.FEDA, sources, labelled, sealed, config)
        pooled = run_method(MethodId.POOLED_LR, sources, labelled, sealed, config)
        rank_f = sorted(range(len(feda)), key=lambda i: feda[i][1])
        rank_p = sorted(range(len(pooled)), key=lambda i: pooled[i][1])
        assert rank_f == rank_p

    def test_hier_beta_zero_single_dataset_matches_ppv_oracle(self):
        """Without coupling and a single dataset, the dataset node's

        parameters reduce to the smoothed statistic softmax, so heldout
        ranking must follow the symptom score s @ log(f + 1)."""
        target, _ = small_world(seed=3)
        labelled, heldout = split_labelled(target, SplitSpec(0.5, 1))
        sealed, _ = seal_dataset(heldout)
        vocab = SymptomVocabulary(("s000", "s001", "s002"))
        config = ModelConfig(beta=0.0, powell_tol=1e-10)
        scored = dict(run_method(MethodId.HIER, [], labelled, sealed, config, vocab))

        h, stats = prepare_hierarchy([labelled], vocab, 1.0, with_attributes=False)
        theta = prior_center_from_ppv(stats[dataset_node_id("t")].ppv, 1.0)
        oracle = {}
        for o in sealed.observations:
            oracle[o.obs_id] = float(np.array(o.symptoms, dtype=float) @ theta)

        # scores must be a strictly monotone function of the oracle value,
        # up to one global sign flip from the learned node weight
        ids = list(scored)
        signs = set()
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                do = oracle[a] - oracle[b]
                ds_ = scored[a] - scored[b]
                if abs(do) > 1e-9:
                    assert abs(ds_) > 0
                    signs.add(do * ds_ > 0)
                else:
                    assert abs(ds_) < 1e-9
        assert len(signs) == 1

    def test_heldout_labels_unreachable_during_training(self):
        target, sources = small_world()
        labelled, heldout = split_labelled(target, SplitSpec(0.3, 0))
        sealed, key = seal_dataset(heldout)
        run_method(MethodId.HIER_P, sources, labelled, sealed, ModelConfig())
        # only the original key opens the seal afterwards
        with pytest.raises(SealedLabelError):
            sealed.reveal_labels("key")
        assert len(sealed.reveal_labels(key)) == len(heldout)

    def test_deterministic_on_benchmark_slice(self):
        datasets, vocab = benchmark_world()
        target = next(d for d in datasets if d.dataset_id == "cs_target")
        sources = [d for d in datasets if d.dataset_id != "cs_target"]
        labelled, heldout = split_labelled(target, SplitSpec(0.2, 0))
        sealed, _ = seal_dataset(heldout)
        config = ModelConfig()
        a = run_method(MethodId.HIER_P, sources, labelled, sealed, config, vocab)
        b = run_method(MethodId.HIER_P, sources, labelled, sealed, config, vocab)
        assert a == b


def benchmark_world():
    spec = default_benchmark_spec(seed=7)
    datasets, _ = generate(spec)
    return datasets, spec.vocabulary()
