import pytest
from hypothesis import given, strategies as st

from popadapt.data import (
    AgeGroup,
    DataError,
    Dataset,
    DomainId,
    Gender,
    Observation,
    SplitSpec,
    SymptomVocabulary,
    align_vocabulary,
    bin_age,
    load_vocabulary,
    parse_dataset,
    serialize_dataset,
    split_labelled,
)

VOCAB = SymptomVocabulary(("cough", "fever", "sore_throat"))


def make_obs(i, symptoms=(1, 0, 0), label=True, age=AgeGroup.A16_44,
             gender=Gender.MALE, dataset_id="ds"):
    return Observation(f"o{i}", symptoms, label, age, gender, dataset_id)


class TestBinAge:
    @pytest.mark.parametrize("age,expected", [
        (3, AgeGroup.A0_4),
        (15, AgeGroup.A5_15),
        (65, AgeGroup.A65_PLUS),
        (44, AgeGroup.A16_44),
        (0, AgeGroup.A0_4),
        (4, AgeGroup.A0_4),
        (5, AgeGroup.A5_15),
        (16, AgeGroup.A16_44),
        (45, AgeGroup.A45_64),
        (64, AgeGroup.A45_64),
        (130, AgeGroup.A65_PLUS),
    ])
    def test_bins(self, age, expected):
        assert bin_age(age) == expected

    def test_rejects_out_of_range(self):
        with pytest.raises(DataError):
            bin_age(131)
        with pytest.raises(DataError):
            bin_age(-1)

    @given(st.integers(min_value=0, max_value=130))
    def test_every_age_has_exactly_one_bin(self, age):
        group = bin_age(age)
        assert isinstance(group, AgeGroup)


class TestAlignVocabulary:
    def test_normalized_union(self):
        v = align_vocabulary([["Fever", "cough"], ["fever", "sore_throat"]])
        assert v.names == ("cough", "fever", "sore_throat")

    def test_identity(self):
        assert align_vocabulary([["a"]]).names == ("a",)

    def test_empty_header_rejected(self):
        with pytest.raises(DataError):
            align_vocabulary([[], ["a"]])


class TestParseDataset:
    def test_two_row_parse(self):
        csv_text = (
            "obs_id,age_years,gender,label,cough,fever,sore_throat\n"
            "a,30,male,1,1,0,1\n"
            "b,3,female,0,0,1,0\n"
        )
        ds, warnings = parse_dataset(csv_text, VOCAB, DomainId.CITIZEN_SCIENCE, "t")
        assert len(ds) == 2
        assert warnings == []
        assert ds.observations[0].symptoms == (1, 0, 1)
        assert ds.observations[1].age_group == AgeGroup.A0_4
        assert ds.observations[1].label is False

    def test_missing_symptom_column_filled_with_warning(self):
        csv_text = "obs_id,age_years,gender,label,cough,fever\na,30,m,1,1,0\n"
        ds, warnings = parse_dataset(csv_text, VOCAB, DomainId.CITIZEN_SCIENCE, "t")
        assert ds.observations[0].symptoms == (1, 0, 0)
        assert len(warnings) == 1
        assert "sore_throat" in warnings[0]

    def test_unknown_gender_names_row(self):
        csv_text = (
            "obs_id,age_years,gender,label,cough,fever,sore_throat\n"
            "a,30,X,1,1,0,1\n"
        )
        with pytest.raises(DataError, match="row 2"):
            parse_dataset(csv_text, VOCAB, DomainId.CITIZEN_SCIENCE, "t")

    def test_unknown_symptom_column_rejected(self):
        csv_text = "obs_id,age_years,gender,label,wheeze\na,30,m,1,1\n"
        with pytest.raises(DataError, match="wheeze"):
            parse_dataset(csv_text, VOCAB, DomainId.CITIZEN_SCIENCE, "t")

    def test_bad_label_rejected(self):
        csv_text = (
            "obs_id,age_years,gender,label,cough,fever,sore_throat\n"
            "a,30,m,2,1,0,1\n"
        )
        with pytest.raises(DataError, match="label"):
            parse_dataset(csv_text, VOCAB, DomainId.CITIZEN_SCIENCE, "t")

    def test_empty_label_is_unlabelled(self):
        csv_text = (
            "obs_id,age_group,gender,label,cough,fever,sore_throat\n"
            "a,A16_44,m,,1,0,1\n"
        )
        ds, _ = parse_dataset(csv_text, VOCAB, DomainId.HEALTHWORKER, "t")
        assert ds.observations[0].label is None

    def test_round_trip(self):
        obs = tuple(
            make_obs(i, (i % 2, 1 - i % 2, 1), label=bool(i % 2))
            for i in range(6)
        )
        ds = Dataset("ds", DomainId.HEALTHWORKER, obs)
        text = serialize_dataset(ds, VOCAB)
        ds2, warnings = parse_dataset(text, VOCAB, DomainId.HEALTHWORKER, "ds")
        assert warnings == []
        assert ds2.observations == ds.observations


class TestLoadVocabulary:
    def test_json_array(self):
        assert load_vocabulary('["fever", "cough"]').names == ("cough", "fever")

    def test_lines(self):
        assert load_vocabulary("fever\ncough\n").names == ("cough", "fever")


def make_dataset(n, n_pos, dataset_id="t"):
    obs = tuple(
        make_obs(i, label=(i < n_pos), dataset_id=dataset_id) for i in range(n)
    )
    return Dataset(dataset_id, DomainId.CITIZEN_SCIENCE, obs)


class TestSplitLabelled:
    def test_proportions(self):
        ds = make_dataset(100, 40)
        labelled, heldout = split_labelled(ds, SplitSpec(0.20, 1))
        assert len(labelled) == 20
        assert len(heldout) == 80

    def test_tiny_split_rounding(self):
        ds = make_dataset(10, 5)
        labelled, heldout = split_labelled(ds, SplitSpec(0.10, 3))
        assert len(labelled) == 1
        assert len(heldout) == 9

    def test_deterministic(self):
        ds = make_dataset(50, 20)
        a = split_labelled(ds, SplitSpec(0.3, 11))
        b = split_labelled(ds, SplitSpec(0.3, 11))
        assert a[0].observations == b[0].observations
        assert a[1].observations == b[1].observations

    def test_single_class_rejected(self):
        ds = make_dataset(20, 20)
        with pytest.raises(DataError):
            split_labelled(ds, SplitSpec(0.2, 0))

    @given(st.integers(min_value=0, max_value=2**32 - 1),
           st.floats(min_value=0.1, max_value=0.9))
    def test_partition_property(self, seed, proportion):
        ds = make_dataset(37, 12)
        labelled, heldout = split_labelled(ds, SplitSpec(proportion, seed))
        ids = sorted(o.obs_id for o in labelled.observations)
        ids += sorted(o.obs_id for o in heldout.observations)
        assert sorted(ids) == sorted(o.obs_id for o in ds.observations)
        assert not (set(o.obs_id for o in labelled.observations)
                    & set(o.obs_id for o in heldout.observations))

    @given(st.integers(min_value=0, max_value=1000))
    def test_stratification(self, seed):
        ds = make_dataset(40, 8)
        labelled, heldout = split_labelled(ds, SplitSpec(0.25, seed))
        for part in (labelled, heldout):
            labels = [o.label for o in part.observations]
            assert any(labels) and not all(labels)
