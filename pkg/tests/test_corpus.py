from __future__ import annotations

import random

import pytest

from resume_ie.corpus import (
    CLASS_NAMES,
    DatasetError,
    SectionRecord,
    compute_class_weights,
    label_from_name,
    largest_remainder_sizes,
    load_classes,
    load_text_dataset,
    save_text_dataset,
    split_by_person,
    weights_from_counts,
)

from conftest import make_records, record_row, write_dataset_file


class TestLoadTextDataset:
    def test_well_formed_file_parses_every_line(self, tmp_path):
        rows = []
        labels = ["personal"] * 286 + ["education"] * 282 + ["skill"] * 281
        labels += ["experience"] * 272 + ["language"] * 231 + ["personal"] * 34
        for i, label in enumerate(labels):
            rows.append(record_row(i, f"person-{i % 286}", label, f"text {i}"))
        assert len(rows) == 1386
        path = write_dataset_file(tmp_path / "data.jsonl", rows)
        records = load_text_dataset(path)
        assert len(records) == 1386
        assert records[0].label.name == "personal"

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_text_dataset(path) == []

    def test_unknown_label_names_the_label(self, tmp_path):
        path = write_dataset_file(
            tmp_path / "bad.jsonl", [record_row(0, "p0", "hobby", "juggling")]
        )
        with pytest.raises(DatasetError, match="hobby"):
            load_text_dataset(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        good = record_row(0, "p0", "skill", "python")
        path.write_text('{"record_id": "a"\n', encoding="utf-8")
        with pytest.raises(DatasetError, match=":1"):
            load_text_dataset(path)
        import json

        path.write_text(json.dumps(good) + "\nnot json\n", encoding="utf-8")
        with pytest.raises(DatasetError, match=":2"):
            load_text_dataset(path)

    def test_missing_field_is_an_error(self, tmp_path):
        path = tmp_path / "missing.jsonl"
        path.write_text('{"record_id": "a", "label": "skill", "text": "x"}\n')
        with pytest.raises(DatasetError, match="person_id"):
            load_text_dataset(path)

    def test_round_trip_preserves_records(self, tmp_path):
        records = make_records(7, records_per_person=3)
        path = tmp_path / "roundtrip.jsonl"
        save_text_dataset(records, path)
        loaded = load_text_dataset(path)
        assert loaded == records
        save_text_dataset(loaded, tmp_path / "again.jsonl")
        assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()


class TestClassCatalog:
    def test_exactly_five_classes(self):
        assert len(CLASS_NAMES) == 5
        assert set(CLASS_NAMES) == {"education", "experience", "skill", "personal", "language"}

    def test_unknown_name_rejected(self):
        with pytest.raises(DatasetError):
            label_from_name("hobby")

    def test_classes_file_round_trip(self, tmp_path):
        path = tmp_path / "classes.txt"
        path.write_text("\n".join(CLASS_NAMES) + "\n")
        catalog = load_classes(path)
        assert tuple(c.name for c in catalog) == CLASS_NAMES
        path.write_text("education\nexperience\nskill\n")
        with pytest.raises(DatasetError):
            load_classes(path)

    def test_empty_text_rejected(self):
        with pytest.raises(DatasetError):
            SectionRecord("r1", "p1", label_from_name("skill"), "")
        with pytest.raises(DatasetError):
            SectionRecord("r1", "", label_from_name("skill"), "x")


class TestClassWeights:
    def test_reference_counts_give_inverse_frequency_weights(self):
        # counts keyed by class id order: education, experience, skill,
        # personal, language
        counts = [282, 272, 281, 286, 231]
        total = sum(counts)
        assert total == 1352
        weights = weights_from_counts(counts).weights
        for w, n in zip(weights, counts):
            assert w == pytest.approx(total / (5 * n), abs=0, rel=0)
        assert weights[3] == pytest.approx(0.9455, abs=5e-5)
        assert weights[0] == pytest.approx(0.9589, abs=5e-5)
        assert weights[2] == pytest.approx(0.9623, abs=5e-5)
        assert weights[1] == pytest.approx(0.9941, abs=5e-5)
        assert weights[4] == pytest.approx(1.1706, abs=5e-5)

    def test_equal_counts_give_unit_weights(self):
        assert weights_from_counts([10, 10, 10, 10, 10]).weights == (1.0,) * 5

    def test_zero_count_is_an_error(self):
        with pytest.raises(DatasetError, match="language"):
            weights_from_counts([10, 10, 10, 10, 0])

    def test_weights_are_permutation_equivariant(self):
        rng = random.Random(1)
        for _ in range(50):
            counts = [rng.randint(1, 500) for _ in range(5)]
            perm = list(range(5))
            rng.shuffle(perm)
            base = weights_from_counts(counts).weights
            permuted = weights_from_counts([counts[i] for i in perm]).weights
            assert permuted == tuple(base[i] for i in perm)

    def test_from_records(self):
        records = make_records(30, records_per_person=4, seed=3)
        weights = compute_class_weights(records)
        assert len(weights.weights) == 5
        assert all(w > 0 for w in weights.weights)


class TestSplitByPerson:
    def test_twenty_persons_split_14_3_3(self):
        records = make_records(20)
        assignment = split_by_person(records, (0.70, 0.15, 0.15), seed=11)
        persons = lambda ids: {r.person_id for r in records if r.record_id in ids}
        assert len(persons(assignment.train)) == 14
        assert len(persons(assignment.val)) == 3
        assert len(persons(assignment.test)) == 3

    def test_zero_ratio_rejected(self):
        records = make_records(1)
        with pytest.raises(DatasetError, match="positive"):
            split_by_person(records, (1.0, 0.0, 0.0), seed=0)

    def test_same_seed_is_deterministic(self):
        records = make_records(40, seed=5)
        a = split_by_person(records, seed=123)
        b = split_by_person(records, seed=123)
        assert (a.train, a.val, a.test) == (b.train, b.val, b.test)
        c = split_by_person(records, seed=124)
        assert (a.train, a.val, a.test) != (c.train, c.val, c.test)

    def test_too_few_persons_is_an_error(self):
        with pytest.raises(DatasetError):
            split_by_person(make_records(2), (0.70, 0.15, 0.15), seed=0)

    def test_union_covers_all_records_and_persons_disjoint(self):
        rng = random.Random(7)
        for trial in range(30):
            records = make_records(rng.randint(5, 60), rng.randint(1, 4), seed=trial)
            assignment = split_by_person(records, seed=trial)
            all_ids = {r.record_id for r in records}
            assert assignment.train | assignment.val | assignment.test == all_ids
            person_of = {r.record_id: r.person_id for r in records}
            split_persons = [
                {person_of[i] for i in ids}
                for ids in (assignment.train, assignment.val, assignment.test)
            ]
            assert not (split_persons[0] & split_persons[1])
            assert not (split_persons[0] & split_persons[2])
            assert not (split_persons[1] & split_persons[2])

    def test_records_follow_their_person(self):
        records = make_records(9, records_per_person=5, seed=2)
        assignment = split_by_person(records, seed=9)
        for rec in records:
            splits = {
                name
                for name in ("train", "val", "test")
                if rec.record_id in getattr(assignment, name)
            }
            assert len(splits) == 1
        # every record of one person lands in the same split
        by_person: dict[str, set[str]] = {}
        for rec in records:
            by_person.setdefault(rec.person_id, set()).add(
                assignment.split_of(rec.record_id)
            )
        assert all(len(s) == 1 for s in by_person.values())


class TestLargestRemainder:
    def test_exact_quotas(self):
        assert largest_remainder_sizes(20, (0.70, 0.15, 0.15)) == [14, 3, 3]

    def test_sums_preserved(self):
        rng = random.Random(3)
        for _ in range(200):
            n = rng.randint(1, 500)
            sizes = largest_remainder_sizes(n, (0.70, 0.15, 0.15))
            assert sum(sizes) == n

    def test_remainder_tie_goes_to_earlier_split(self):
        # 0.5/0.25/0.25 of 2 -> quotas 1.0/0.5/0.5: val wins the leftover seat
        assert largest_remainder_sizes(2, (0.5, 0.25, 0.25)) == [1, 1, 0]
