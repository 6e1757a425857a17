import numpy as np
import pytest

from tmjcds.cohort import Cohort
from tmjcds.sampling import (
    make_iid,
    make_lagged,
    make_temporal_segments,
    resolve_feature_subset,
)
from tmjcds.schema import SchemaError
from tmjcds.synthesis import SynthesisConfig, generate_synthetic_cohort


def test_iid_one_row_per_exam(tiny_cohort):
    raw = make_iid(tiny_cohort, "expert")
    assert raw.n_rows == 5  # patients with 3 and 2 exams
    assert raw.strategy_tag == "iid"


def test_expert_subset_has_26_raw_columns(tiny_cohort):
    raw = make_iid(tiny_cohort, "expert")
    assert raw.n_columns == 26


def test_all_subset_excludes_target_adjacent(schema, tiny_cohort):
    names = resolve_feature_subset(schema, "all")
    assert "involvementstatus" not in names
    assert len(names) == 94
    with pytest.raises(SchemaError, match="involvementstatus"):
        resolve_feature_subset(schema, ["involvementstatus"])


def test_empty_cohort_yields_zero_rows(schema):
    raw = make_iid(Cohort(schema=schema, patients=()), "expert")
    assert raw.n_rows == 0


def test_provenance_unique_and_aligned(tiny_cohort):
    raw = make_iid(tiny_cohort, "expert")
    assert len(set(raw.provenance)) == raw.n_rows
    assert raw.provenance[0] == ("A", 0)
    assert raw.provenance[-1] == ("B", 1)


class TestTemporal:
    def test_boundary_assignment(self, schema, tiny_cohort):
        # tiny_cohort times: A (0, 1.5, 3), B (0, 2)
        segs = make_temporal_segments(tiny_cohort, (2.0, 5.0, 15.0), "expert")
        assert [s.n_rows for s in segs] == [3, 2, 0]
        assert segs[0].strategy_tag == "temporal:0"

    def test_interior_point_goes_to_first_segment(self, small_signal_cohort):
        segs = make_temporal_segments(small_signal_cohort, (2.0, 5.0, 15.0), "expert")
        for s_idx, seg in enumerate(segs):
            for (pid, exam_idx) in seg.provenance:
                patient = next(p for p in small_signal_cohort.patients if p.patient_id == pid)
                t = patient.exams[exam_idx].exam_time
                if s_idx == 0:
                    assert 0.0 <= t < 2.0
                elif s_idx == 1:
                    assert 2.0 <= t < 5.0
                else:
                    assert t >= 5.0

    def test_exact_boundary_goes_right(self, tiny_cohort):
        # patient B has an exam at exactly t=2.0
        segs = make_temporal_segments(tiny_cohort, (2.0, 5.0, 15.0), "expert")
        assert ("B", 1) in segs[1].provenance

    def test_clamp_counter(self, small_signal_cohort):
        segs = make_temporal_segments(small_signal_cohort, (2.0, 5.0, 15.0), "expert")
        beyond = sum(
            1 for p in small_signal_cohort.patients for e in p.exams if e.exam_time > 15.0
        )
        assert segs[2].clamped_count == beyond
        assert beyond > 0  # 25-year horizon: some exams land beyond 15y

    def test_segments_partition_iid_rows(self, small_signal_cohort):
        segs = make_temporal_segments(small_signal_cohort, (2.0, 5.0, 15.0), "expert")
        iid = make_iid(small_signal_cohort, "expert")
        assert sum(s.n_rows for s in segs) == iid.n_rows
        union = set()
        for s in segs:
            assert not (union & set(s.provenance))
            union |= set(s.provenance)
        assert union == set(iid.provenance)

    def test_bad_boundaries_rejected(self, tiny_cohort):
        with pytest.raises(ValueError, match="strictly increasing"):
            make_temporal_segments(tiny_cohort, (5.0, 2.0), "expert")


class TestLagged:
    def test_row_counts(self, tiny_cohort):
        # exam counts 3 and 2 -> k=1: (3-1)+(2-1)=3 rows; k=2: 1+0=1 row
        assert make_lagged(tiny_cohort, 1, "expert").n_rows == 3
        assert make_lagged(tiny_cohort, 2, "expert").n_rows == 1

    def test_column_arithmetic(self, tiny_cohort):
        assert make_lagged(tiny_cohort, 1, "expert").n_columns == 52
        assert make_lagged(tiny_cohort, 2, "expert").n_columns == 78

    def test_k_zero_rejected(self, tiny_cohort):
        with pytest.raises(ValueError, match="k must be"):
            make_lagged(tiny_cohort, 0, "expert")

    def test_lag_row_count_identity(self):
        cohort = generate_synthetic_cohort(
            SynthesisConfig(n_patients=40, rng_seed=13)
        )
        for k in (1, 2, 3):
            raw = make_lagged(cohort, k, "expert")
            expected = sum(max(0, len(p.exams) - k) for p in cohort.patients)
            assert raw.n_rows == expected

    def test_lag_columns_match_previous_exam(self, small_signal_cohort):
        raw = make_lagged(small_signal_cohort, 1, "expert")
        iid = make_iid(small_signal_cohort, "expert")
        iid_by_prov = dict(zip(iid.provenance, iid.rows))
        for row, (pid, i) in list(zip(raw.rows, raw.provenance))[:50]:
            prev = iid_by_prov[(pid, i - 1)]
            for col, value in prev.values.items():
                assert row.values[f"{col}_lag1"] == value
            cur = iid_by_prov[(pid, i)]
            for col, value in cur.values.items():
                assert row.values[col] == value
            assert row.ages == (cur.ages[0], prev.ages[0])

    def test_label_is_current_exam_label(self, small_signal_cohort):
        raw = make_lagged(small_signal_cohort, 1, "expert")
        iid = make_iid(small_signal_cohort, "expert")
        labels_by_prov = dict(zip(iid.provenance, iid.labels))
        for (pid, i), label in zip(raw.provenance, raw.labels):
            assert labels_by_prov[(pid, i)] == label


def test_strategies_are_pure_functions(small_signal_cohort):
    a = make_iid(small_signal_cohort, "expert")
    b = make_iid(small_signal_cohort, "expert")
    assert a.provenance == b.provenance
    assert np.array_equal(a.labels, b.labels)
    assert a.rows == b.rows
    la = make_lagged(small_signal_cohort, 2, "expert")
    lb = make_lagged(small_signal_cohort, 2, "expert")
    assert la.rows == lb.rows
