import numpy as np
import pytest

from tmjcds.cohort import Cohort, ExamRecord, Patient
from tmjcds.schema import Label, default_schema
from tmjcds.synthesis import SynthesisConfig, generate_synthetic_cohort


@pytest.fixture(scope="session")
def schema():
    return default_schema()


def make_exam(pid, t, age, values, label, schema=None):
    return ExamRecord(
        patient_id=pid,
        exam_time=t,
        age_at_exam=age,
        values=values,
        label=Label(label),
    )


def make_patient(pid, gender, exams):
    return Patient(patient_id=pid, gender=gender, exams=tuple(exams))


@pytest.fixture()
def tiny_cohort(schema):
    """Two hand-built patients with sparse but valid values."""
    p1 = make_patient(
        "A",
        "female",
        [
            make_exam("A", 0.0, 7.0, {"krepitationleft": 1, "krepitationright": 0,
                                      "openingmm": 41.0, "profile": "straight",
                                      "drug": "ibuprofen", "painmoveleft": 0,
                                      "painmoveright": 2, "deepbite": 1}, 0),
            make_exam("A", 1.5, 8.5, {"krepitationleft": 1, "krepitationright": 1,
                                      "openingmm": 43.0, "profile": "convex",
                                      "drug": "methotrexate", "painmoveleft": 1,
                                      "painmoveright": 1, "deepbite": 0}, 0),
            make_exam("A", 3.0, 10.0, {"krepitationleft": 0, "krepitationright": 1,
                                       "openingmm": 44.0, "profile": "concave",
                                       "drug": "etanercept", "painmoveleft": 2,
                                       "painmoveright": 0, "deepbite": 1}, 1),
        ],
    )
    p2 = make_patient(
        "B",
        "male",
        [
            make_exam("B", 0.0, 9.0, {"krepitationleft": 0, "krepitationright": 0,
                                      "openingmm": 45.0, "profile": "straight",
                                      "drug": "none", "painmoveleft": 0,
                                      "painmoveright": 0, "deepbite": 0}, 0),
            make_exam("B", 2.0, 11.0, {"krepitationleft": 1, "krepitationright": 1,
                                       "openingmm": 47.5, "profile": "straight",
                                       "drug": "naproxen", "painmoveleft": 1,
                                       "painmoveright": 1, "deepbite": 0}, 1),
        ],
    )
    return Cohort(schema=schema, patients=(p1, p2))


@pytest.fixture(scope="session")
def small_signal_cohort():
    """120-patient high-signal cohort shared by pipeline-level tests."""
    return generate_synthetic_cohort(SynthesisConfig.high_signal(seed=11, n_patients=120))


@pytest.fixture(scope="session")
def medium_signal_cohort():
    return generate_synthetic_cohort(SynthesisConfig.high_signal(seed=7, n_patients=300))


def random_tree(rng, depth, n_features, next_cover=1000):
    """Random TreeNode with random covers/values for explainer tests."""
    from tmjcds.forest import TreeNode

    def build(level, cover):
        n1 = int(rng.integers(0, cover + 1))
        node = TreeNode(cover=cover, n0=cover - n1, n1=n1)
        if level >= depth or cover < 2 or rng.random() < 0.25:
            return node
        left_cover = int(rng.integers(1, cover))
        node.feature = int(rng.integers(0, n_features))
        node.threshold = float(np.round(rng.normal(), 3))
        node.left = build(level + 1, left_cover)
        node.right = build(level + 1, cover - left_cover)
        return node

    root = build(0, next_cover)
    if root.is_leaf:  # ensure at least one split for interesting cases
        root.feature = int(rng.integers(0, n_features))
        root.threshold = 0.0
        half = root.cover // 2
        n1l = int(rng.integers(0, half + 1))
        n1r = int(rng.integers(0, root.cover - half + 1))
        root.left = TreeNode(cover=half, n0=half - n1l, n1=n1l)
        root.right = TreeNode(cover=root.cover - half, n0=root.cover - half - n1r, n1=n1r)
    return root
