import numpy as np
import pytest

from shotsense import synth


@pytest.fixture(scope="session")
def tiny_cohort():
    """Small shared cohort: 5 subjects, 3 shots per class, 3 rally sessions."""
    return synth.gen_cohort(n_subjects=5, seed=11, shots_per_class=3,
                            n_detection_subjects=3, shots_per_session=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
