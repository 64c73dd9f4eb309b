import numpy as np
import pytest

from sidprobe import concept as cm
from sidprobe import linear_head as lh
from sidprobe.synthetic import make_planted_concept_task, make_planted_dataset

# Desk-scale overrides for planted-task training: the defaults mirror the
# full-scale recipe, which converges too slowly on a 400-sample fixture.
PLANTED_LR = 1e-2
PLANTED_PATIENCE = 40


def planted_train_config(**kw) -> lh.TrainConfig:
    cfg = lh.TrainConfig(learning_rate=PLANTED_LR, patience=PLANTED_PATIENCE)
    for key, value in kw.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture(scope="session")
def planted_task():
    return make_planted_dataset()


@pytest.fixture(scope="session")
def trained_head(planted_task):
    return lh.train(planted_task.dataset, planted_train_config())


@pytest.fixture(scope="session")
def concept_task():
    return make_planted_concept_task()


@pytest.fixture(scope="session")
def trained_concept(concept_task):
    return cm.train_concept(concept_task.dataset, concept_task.vocabulary, cm.ConceptTrainConfig())


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
