import random

import pytest

from sacoding import bundled_codes, bundled_dataset, default_tree
from sacoding.corpus import Dataset, build_dataset
from sacoding.session import CodingDecision, Session


@pytest.fixture(scope="session")
def tree():
    return default_tree()


@pytest.fixture(scope="session")
def etsi():
    return bundled_dataset("etsi-provisions")


@pytest.fixture(scope="session")
def dcms_full():
    return bundled_dataset("dcms-full")


@pytest.fixture(scope="session")
def dcms_subtopics():
    return bundled_dataset("dcms-subtopics")


def replay_session(dataset_id, tree, session_id=None):
    dataset = bundled_dataset(dataset_id)
    codes = bundled_codes(dataset_id)
    return Session.import_recorded_codes(
        dataset,
        tree,
        codes.assignments,
        coder_id=codes.coder_id,
        session_id=session_id or f"{dataset_id}-replay",
    )


@pytest.fixture(scope="session")
def etsi_replay(tree):
    return replay_session("etsi-provisions", tree)


@pytest.fixture(scope="session")
def dcms_full_replay(tree):
    return replay_session("dcms-full", tree)


@pytest.fixture(scope="session")
def dcms_subtopics_replay(tree):
    return replay_session("dcms-subtopics", tree)


def tiny_dataset(n_items=6, dataset_id="tiny") -> Dataset:
    categories = [("C1", "First"), ("C2", "Second")]
    items = [
        {
            "item_id": f"it-{i}",
            "category_id": "C1" if i % 2 else "C2",
            "text": f"advice text {i}",
        }
        for i in range(n_items)
    ]
    return build_dataset(dataset_id, "Tiny corpus", categories, items)


def random_session(dataset, tree, rng: random.Random, coder="synth") -> Session:
    """Drive the real session machinery with random answers.

    Leaves a mix of finalized, in-progress, and untouched items.
    """
    session = Session.create(dataset, tree, coder)
    for item in dataset.items:
        roll = rng.random()
        if roll < 0.15:
            continue
        leave_partial = roll < 0.35
        while True:
            answer = "yes" if rng.random() < 0.5 else "no"
            outcome = session.answer(item.item_id, answer)
            if isinstance(outcome, CodingDecision):
                break
            if leave_partial and rng.random() < 0.4:
                break
    return session
