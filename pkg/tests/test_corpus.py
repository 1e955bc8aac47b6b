import json

import pytest
from hypothesis import given, settings, strategies as st

from sacoding.corpus import (
    BUNDLED_DATASET_IDS,
    Dataset,
    DatasetParseError,
    DatasetValidationError,
    build_dataset,
    bundled_codes,
    bundled_dataset,
    bundled_datasets,
    export_dataset,
    export_dataset_csv,
    parse_dataset,
)


def test_bundled_sizes():
    sizes = {d.dataset_id: len(d) for d in bundled_datasets()}
    assert sizes == {"dcms-full": 13, "dcms-subtopics": 28, "etsi-provisions": 67}


def test_bundled_order():
    assert tuple(d.dataset_id for d in bundled_datasets()) == BUNDLED_DATASET_IDS


def test_etsi_categories():
    etsi = bundled_dataset("etsi-provisions")
    assert len(etsi.categories) == 14
    assert etsi.category_ids() == tuple(f"ETSI-{i}" for i in range(1, 14)) + ("ETSI-DP",)
    assert len(etsi.items_in_category("ETSI-3")) == 16
    assert len(etsi.items_in_category("ETSI-DP")) == 5


def test_dcms_subtopic_3_5_text():
    subtopics = bundled_dataset("dcms-subtopics")
    item = subtopics.item("DCMS-3.5")
    assert item.text.startswith("For constrained devices that cannot physically be updated")
    assert item.category_id == "DCMS-3"


def test_subtopics_keep_ellipsis_fragments_verbatim():
    subtopics = bundled_dataset("dcms-subtopics")
    assert subtopics.item("DCMS-3.2").text.endswith("[...]")
    assert subtopics.item("DCMS-3.3").text.startswith("[Updates]")


def test_dcms_full_carries_whole_guideline_descriptions():
    full = bundled_dataset("dcms-full")
    text = full.item("DCMS-3").text
    assert text.startswith("Software components in internet-connected devices")
    assert "isolatable and replaceable" in text
    assert "[...]" not in text


def test_category_sizes_sum_to_item_count():
    for dataset in bundled_datasets():
        assert sum(dataset.category_sizes().values()) == len(dataset)


def test_bundled_codes_cover_every_item():
    for dataset_id in BUNDLED_DATASET_IDS:
        dataset = bundled_dataset(dataset_id)
        codes = bundled_codes(dataset_id)
        assert sorted(i for i, _ in codes.assignments) == sorted(dataset.item_ids())


def test_duplicate_item_id_rejected():
    with pytest.raises(DatasetValidationError, match="duplicate item id"):
        build_dataset(
            "d",
            "t",
            [("DCMS-1", "one")],
            [
                {"item_id": "DCMS-1.1", "category_id": "DCMS-1", "text": "a"},
                {"item_id": "DCMS-1.1", "category_id": "DCMS-1", "text": "b"},
            ],
        )


def test_unknown_category_rejected():
    with pytest.raises(DatasetValidationError, match="unknown category"):
        build_dataset("d", "t", [("C1", "one")], [{"item_id": "x", "category_id": "C9", "text": "a"}])


def test_empty_text_rejected():
    with pytest.raises(DatasetValidationError, match="text"):
        build_dataset("d", "t", [("C1", "one")], [{"item_id": "x", "category_id": "C1", "text": ""}])


def test_empty_dataset_is_valid():
    dataset = build_dataset("empty", "nothing here", [], [])
    assert len(dataset) == 0
    assert parse_dataset(export_dataset(dataset)) == dataset


def test_parse_error_carries_locator():
    with pytest.raises(DatasetParseError, match="line 1"):
        parse_dataset("{bad json")


def test_csv_round_trip_bundled():
    for dataset in bundled_datasets():
        assert parse_dataset(export_dataset_csv(dataset)) == dataset


def test_json_round_trip_bundled():
    for dataset in bundled_datasets():
        assert parse_dataset(json.dumps(export_dataset(dataset))) == dataset


def test_csv_file_round_trip(tmp_path):
    dataset = bundled_dataset("dcms-full")
    path = tmp_path / "full.csv"
    path.write_text(export_dataset_csv(dataset), encoding="utf-8")
    assert parse_dataset(path) == dataset


# --- property-based round trips ------------------------------------------------

identifier = st.text(
    alphabet=st.sampled_from("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-._"),
    min_size=1,
    max_size=12,
)
single_line = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=30
).map(str.strip)
body_text = st.text(
    alphabet=st.one_of(
        st.characters(blacklist_categories=("Cs", "Cc")),
        st.sampled_from("\n\t"),
    ),
    min_size=1,
    max_size=80,
)


@st.composite
def datasets(draw) -> Dataset:
    category_ids = draw(st.lists(identifier, min_size=1, max_size=4, unique=True))
    categories = [(cid, draw(single_line)) for cid in category_ids]
    item_ids = draw(st.lists(identifier, min_size=0, max_size=8, unique=True))
    items = [
        {
            "item_id": iid,
            "category_id": draw(st.sampled_from(category_ids)),
            "text": draw(body_text),
            "notes": draw(st.none() | body_text),
        }
        for iid in item_ids
    ]
    return build_dataset(draw(identifier), draw(single_line), categories, items)


@settings(max_examples=120)
@given(datasets())
def test_json_round_trip_property(dataset):
    assert parse_dataset(export_dataset(dataset)) == dataset


@settings(max_examples=120)
@given(datasets())
def test_json_text_round_trip_property(dataset):
    from sacoding.corpus import export_dataset_json

    assert parse_dataset(export_dataset_json(dataset)) == dataset


@settings(max_examples=120)
@given(datasets())
def test_csv_round_trip_property(dataset):
    assert parse_dataset(export_dataset_csv(dataset)) == dataset
