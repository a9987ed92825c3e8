import numpy as np
import pytest

from adjseq.correlation import (
    CorrelationModel,
    DesignSchedule,
    EventTable,
    build_ccs,
    fractions_from_ccs,
    info_fractions,
    subset_ccs,
)
from conftest import EX_COUNTS, EX_OVERLAPS

# closed-form entries on the 0.8-scaled counts, analysis-major order
CLOSED_FORM = {
    (0, 1): 64 / np.sqrt(80 * 88),
    (0, 2): 80 / np.sqrt(80 * 180),
    (0, 3): 80 / np.sqrt(80 * 160),
    (0, 4): 64 / np.sqrt(80 * 176),
    (0, 5): 80 / np.sqrt(80 * 360),
    (1, 2): 88 / np.sqrt(88 * 180),
    (1, 3): 64 / np.sqrt(88 * 160),
    (1, 4): 88 / np.sqrt(88 * 176),
    (1, 5): 88 / np.sqrt(88 * 360),
    (2, 3): 80 / np.sqrt(180 * 160),
    (2, 4): 88 / np.sqrt(180 * 176),
    (2, 5): 180 / np.sqrt(180 * 360),
    (3, 4): 128 / np.sqrt(160 * 176),
    (3, 5): 160 / np.sqrt(160 * 360),
    (4, 5): 176 / np.sqrt(176 * 360),
}
ROUNDED = {
    (0, 1): 0.76, (0, 2): 0.67, (0, 3): 0.71, (0, 4): 0.54, (0, 5): 0.47,
    (1, 2): 0.70, (1, 3): 0.54, (1, 4): 0.71, (1, 5): 0.49,
    (2, 3): 0.47, (2, 4): 0.49, (2, 5): 0.71,
    (3, 4): 0.76, (3, 5): 0.67, (4, 5): 0.70,
}


@pytest.fixture
def table():
    return EventTable.from_pairwise(EX_COUNTS, EX_OVERLAPS)


def test_closed_form_entries(table):
    c = build_ccs(table)
    for (a, b), v in CLOSED_FORM.items():
        assert c[a, b] == pytest.approx(v, abs=1e-12)
        assert round(c[a, b], 2) == ROUNDED[(a, b)]
        assert c[b, a] == c[a, b]


def test_scale_invariance_is_bitwise(table):
    scaled = EventTable.from_pairwise(
        (np.array(EX_COUNTS) * 0.8).tolist(),
        {k: (np.array(v) * 0.8).tolist() for k, v in EX_OVERLAPS.items()},
    )
    assert np.array_equal(build_ccs(table), build_ccs(scaled))


def test_within_hypothesis_entries_match_fractions(table):
    c = build_ccs(table)
    t = info_fractions(table).fractions
    for j in range(3):
        assert c[j, 3 + j] == pytest.approx(np.sqrt(t[j, 0]), abs=1e-12)
    assert np.allclose(fractions_from_ccs(c, 3, 2), t, atol=1e-12)


def test_subset_positions(table):
    model = CorrelationModel.from_events(table)
    assert model.positions((0, 2), 2).tolist() == [0, 2, 3, 5]
    sub = subset_ccs(model, (0, 2), 1)
    assert sub.shape == (2, 2) and sub[0, 1] == model.matrix[0, 2]


def test_overlap_beyond_marginal_names_pair():
    with pytest.raises(ValueError, match=r"\(0, 1\)"):
        EventTable.from_pairwise([[10, 20], [10, 20]], {(0, 1): [15, 20]})


def test_missing_pair():
    with pytest.raises(ValueError, match="missing"):
        EventTable.from_pairwise([[10, 20], [10, 20], [5, 9]], {(0, 1): [5, 10]})


def test_counts_must_increase():
    with pytest.raises(ValueError, match="increasing"):
        EventTable.from_pairwise([[10, 10]], {})


def test_schedule_checks():
    with pytest.raises(ValueError):
        DesignSchedule([[0.5, 0.9]])
    with pytest.raises(ValueError):
        DesignSchedule([[0.6, 0.5, 1.0]])


def test_explicit_matrix_round_trip(table):
    c = build_ccs(table)
    model = CorrelationModel.from_matrix(c, 3, 2)
    assert np.allclose(model.schedule.fractions, info_fractions(table).fractions, atol=1e-12)
    with pytest.raises(ValueError):
        CorrelationModel.from_matrix(c, 2, 2)
