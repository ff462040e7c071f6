import json

import numpy as np
import pytest

from creditpipe.errors import ConfigError
from creditpipe.frame import derive_labels, to_csv_text
from creditpipe.preprocess import flag_missing_codes
from creditpipe.synthgen import GeneratorSpec, GroundTruth, generate, write_ground_truth


def test_class_counts_within_three_sigma():
    p = (0.156, 0.092, 0.752)
    n = 10_000
    frame, truth = generate(GeneratorSpec(n_rows=n, class_proportions=p, seed=11))
    counts = np.bincount(truth.labels.classes, minlength=3)
    for c, pi in enumerate(p):
        sigma = np.sqrt(n * pi * (1 - pi))
        assert abs(counts[c] - n * pi) <= 3 * sigma


def test_frame_label_column_agrees_with_truth(synth_default):
    frame, truth, _ = synth_default
    assert np.array_equal(derive_labels(frame).classes, truth.labels.classes)


def test_constant_columns_have_one_non_code_value():
    frame, truth = generate(GeneratorSpec(n_constant_columns=2, seed=5))
    assert len(truth.constant_columns) == 2
    for name in truth.constant_columns:
        j = truth.feature_names.index(name)
        vals = frame.column(name)[~truth.missing_mask[j]]
        assert np.unique(vals).size == 1


def test_same_spec_gives_identical_csv():
    spec = GeneratorSpec(n_rows=300, seed=9)
    assert to_csv_text(generate(spec)[0]) == to_csv_text(generate(spec)[0])


def test_different_seed_changes_data():
    a = to_csv_text(generate(GeneratorSpec(n_rows=200, seed=1))[0])
    b = to_csv_text(generate(GeneratorSpec(n_rows=200, seed=2))[0])
    assert a != b


def test_infeasible_spec_rejected():
    with pytest.raises(ConfigError):
        generate(GeneratorSpec(n_features=10, n_correlated_blocks=4, block_size=5))


def test_block_members_correlate_above_point_eight(synth_default):
    frame, truth, _ = synth_default
    blocks: dict[int, list[str]] = {}
    for name, b in truth.block_assignments.items():
        blocks.setdefault(b, []).append(name)
    for members in blocks.values():
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                ja, jb = truth.feature_names.index(a), truth.feature_names.index(b)
                ok = ~truth.missing_mask[ja] & ~truth.missing_mask[jb]
                r = np.corrcoef(frame.column(a)[ok], frame.column(b)[ok])[0, 1]
                assert abs(r) > 0.8


def test_flagging_recovers_ground_truth_mask(synth_default):
    frame, truth, _ = synth_default
    flagged = flag_missing_codes(frame)
    got = np.vstack([flagged.column_mask(n) for n in truth.feature_names])
    assert np.array_equal(got, truth.missing_mask)


def test_high_missing_columns_exceed_half(synth_default):
    _, truth, _ = synth_default
    for name in truth.high_missing_columns:
        assert truth.missing_mask[truth.feature_names.index(name)].mean() > 0.5


def test_ground_truth_json_round_trip(tmp_path, synth_default):
    _, truth, spec = synth_default
    path = tmp_path / "truth.json"
    write_ground_truth(truth, path, spec)
    doc = json.loads(path.read_text())
    back = GroundTruth.from_json(doc)
    assert np.array_equal(back.missing_mask, truth.missing_mask)
    assert back.block_assignments == truth.block_assignments
    assert doc["spec"]["n_rows"] == spec.n_rows
