from pathlib import Path

import numpy as np
import pytest

from hfdp.config import get_design
from hfdp.data_io import (
    level_order_from,
    load_csv,
    load_trace,
    read_assignment,
    read_json,
    save_trace,
    write_assignment,
    write_dataset,
    write_json,
)
from hfdp.dataset import LabeledDataset
from hfdp.errors import DataFormatError
from hfdp.pipeline import simulate
from hfdp.schema import ChainState, ChainTrace, SweepDiagnostics


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_numbers_levels_by_first_appearance(tmp_path: Path) -> None:
    path = _write(tmp_path / "people.csv", "x,y,sex\n1.0,2.0,M\n3.5,-1,F\n0,0.25,M\n")
    dataset = load_csv(path, attribute_column="sex")
    assert dataset.sizes.tolist() == [2, 1]
    assert dataset.level_names == ["M", "F"]
    assert dataset.feature_names == ["x", "y"]
    assert dataset.points.tolist() == [[1.0, 2.0], [3.5, -1.0], [0.0, 0.25]]


def test_load_csv_selects_feature_columns(tmp_path: Path) -> None:
    path = _write(tmp_path / "wide.csv", "id,x,attribute\n1,0.5,a\n2,1.5,b\n")
    dataset = load_csv(path, feature_columns=["x"])
    assert dataset.d == 1
    assert dataset.points[:, 0].tolist() == [0.5, 1.5]


def test_header_only_file_is_rejected(tmp_path: Path) -> None:
    path = _write(tmp_path / "empty.csv", "x,attribute\n")
    with pytest.raises(DataFormatError):
        load_csv(path)


def test_bad_cell_reports_its_line(tmp_path: Path) -> None:
    rows = ["x,attribute"] + [f"{i}.0,{'ab'[i % 2]}" for i in range(5)] + ["oops,a"]
    path = _write(tmp_path / "bad.csv", "\n".join(rows) + "\n")
    with pytest.raises(DataFormatError) as excinfo:
        load_csv(path)
    assert excinfo.value.line == 7


def test_single_level_and_missing_columns_are_rejected(tmp_path: Path) -> None:
    one_level = _write(tmp_path / "one.csv", "x,attribute\n1,a\n2,a\n")
    with pytest.raises(DataFormatError):
        load_csv(one_level)
    with pytest.raises(DataFormatError):
        load_csv(one_level, attribute_column="group")
    with pytest.raises(DataFormatError):
        load_csv(one_level, feature_columns=["z"])


def test_written_dataset_reloads_to_identical_values(tmp_path: Path) -> None:
    rng = np.random.default_rng(0)
    dataset = LabeledDataset(points=rng.normal(size=(25, 3)) * 1e3, labels=np.arange(25) % 2, r=2)
    path = tmp_path / "dataset.csv"
    write_dataset(dataset, path)
    reloaded = load_csv(path)
    assert np.array_equal(reloaded.points, dataset.points)
    assert reloaded.labels.tolist() == dataset.labels.tolist()


def test_level_order_keeps_indices_when_the_first_row_is_not_level_zero(tmp_path: Path) -> None:
    dataset = LabeledDataset(points=np.arange(8.0).reshape(4, 2), labels=[1, 0, 0, 1], r=2)
    path = tmp_path / "dataset.csv"
    write_dataset(dataset, path)
    assert load_csv(path).labels.tolist() == [0, 1, 1, 0]
    reloaded = load_csv(path, level_order=["0", "1"])
    assert reloaded.labels.tolist() == [1, 0, 0, 1]
    assert reloaded.level_names == ["0", "1"]


def test_simulated_imperfect_dataset_reloads_with_its_levels(tmp_path: Path) -> None:
    # Observed levels are degraded, so the first row may carry either level.
    for seed in range(5):
        out = tmp_path / str(seed)
        simulated = simulate(get_design("imperfect"), seed, out)
        order = level_order_from(read_json(out / "simulation.json"))
        reloaded = load_csv(out / "dataset.csv", level_order=order)
        assert reloaded.labels.tolist() == simulated.dataset.labels.tolist()
        assert np.array_equal(reloaded.points, simulated.dataset.points)


def test_level_order_rejects_unknown_and_missing_values(tmp_path: Path) -> None:
    path = _write(tmp_path / "levels.csv", "x,attribute\n1,a\n2,b\n3,c\n")
    with pytest.raises(DataFormatError) as excinfo:
        load_csv(path, level_order=["a", "b"])
    assert excinfo.value.line == 4
    with pytest.raises(DataFormatError):
        load_csv(path, level_order=["a", "b", "c", "d"])
    with pytest.raises(DataFormatError):
        load_csv(path, level_order=["a", "b", "a"])
    assert load_csv(path, level_order=["c", "a", "b"]).labels.tolist() == [1, 2, 0]


def test_level_order_from_a_levels_mapping() -> None:
    assert level_order_from({"levels": {"F": 1, "M": 0}}) == ["M", "F"]
    with pytest.raises(DataFormatError):
        level_order_from({"design": "A1"})
    with pytest.raises(DataFormatError):
        level_order_from({"levels": {"F": 2, "M": 0}})


def test_assignment_round_trip_and_checks(tmp_path: Path) -> None:
    path = tmp_path / "assignment.csv"
    write_assignment([2, 0, 1, 1], path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "row,cluster"
    assert read_assignment(path, n=4).tolist() == [2, 0, 1, 1]

    shuffled = _write(tmp_path / "shuffled.csv", "row,cluster\n2,1\n0,2\n1,0\n")
    assert read_assignment(shuffled).tolist() == [2, 0, 1]

    with pytest.raises(DataFormatError):
        read_assignment(path, n=5)
    with pytest.raises(DataFormatError):
        read_assignment(_write(tmp_path / "header.csv", "i,k\n0,1\n"))
    with pytest.raises(DataFormatError) as excinfo:
        read_assignment(_write(tmp_path / "negative.csv", "row,cluster\n0,1\n1,-1\n"))
    assert excinfo.value.line == 3


def test_json_round_trip(tmp_path: Path) -> None:
    path = tmp_path / "doc.json"
    write_json({"a": [1, 2], "b": "nan"}, path)
    assert read_json(path) == {"a": [1, 2], "b": "nan"}
    with pytest.raises(DataFormatError):
        read_json(_write(tmp_path / "broken.json", "{not json"))


def test_trace_archive_round_trip(tmp_path: Path) -> None:
    attributes = np.array([0, 1, 0, 1, 1])
    trace = ChainTrace(alpha_acceptance_rate=0.4, alpha_proposal_scale=0.7, seed=9)
    for i, labels in enumerate(([0, 0, 1, 1, 2], [1, 0, 1, 2, 2])):
        labels = np.array(labels)
        z = [labels[attributes == a] for a in range(2)]
        m = np.vstack([np.bincount(z_a, minlength=3) for z_a in z])
        state = ChainState(
            alpha0=1.5 + i,
            beta=np.array([0.2, 0.3, 0.5]),
            w=np.array([[0.1, 0.6, 0.3], [0.3, 0.3, 0.4]]),
            m=m,
            z=z,
        )
        trace.append(state, labels, attributes, SweepDiagnostics(10 + i, bool(i), (True, False), -3.25 * i))

    path = tmp_path / "trace.npz"
    save_trace(trace, path, K=3, r=2)
    loaded = load_trace(path)
    assert len(loaded) == 2
    assert loaded.seed == 9
    assert loaded.alpha_acceptance_rate == pytest.approx(0.4)
    for original, copy in zip(trace.states, loaded.states):
        assert copy.alpha0 == original.alpha0
        assert np.array_equal(copy.m, original.m)
        assert all(np.array_equal(a, b) for a, b in zip(copy.z, original.z))
        copy.validate()
    assert [d.iteration for d in loaded.diagnostics] == [10, 11]
    assert loaded.diagnostics[1].z_accepted == (True, False)
    assert loaded.assignments[1].tolist() == [1, 0, 1, 2, 2]


def test_unreadable_trace(tmp_path: Path) -> None:
    with pytest.raises(DataFormatError):
        load_trace(_write(tmp_path / "trace.npz", "not an archive"))
