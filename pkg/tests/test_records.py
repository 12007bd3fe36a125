import numpy as np
import pytest

from slowfast_filter.errors import StructuralError
from slowfast_filter.records import HEADER, RecordStore
from slowfast_filter.simulation.integrator import integrate_full

from conftest import make_path


@pytest.fixture
def store(tmp_path):
    return RecordStore(tmp_path / "records")


def test_path_record_is_bitwise(store, thermo_model):
    path = make_path(thermo_model, 0.2, back_cells=10, dim3=2, particles=3, stream_id=9)
    store.save_path(path, "truth")
    loaded = store.load_path("truth")
    assert loaded.grid == path.grid
    assert loaded.batched and loaded.batch_shape == (3,)
    assert (loaded.seed, loaded.stream_id, loaded.label) == (path.seed, path.stream_id, path.label)
    for a, b in ((loaded.w1, path.w1), (loaded.w2, path.w2), (loaded.w3, path.w3)):
        assert a.tobytes() == b.tobytes()


def test_trajectory_record_is_bitwise(store, thermo_model):
    path = make_path(thermo_model, 0.1)
    traj = integrate_full(thermo_model, (np.ones(6), np.zeros(3)), path, 0.0, 0.1)
    store.save_trajectory(traj, "full")
    loaded = store.load_trajectory("full")
    assert loaded.times.tobytes() == traj.times.tobytes()
    assert loaded.x.tobytes() == traj.x.tobytes()
    assert loaded.y.tobytes() == traj.y.tobytes()
    assert (loaded.path_ref, loaded.mode) == (traj.path_ref, traj.mode)


def test_kind_is_checked(store, thermo_model):
    store.save_path(make_path(thermo_model, 0.1), "truth")
    with pytest.raises(StructuralError):
        store.load_trajectory("truth")


def test_foreign_file_is_rejected(store):
    store.root.mkdir(parents=True)
    (store.root / "junk.sfrec").write_bytes(b"\0" * HEADER.itemsize)
    with pytest.raises(StructuralError):
        store.load_path("junk")


def test_long_labels_are_refused(store, thermo_model):
    path = make_path(thermo_model, 0.05, particles=100).select(np.arange(0, 100, 2))
    assert len(path.label) > 128
    with pytest.raises(StructuralError):
        store.save_path(path, "picked")
    assert not (store.root / "picked.sfrec").exists()


def test_batched_trajectories_are_refused(store, thermo_model):
    path = make_path(thermo_model, 0.05, particles=2)
    traj = integrate_full(thermo_model, (np.ones(6), np.zeros(3)), path, 0.0, 0.05)
    with pytest.raises(StructuralError):
        store.save_trajectory(traj, "batched")


def test_record_dir_override(tmp_path, monkeypatch):
    monkeypatch.delenv("SLOWFAST_RECORD_DIR", raising=False)
    assert RecordStore.for_output(tmp_path).root == tmp_path / "records"
    monkeypatch.setenv("SLOWFAST_RECORD_DIR", str(tmp_path / "elsewhere"))
    assert RecordStore.for_output(tmp_path).root == tmp_path / "elsewhere"
