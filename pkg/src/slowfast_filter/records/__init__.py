"""
Binary records for noise paths and trajectories
"""
import logging
import os
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import StructuralError
from ..noise.paths import NoisePath, TimeGrid
from ..simulation.integrator import Trajectory

logger = logging.getLogger(__name__)

MAGIC = b"SFREC001"
KIND_PATH = 1
KIND_TRAJECTORY = 2

# Little-endian fixed header; arrays follow as '<f8'
HEADER = np.dtype(
    [
        ("magic", "S8"),
        ("kind", "<u4"),
        ("batched", "<u4"),
        ("dt", "<f8"),
        ("t0", "<f8"),
        ("n_back", "<i8"),
        ("n_fwd", "<i8"),
        ("seed", "<u8"),
        ("stream_id", "<i8"),
        ("particle_offset", "<i8"),
        ("batch", "<i8"),
        ("dim1", "<i8"),
        ("dim2", "<i8"),
        ("dim3", "<i8"),
        ("label", "S128"),
        ("mode", "S16"),
    ]
)


def _text_field(value: str, field: str) -> bytes:
    """Encode a header string; numpy would silently cut it at the field width"""
    raw = value.encode()
    width = HEADER.fields[field][0].itemsize
    if len(raw) > width:
        raise StructuralError(f"record {field} is {len(raw)} bytes, the header holds {width}: {value[:40]}...")
    return raw


class RecordStore:
    """Reads and writes replayable records under one directory"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    @classmethod
    def for_output(cls, out_dir: Union[str, Path]) -> "RecordStore":
        """SLOWFAST_RECORD_DIR when set, otherwise <out_dir>/records"""
        return cls(os.getenv("SLOWFAST_RECORD_DIR") or Path(out_dir) / "records")

    def _file(self, name: str) -> Path:
        return self.root / f"{name}.sfrec"

    def _write(self, name: str, header: np.ndarray, *arrays: np.ndarray) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        target = self._file(name)
        with open(target, "wb") as fh:
            fh.write(header.tobytes())
            for arr in arrays:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        logger.debug(f"Wrote record {target}")
        return target

    def _read(self, name: str, kind: int):
        raw = self._file(name).read_bytes()
        header = np.frombuffer(raw, dtype=HEADER, count=1)[0]
        if header["magic"] != MAGIC or int(header["kind"]) != kind:
            raise StructuralError(f"{self._file(name)} is not a {'path' if kind == KIND_PATH else 'trajectory'} record")
        return header, np.frombuffer(raw, dtype="<f8", offset=HEADER.itemsize)

    def save_path(self, path: NoisePath, name: str) -> Path:
        batch = path.batch_shape[0] if path.batched else 0
        header = np.zeros(1, dtype=HEADER)
        header[0] = (
            MAGIC, KIND_PATH, int(path.batched), path.dt, 0.0, path.grid.n_back, path.grid.n_fwd, path.seed, path.stream_id,
            path.particle_offset, batch, path.w1.shape[-1], path.w2.shape[-1], path.w3.shape[-1], _text_field(path.label, "label"), b"",
        )
        return self._write(name, header, path.w1, path.w2, path.w3)

    def load_path(self, name: str) -> NoisePath:
        h, data = self._read(name, KIND_PATH)
        grid = TimeGrid(float(h["dt"]), int(h["n_back"]), int(h["n_fwd"]))
        batch = (int(h["batch"]),) if h["batched"] else ()
        shapes = [(grid.n_cells,) + batch + (int(h["dim1"]),), (grid.n_cells,) + batch + (int(h["dim2"]),), (grid.n_fwd,) + batch + (int(h["dim3"]),)]
        arrays, start = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            arrays.append(data[start : start + size].reshape(shape).copy())
            start += size
        return NoisePath(
            grid, arrays[0], arrays[1], arrays[2], int(h["seed"]), int(h["stream_id"]), int(h["particle_offset"]), bool(h["batched"]),
            h["label"].decode(),
        )

    def save_trajectory(self, traj: Trajectory, name: str) -> Path:
        if traj.batch_shape:
            raise StructuralError("only unbatched trajectories are recorded")
        header = np.zeros(1, dtype=HEADER)
        header[0] = (
            MAGIC, KIND_TRAJECTORY, 0, traj.dt, float(traj.times[0]), 0, len(traj.times), 0, 0, 0, 0, traj.x.shape[-1], traj.y.shape[-1], 0,
            _text_field(traj.path_ref, "label"), _text_field(traj.mode, "mode"),
        )
        return self._write(name, header, traj.times, traj.x, traj.y)

    def load_trajectory(self, name: str) -> Trajectory:
        h, data = self._read(name, KIND_TRAJECTORY)
        n, d1, d2 = int(h["n_fwd"]), int(h["dim1"]), int(h["dim2"])
        times = data[:n].copy()
        x = data[n : n + n * d1].reshape(n, d1).copy()
        y = data[n + n * d1 : n + n * (d1 + d2)].reshape(n, d2).copy()
        return Trajectory(times, x, y, h["label"].decode(), h["mode"].decode())

