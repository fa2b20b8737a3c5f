import csv
import hashlib
import json
import logging
import platform
import time
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import scipy
import scipy.io
import sympy
from pydantic import BaseModel

from app.core.config import settings
from app.models.operator import SparseOperator

logger = logging.getLogger(__name__)


def format_cell(value: Any) -> str:
    """Locale-independent CSV text; floats keep FLOAT_DIGITS significant digits"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), f".{settings.FLOAT_DIGITS}g")
    return str(value)


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactStore:
    """Writes experiment outputs under one directory and remembers what it wrote"""

    def __init__(self, output_dir: Optional[str] = None):
        self.root = Path(output_dir or settings.OUTPUT_DIR)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def _record(self, path: Path) -> Path:
        if path not in self.written:
            self.written.append(path)
        logger.debug("wrote %s", path)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.path(name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, delimiter=",", lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(cell) for cell in row])
        return self._record(path)

    def write_json(self, name: str, payload: Any) -> Path:
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return self._record(path)

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        return self._record(path)

    def write_matrix_market(self, name: str, op: SparseOperator) -> Path:
        """Matrix Market coordinate format, full (general) storage"""
        path = self.path(name if name.endswith(".mtx") else name + ".mtx")
        scipy.io.mmwrite(
            str(path),
            op.matrix.tocoo(),
            comment=f"symmetry={op.symmetry.value} grid={'x'.join(map(str, op.grid_shape))}",
            precision=settings.FLOAT_DIGITS,
            symmetry="general",
        )
        return self._record(path)

    def write_vectors(self, name: str, vectors: np.ndarray) -> Path:
        """Columns of `vectors` as little-endian float64, one vector after another.

        Complex vectors are stored as interleaved (re, im) pairs; the JSON sidecar
        records dim, count and whether the data are complex.
        """
        vectors = np.atleast_2d(np.asarray(vectors).T).T
        dim, count = vectors.shape
        is_complex = np.iscomplexobj(vectors)
        data = np.ascontiguousarray(vectors.T, dtype=np.complex128 if is_complex else np.float64)
        raw = data.view(np.float64).astype("<f8")
        path = self.path(name if name.endswith(".bin") else name + ".bin")
        raw.tofile(path)
        self._record(path)
        self.write_json(path.stem + ".json", {"dim": int(dim), "count": int(count), "complex": bool(is_complex)})
        return path

    def checksums(self) -> Dict[str, str]:
        return {p.name: sha256_of(p) for p in self.written}

    def write_manifest(self, inputs: Dict[str, Any], started: float, experiment: str) -> Path:
        from app.schemas.reports import Manifest

        manifest = Manifest(
            experiment=experiment,
            inputs=inputs,
            versions={
                "app": settings.VERSION,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "sympy": sympy.__version__,
            },
            wall_time_seconds=time.time() - started,
            files=self.checksums(),
        )
        return self.write_json("manifest.json", manifest)


def get_store(output_dir: Optional[str] = None) -> ArtifactStore:
    return ArtifactStore(output_dir)
