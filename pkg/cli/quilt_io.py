"""
quilt_io.py - file formats for designs, block data, matrices, edges and results.

Variable indices are 1-based in every file and 0-based in memory.
Tables are headered UTF-8 CSV written through pandas with a fixed float
format, so identical inputs give byte-identical files.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
import hashlib
import json
import pathlib
from typing import Any, Optional, Sequence

# Import external packages
import numpy as np
import pandas as pd

# Import functions from local modules
from quilting import __version__
from quilting.core_types import BlockDesign, EdgeSet, PairMask
from quilting.exceptions import ConfigError
from utils.utils_logger import logger

FLOAT_FORMAT = "%.17g"
DESIGN_FILE = "design.json"
TRUTH_FILE = "truth_edges.csv"
MANIFEST_FILE = "manifest.json"
RUNTIME_FILE = "runtime.json"

#####################################
# JSON
#####################################


def _write_json(payload: dict[str, Any], path: pathlib.Path) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def write_design(design: BlockDesign, path: pathlib.Path) -> pathlib.Path:
    return _write_json(
        {
            "p": design.p,
            "blocks": design.to_one_based(),
            "sample_sizes": list(design.sample_sizes),
        },
        path,
    )


def read_design(path: pathlib.Path) -> BlockDesign:
    raw = json.loads(pathlib.Path(path).read_text(encoding="utf-8"))
    missing = [key for key in ("p", "blocks", "sample_sizes") if key not in raw]
    if missing:
        msg = f"design file {path} is missing {missing}"
        logger.error(msg)
        raise ConfigError(msg, missing)
    return BlockDesign.from_one_based(raw["p"], raw["blocks"], raw["sample_sizes"])


def write_manifest(
    out_dir: pathlib.Path, command: str, config_json: str, seed: Optional[int]
) -> pathlib.Path:
    """Config hash, seed and package version for a run directory."""
    return _write_json(
        {
            "command": command,
            "config_sha256": hashlib.sha256(config_json.encode("utf-8")).hexdigest(),
            "seed": seed,
            "version": __version__,
        },
        out_dir / MANIFEST_FILE,
    )


def write_runtime(out_dir: pathlib.Path, stats: dict[str, Any]) -> pathlib.Path:
    return _write_json(stats, out_dir / RUNTIME_FILE)


#####################################
# CSV
#####################################


def write_table(frame: pd.DataFrame, path: pathlib.Path) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def block_path(data_dir: pathlib.Path, k: int) -> pathlib.Path:
    return pathlib.Path(data_dir) / f"block_{k + 1}.csv"


def write_blocks(
    data_dir: pathlib.Path, design: BlockDesign, block_data: Sequence[np.ndarray]
) -> list[pathlib.Path]:
    """One CSV per block; column headers are the 1-based variable indices."""
    paths = []
    for k, (block, data) in enumerate(zip(design.blocks, block_data)):
        frame = pd.DataFrame(np.asarray(data), columns=[f"x{i + 1}" for i in block])
        paths.append(write_table(frame, block_path(data_dir, k)))
    return paths


def read_blocks(data_dir: pathlib.Path, design: BlockDesign) -> tuple[np.ndarray, ...]:
    blocks = []
    for k, block in enumerate(design.blocks):
        frame = pd.read_csv(block_path(data_dir, k), float_precision="round_trip")
        expected = [f"x{i + 1}" for i in block]
        if list(frame.columns) != expected:
            msg = f"{block_path(data_dir, k)} columns {list(frame.columns)} do not match block {k + 1}"
            logger.error(msg)
            raise ConfigError(msg)
        blocks.append(frame.to_numpy(dtype=float))
    logger.info(f"Read {len(blocks)} block file(s) from {data_dir}")
    return tuple(blocks)


def edges_frame(edges: EdgeSet, mask: Optional[PairMask] = None) -> pd.DataFrame:
    """Sorted 1-based edge list; with a mask, a region column (observed / unobserved)."""
    rows = []
    for i, j in edges.to_one_based():
        row = {"i": i, "j": j}
        if mask is not None:
            row["region"] = "observed" if mask.is_observed(i - 1, j - 1) else "unobserved"
        rows.append(row)
    columns = ["i", "j"] + (["region"] if mask is not None else [])
    return pd.DataFrame(rows, columns=columns)


def write_edges(edges: EdgeSet, path: pathlib.Path, mask: Optional[PairMask] = None) -> pathlib.Path:
    return write_table(edges_frame(edges, mask), path)


def read_edges(path: pathlib.Path, p: int) -> EdgeSet:
    frame = pd.read_csv(path)
    return EdgeSet.from_one_based(p, frame[["i", "j"]].to_numpy(dtype=int).tolist())


def write_matrix(matrix: np.ndarray, path: pathlib.Path) -> pathlib.Path:
    values = np.asarray(matrix)
    columns = [f"x{i + 1}" for i in range(values.shape[1])]
    return write_table(pd.DataFrame(values, columns=columns), path)


def read_matrix(path: pathlib.Path) -> np.ndarray:
    values = pd.read_csv(path, float_precision="round_trip").to_numpy(dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        msg = f"{path} does not hold a square matrix (shape {values.shape})"
        logger.error(msg)
        raise ConfigError(msg)
    return values


def write_mask(mask: PairMask, path: pathlib.Path) -> pathlib.Path:
    return write_matrix(mask.observed.astype(int), path)
