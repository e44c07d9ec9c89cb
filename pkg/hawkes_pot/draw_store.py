"""
DrawStore - append-only NDJSON record of a model fit.

Layout: one "run" header record, then "hawkes_draw" and "mark_fit" records,
then a "complete" trailer. Floats are written with repr precision, so a
re-read store reproduces scores bit-identically.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from loguru import logger

from .errors import DataError
from .mark_model import BranchingMarkFit, MarkFit
from .mcmc_engine import ModelSpec, PosteriorDraw, hawkes_trace
from .predict_score import ModelFit

FORMAT_VERSION = 1


class DrawStore:
    """Single-owner append-only writer for one fitted model."""

    def __init__(self, path: Union[str, Path], header: Dict[str, Any]):
        """
        Create a new store and write its header.

        Args:
            path: Output file (must not exist)
            header: Run metadata: config_hash, seed, model, scale_factor, threshold, window
        """
        self.path = Path(path)
        if self.path.exists():
            raise DataError(f"Refusing to reopen existing draw store {self.path} for writing")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")
        self.closed = False
        self.n_records = 0
        self._write({
            "type": "run",
            "format_version": FORMAT_VERSION,
            "created": datetime.now().isoformat(),
            **header,
        })
        logger.debug(f"💾 Opened draw store {self.path}")

    def _write(self, record: Dict[str, Any]):
        if self.closed:
            raise DataError(f"Draw store {self.path} is already complete")
        self._fh.write(json.dumps(record) + "\n")
        self.n_records += 1

    def append_draw(self, draw: PosteriorDraw):
        self._write({"type": "hawkes_draw", **draw.to_dict()})

    def append_mark_fit(self, fit: BranchingMarkFit, hierarchical: bool):
        self._write({"type": "mark_fit", "hierarchical": hierarchical, **fit.to_dict()})

    def close(self):
        """Write the trailer; no further records are accepted."""
        if self.closed:
            return
        self._write({"type": "complete", "n_records": self.n_records})
        self._fh.close()
        self.closed = True
        logger.info(f"💾 Draw store written: {self.path} ({self.n_records} records)")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
            self.closed = True


def write_model_fit(path: Union[str, Path], fit: ModelFit, header: Dict[str, Any]):
    """Persist every retained draw and mark fit of a ModelFit."""
    with DrawStore(path, {"model": fit.model.name, "scale_factor": fit.scale_factor, **header}) as store:
        for draw in fit.draws:
            store.append_draw(draw)
        for rep in fit.mark_fit.fits:
            store.append_mark_fit(rep, fit.mark_fit.hierarchical)


def read_records(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Parse a completed store; incomplete stores are rejected."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Draw store not found: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"Corrupt draw store {path} at line {lineno}: {e}") from e
    if not records or records[0].get("type") != "run":
        raise DataError(f"Draw store {path} has no run header")
    if records[-1].get("type") != "complete":
        raise DataError(f"Draw store {path} is incomplete")
    return records


def load_model_fit(path: Union[str, Path], expected_config_hash: Optional[str] = None) -> ModelFit:
    """Rebuild a ModelFit from a completed store, optionally checking its config hash."""
    records = read_records(path)
    header = records[0]
    if expected_config_hash is not None and header.get("config_hash") != expected_config_hash:
        raise DataError(
            f"Draw store {path} was written with config hash {header.get('config_hash')}, "
            f"expected {expected_config_hash}; remove the stores or choose a fresh --output-dir"
        )
    chains: Dict[int, List[PosteriorDraw]] = {}
    reps = []
    hierarchical = ModelSpec.parse(header["model"]).hierarchical
    for rec in records[1:-1]:
        if rec["type"] == "hawkes_draw":
            draw = PosteriorDraw.from_dict(rec)
            chains.setdefault(draw.chain, []).append(draw)
        elif rec["type"] == "mark_fit":
            reps.append(BranchingMarkFit.from_dict(rec))
            hierarchical = bool(rec.get("hierarchical", hierarchical))
    return ModelFit(
        model=ModelSpec.parse(header["model"]),
        chains=[chains[c] for c in sorted(chains)],
        mark_fit=MarkFit(hierarchical=hierarchical, fits=reps),
        scale_factor=float(header.get("scale_factor", 1.0)),
        metadata={k: v for k, v in header.items() if k != "type"},
    )


def export_trace_csv(fit: ModelFit, path: Union[str, Path]) -> pd.DataFrame:
    """Scalar Hawkes traces (one row per retained draw) for trace plots."""
    frames = []
    for chain in fit.chains:
        trace = pd.DataFrame(hawkes_trace(chain))
        trace.insert(0, "iteration", [d.iteration for d in chain])
        trace.insert(0, "chain", [d.chain for d in chain])
        frames.append(trace)
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    frame.insert(0, "model", fit.model.name)
    frame.to_csv(path, index=False)
    return frame
