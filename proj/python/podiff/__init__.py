"""Python access to the podiff toolkit: FLD1/FST1 files, configs, metrics and the pipeline."""

import csv
import json
from pathlib import Path

from ._podiff import (
    PodiffError,
    __version__,
    crps_ensemble,
    mace,
    propagate,
    read_field,
    read_stack,
    rmse_mae,
    run,
    sha256_file,
    write_field,
    write_stack,
)
from ._podiff import load_config as _load_config_json


def load_config(path):
    """Validated config with every default filled in, as nested dicts."""
    return json.loads(_load_config_json(str(path)))


def read_csv(path):
    """Rows of a CSV artifact as dicts; numeric cells become floats."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for key, value in row.items():
                try:
                    row[key] = float(value)
                except (TypeError, ValueError):
                    pass
            rows.append(row)
    return rows


def read_manifest(run_dir):
    return json.loads((Path(run_dir) / "manifest.json").read_text())


__all__ = [
    "PodiffError",
    "__version__",
    "crps_ensemble",
    "load_config",
    "mace",
    "propagate",
    "read_csv",
    "read_field",
    "read_manifest",
    "read_stack",
    "rmse_mae",
    "run",
    "sha256_file",
    "write_field",
    "write_stack",
]
