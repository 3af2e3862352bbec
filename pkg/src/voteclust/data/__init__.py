"""Bundled example data.

`crabs_path()` returns the location of the packaged crab morphometry table:
200 crabs in four species/sex groups of 50, five carapace measurements each.
The table is synthetic (see tools/build_crabs.py for the generator and the
README for provenance); load it with::

    data, truth = load_csv(crabs_path(), label_columns="sp,sex",
                           exclude_columns="index")
"""
from __future__ import annotations

from importlib.resources import files
from pathlib import Path

__all__ = ["crabs_path"]


def crabs_path() -> Path:
    return Path(str(files(__package__) / "crabs.csv"))
