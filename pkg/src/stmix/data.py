"""Panel data container and CSV ingest/export.

A panel holds N independent years of T days at n sites as a dense (N, T, n)
cube plus a missingness mask (True = missing). Two CSV files describe a
panel on disk:

* stations.csv: site_id, x_km, y_km
* values.csv:   site_id, year, day_index, value   (day_index is 1-based)

Cells absent from values.csv are masked. Export writes only present cells, so
ingest(export(panel)) reproduces values and mask exactly; floats round-trip
through repr.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, LayoutError

__all__ = ["PanelDataset", "ingest", "export_panel"]


@dataclass
class PanelDataset:
    """Dense space-time panel: values[year, day, site]."""

    site_ids: list[str]
    coords: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    scale: str = "data"
    year_labels: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        n = len(self.site_ids)
        if len(set(self.site_ids)) != n:
            raise DataError("duplicate site ids")
        if self.coords.shape != (n, 2):
            raise LayoutError(f"coords shape {self.coords.shape} does not match {n} sites")
        if not np.all(np.isfinite(self.coords)):
            raise DataError("site coordinates must be finite")
        if self.values.ndim != 3 or self.values.shape[2] != n:
            raise LayoutError(f"values must be (N, T, {n}), got {self.values.shape}")
        if self.mask.shape != self.values.shape:
            raise LayoutError("mask shape must match values")
        if self.scale not in ("data", "uniform"):
            raise DataError(f"scale must be 'data' or 'uniform', got {self.scale!r}")
        valid = self.values[~self.mask]
        if not np.all(np.isfinite(valid)):
            raise DataError("non-finite values outside the mask")
        if self.scale == "uniform" and valid.size and (valid.min() < 0.0 or valid.max() > 1.0):
            raise DataError("uniform-scale values must lie in [0, 1]")
        if not self.year_labels:
            self.year_labels = list(range(1, self.n_years + 1))
        if len(self.year_labels) != self.n_years:
            raise LayoutError("year_labels length must equal the number of years")

    @property
    def n_years(self) -> int:
        return self.values.shape[0]

    @property
    def n_days(self) -> int:
        return self.values.shape[1]

    @property
    def n_sites(self) -> int:
        return self.values.shape[2]

    @property
    def has_missing(self) -> bool:
        return bool(self.mask.any())

    def site_index(self, site_id: str) -> int:
        try:
            return self.site_ids.index(site_id)
        except ValueError:
            raise DataError(f"unknown site id {site_id!r}") from None

    def subset_years(self, year_idx: np.ndarray) -> "PanelDataset":
        year_idx = np.asarray(year_idx, dtype=int)
        return PanelDataset(
            site_ids=list(self.site_ids),
            coords=self.coords.copy(),
            values=self.values[year_idx].copy(),
            mask=self.mask[year_idx].copy(),
            scale=self.scale,
            year_labels=[self.year_labels[i] for i in year_idx],
        )

    def subset_sites(self, site_idx: np.ndarray) -> "PanelDataset":
        site_idx = np.asarray(site_idx, dtype=int)
        return PanelDataset(
            site_ids=[self.site_ids[i] for i in site_idx],
            coords=self.coords[site_idx].copy(),
            values=self.values[:, :, site_idx].copy(),
            mask=self.mask[:, :, site_idx].copy(),
            scale=self.scale,
            year_labels=list(self.year_labels),
        )


def ingest(stations_csv: str | Path, values_csv: str | Path, scale: str = "data") -> PanelDataset:
    """Read a panel from its two CSV files.

    Rejects duplicate station rows, duplicate (site, year, day) cells, unknown
    site ids, non-numeric fields, and day indices outside 1..T where T is the
    largest day_index present.
    """
    stations_csv = Path(stations_csv)
    values_csv = Path(values_csv)
    try:
        stations = pd.read_csv(stations_csv, dtype={"site_id": str})
    except Exception as exc:
        raise DataError(f"cannot read {stations_csv}: {exc}") from exc
    for col in ("site_id", "x_km", "y_km"):
        if col not in stations.columns:
            raise DataError(f"{stations_csv} is missing column {col!r}")
    if stations["site_id"].duplicated().any():
        raise DataError("duplicate site_id rows in stations file")
    for col in ("x_km", "y_km"):
        coerced = pd.to_numeric(stations[col], errors="coerce")
        if coerced.isna().any():
            raise DataError(f"non-numeric {col} in stations file")
        stations[col] = coerced

    try:
        vals = pd.read_csv(values_csv, dtype={"site_id": str})
    except Exception as exc:
        raise DataError(f"cannot read {values_csv}: {exc}") from exc
    for col in ("site_id", "year", "day_index", "value"):
        if col not in vals.columns:
            raise DataError(f"{values_csv} is missing column {col!r}")
    for col in ("year", "day_index", "value"):
        coerced = pd.to_numeric(vals[col], errors="coerce")
        if coerced.isna().any():
            raise DataError(f"non-numeric {col} in values file")
        vals[col] = coerced
    if not (vals["day_index"] == vals["day_index"].astype(int)).all():
        raise DataError("day_index must be an integer")
    if not (vals["year"] == vals["year"].astype(int)).all():
        raise DataError("year must be an integer")

    site_ids = list(stations["site_id"])
    site_pos = {s: i for i, s in enumerate(site_ids)}
    unknown = set(vals["site_id"]) - set(site_ids)
    if unknown:
        raise DataError(f"unknown site ids in values file: {sorted(unknown)[:5]}")
    if vals.duplicated(subset=["site_id", "year", "day_index"]).any():
        raise DataError("duplicate (site_id, year, day_index) rows in values file")

    years = sorted(vals["year"].astype(int).unique())
    T = int(vals["day_index"].max())
    if int(vals["day_index"].min()) < 1:
        raise DataError("day_index must be >= 1")
    year_pos = {y: i for i, y in enumerate(years)}

    values = np.full((len(years), T, len(site_ids)), np.nan)
    mask = np.ones(values.shape, dtype=bool)
    yi = vals["year"].astype(int).map(year_pos).to_numpy()
    di = vals["day_index"].astype(int).to_numpy() - 1
    si = vals["site_id"].map(site_pos).to_numpy()
    values[yi, di, si] = vals["value"].to_numpy(dtype=float)
    mask[yi, di, si] = False
    values[mask] = 0.0  # placeholder under the mask; never read

    return PanelDataset(
        site_ids=site_ids,
        coords=stations[["x_km", "y_km"]].to_numpy(dtype=float),
        values=values,
        mask=mask,
        scale=scale,
        year_labels=[int(y) for y in years],
    )


def export_panel(panel: PanelDataset, stations_csv: str | Path, values_csv: str | Path) -> None:
    """Write a panel to its two CSV files; masked cells are omitted."""
    with open(stations_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x_km", "y_km"])
        for sid, (x, y) in zip(panel.site_ids, panel.coords):
            w.writerow([sid, repr(float(x)), repr(float(y))])
    with open(values_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "year", "day_index", "value"])
        for yi in range(panel.n_years):
            label = panel.year_labels[yi]
            for di in range(panel.n_days):
                for si in range(panel.n_sites):
                    if not panel.mask[yi, di, si]:
                        w.writerow(
                            [panel.site_ids[si], label, di + 1, repr(float(panel.values[yi, di, si]))]
                        )
