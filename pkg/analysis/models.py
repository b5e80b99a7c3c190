"""Error records and convergence-rate tables."""

import math
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
import pandas as pd

from common.utils import format_float
from poro_hdg import settings

FIELDS = ("u", "pT", "z", "p")
RATE_COLUMNS = ["cells", "dofs", "h", "e_u", "r_u", "e_pT", "r_pT", "e_z", "r_z", "e_p", "r_p"]
# errors below this fraction of the exact field's L2 norm count as exact
EXACT_THRESHOLD = 1e-10


@dataclass(frozen=True)
class ErrorRecord:
    """Errors of one discrete solution against the exact one at ``time``."""

    cells: int
    dofs: int
    facet_dofs: int
    h: float
    time: float
    e_u: float
    e_pT: float
    e_z: float
    e_p: float
    e_u_v: float = float("nan")
    e_pT_q: float = float("nan")
    e_storage: float = float("nan")
    composite_a: float = float("nan")
    composite_b: float = float("nan")
    norm_u: float = float("nan")
    norm_pT: float = float("nan")
    norm_z: float = float("nan")
    norm_p: float = float("nan")

    def error(self, name):
        return getattr(self, f"e_{name}")

    def magnitude(self, name):
        """L2 norm of the exact field, 1 when unknown or zero."""
        value = getattr(self, f"norm_{name}")
        return value if np.isfinite(value) and value > 0.0 else 1.0

    def is_exact(self, name):
        return self.error(name) < EXACT_THRESHOLD * self.magnitude(name)

    def as_dict(self):
        return asdict(self)


def convergence_rate(coarse, fine, ratio=2.0, scale=1.0):
    """log_ratio(coarse / fine); NaN when both errors are below ``EXACT_THRESHOLD * scale``."""

    if coarse < EXACT_THRESHOLD * scale and fine < EXACT_THRESHOLD * scale:
        return float("nan")
    if fine <= 0.0 or coarse <= 0.0:
        return float("nan")
    return math.log(coarse / fine) / math.log(ratio)


@dataclass
class RateTable:
    """Error records over a refinement sequence, coarse to fine."""

    records: List[ErrorRecord] = field(default_factory=list)
    label: str = ""

    def __len__(self):
        return len(self.records)

    def append(self, record):
        self.records.append(record)

    def rates(self, name):
        """Rates between consecutive rows; the first row has none."""

        errors = [record.error(name) for record in self.records]
        out = [float("nan")]
        for coarse, fine, a, b in zip(errors, errors[1:], self.records, self.records[1:]):
            out.append(convergence_rate(coarse, fine, ratio=a.h / b.h, scale=b.magnitude(name)))
        return out

    def final_rates(self):
        return {name: self.rates(name)[-1] for name in FIELDS}

    def to_frame(self):
        rows = []
        rates = {name: self.rates(name) for name in FIELDS}
        for index, record in enumerate(self.records):
            row = {"cells": record.cells, "dofs": record.dofs, "h": record.h}
            for name in FIELDS:
                row[f"e_{name}"] = record.error(name)
                row[f"r_{name}"] = rates[name][index]
            rows.append(row)
        return pd.DataFrame(rows, columns=RATE_COLUMNS)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT, na_rep="nan")
        return path

    def to_text(self):
        frame = self.to_frame()
        header = f"{'cells':>8} {'dofs':>9} {'h':>9}" + "".join(
            f" {'e_' + name:>9} {'r':>5}" for name in FIELDS
        )
        lines = [self.label] if self.label else []
        lines.append(header)
        for index, row in frame.iterrows():
            line = f"{int(row['cells']):>8} {int(row['dofs']):>9} {format_float(row['h']):>9}"
            for name in FIELDS:
                rate = row[f"r_{name}"]
                if np.isfinite(rate):
                    shown = f"{rate:.1f}"
                elif index > 0 and self.records[index].is_exact(name):
                    shown = "exact"
                else:
                    shown = "-"
                line += f" {format_float(row['e_' + name]):>9} {shown:>5}"
            lines.append(line)
        return "\n".join(lines)
