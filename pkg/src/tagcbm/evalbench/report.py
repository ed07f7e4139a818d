"""CSV summary rows along the table axes (setting, gamma/rho, K, seed)."""
from __future__ import annotations

import csv
import io
from typing import Iterable, Mapping

CSV_COLUMNS = ("setting", "param", "K", "seed", "macro_f1", "bacc")


def summary_csv(records: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for rec in records:
        row = dict(rec)
        for key in ("macro_f1", "bacc"):
            row[key] = f"{float(row[key]):.6f}"
        row["param"] = "" if row.get("param") is None else row["param"]
        writer.writerow(row)
    return buf.getvalue()
