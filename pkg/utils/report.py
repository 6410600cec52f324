"""Report tables: summary and agreement-curve frames, aligned text rendering and CSV files."""
import logging
import os
from typing import Dict, Mapping, Tuple

import pandas as pd

from models.report import EvalReport

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["method", "f1", "precision", "recall", "start_0", "stop_0", "start_30", "stop_30"]
AGREEMENT_COLUMNS = ["method", "t", "start_agreement", "stop_agreement"]
NA = "n/a"
FLOAT_FORMAT = "%.4f"


def summary_frame(reports: Mapping[str, EvalReport]) -> pd.DataFrame:
    """One row per method; agreement columns are NaN when a method has no true positives."""
    rows = []
    for method, report in reports.items():
        row = {"method": method, "f1": report.f1, "precision": report.precision, "recall": report.recall}
        for t in (0, 30):
            agreement = report.at(t)
            row[f"start_{t}"] = agreement.start_agreement
            row[f"stop_{t}"] = agreement.stop_agreement
        rows.append(row)
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def agreement_frame(reports: Mapping[str, EvalReport]) -> pd.DataFrame:
    """Long form Start(t)/Stop(t) for plotting agreement curves."""
    rows = [
        {"method": method, "t": row.t, "start_agreement": row.start_agreement, "stop_agreement": row.stop_agreement}
        for method, report in reports.items()
        for row in report.agreement
    ]
    return pd.DataFrame(rows, columns=AGREEMENT_COLUMNS)


def render_table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, na_rep=NA, float_format=lambda value: FLOAT_FORMAT % value)


def write_reports(reports: Mapping[str, EvalReport], report_dir: str, prefix: str = "report") -> Tuple[str, str]:
    """Write <prefix>_summary.csv and <prefix>_agreement.csv; returns both paths."""
    os.makedirs(report_dir, exist_ok=True)
    summary_path = os.path.join(report_dir, f"{prefix}_summary.csv")
    agreement_path = os.path.join(report_dir, f"{prefix}_agreement.csv")
    summary_frame(reports).to_csv(summary_path, index=False, na_rep=NA, float_format=FLOAT_FORMAT, lineterminator="\n")
    agreement_frame(reports).to_csv(agreement_path, index=False, na_rep=NA, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote reports to {summary_path} and {agreement_path}")
    return summary_path, agreement_path


def read_summary(path: str) -> Dict[str, Dict[str, float]]:
    """Load a summary CSV back as {method: {column: value}}; n/a becomes NaN."""
    frame = pd.read_csv(path, na_values=[NA])
    return {row["method"]: {k: row[k] for k in SUMMARY_COLUMNS[1:]} for row in frame.to_dict("records")}
