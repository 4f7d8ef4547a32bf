"""Excel downloads for run tables."""

import io
from typing import Optional

import pandas as pd
import streamlit as st

from core.experiment import RunRecord

EXCEL_MIME = "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"


def tables_to_excel(tables: dict[str, pd.DataFrame]) -> bytes:
    """One workbook, one sheet per table (sheet names cut to Excel's 31 characters)."""
    buffer = io.BytesIO()
    with pd.ExcelWriter(buffer, engine="openpyxl") as writer:
        for sheet, frame in tables.items():
            frame.to_excel(writer, index=False, sheet_name=sheet[:31])
    return buffer.getvalue()


def disagreement_frame(report: Optional[dict]) -> pd.DataFrame:
    if not report:
        return pd.DataFrame(columns=["state", "visits", "safe_agrees", "ltl_agrees"])
    return pd.DataFrame(
        report["agreement"]["disagreements"],
        columns=["state", "visits", "safe_agrees", "ltl_agrees"],
    )


def render_downloads(record: RunRecord, policy: Optional[pd.DataFrame]):
    """Download buttons for the stats, the policy table and the verify disagreements."""
    name = record.manifest.get("name", "run")
    seed = record.manifest.get("seed", 0)
    tables = {}
    if record.stats is not None:
        tables["stats"] = record.stats
    if policy is not None:
        tables["policy"] = policy
    if record.verify is not None:
        tables["disagreements"] = disagreement_frame(record.verify)

    if not tables:
        st.info("Nothing to download for this run.")
        return

    st.download_button(
        label="Download all tables (Excel)",
        data=tables_to_excel(tables),
        file_name=f"{name}_seed{seed}.xlsx",
        mime=EXCEL_MIME,
        type="primary",
        key="download_all_tables",
    )

    cols = st.columns(len(tables))
    for col, (sheet, frame) in zip(cols, tables.items()):
        col.download_button(
            label=f"{sheet} ({len(frame)} rows)",
            data=tables_to_excel({sheet: frame}),
            file_name=f"{name}_seed{seed}_{sheet}.xlsx",
            mime=EXCEL_MIME,
            key=f"download_{sheet}",
        )
