"""
From prediction logs to a ranking report
========================================

Writes the bundled reference logs (ten models, five datasets, ensemble and
dropout samples), then runs the full pipeline the ``crs score`` command uses.
"""

# %%
import tempfile
from pathlib import Path

from crs.config import RunConfig
from crs.fixtures import composite_logs
from crs.records import ingest_log, merge_logs, write_log
from crs.report import build_run_report, render_table

tmp = Path(tempfile.mkdtemp())
main_log, dropout_log = composite_logs()
write_log(main_log, tmp / "main.jsonl")
write_log(dropout_log, tmp / "dropout.jsonl")
records = merge_logs([ingest_log(tmp / "main.jsonl"), ingest_log(tmp / "dropout.jsonl")])
print(f"{len(records)} records from 2 logs in {tmp}")

# %%
report = build_run_report(records, RunConfig(bootstrap_n=50, jobs=4))
print(render_table(report))
for w in report.warnings:
    print("warning:", w)
