from .csv_io import read_timeseries_csv, read_trace_csv, write_summary_csv, write_trace_csv
from .manifest import read_manifest, write_manifest
from .models import Dataset, RunTrace

__all__ = [
    "Dataset",
    "RunTrace",
    "read_manifest",
    "read_timeseries_csv",
    "read_trace_csv",
    "write_manifest",
    "write_summary_csv",
    "write_trace_csv",
]
