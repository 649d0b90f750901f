import json
import logging
import math
import os
from typing import Any, Iterable

import pandas as pd

from silt_lab.caching.coder import JsonEncoder, finite_or_none

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


def record_columns(records: Iterable[dict]) -> list[str]:
    """Union of record keys in order of first appearance."""
    columns = {}
    for record in records:
        for key in record:
            columns.setdefault(key, None)
    return list(columns)


def records_to_dataframe(records: list[dict], columns: list[str] | None = None) -> pd.DataFrame:
    """
    One row per record, columns fixed by `columns` (or by first appearance).
    Object dtype keeps integers as integers when some records lack a column.
    """
    columns = columns if columns is not None else record_columns(records)
    rows = [[record.get(c) for c in columns] for record in records]
    return pd.DataFrame(rows, columns=columns, dtype=object)


NULL_STRINGS = {'None', 'nan', 'NaN', ''}


def clean_value(value: Any) -> Any:
    if isinstance(value, str):
        value = value.strip()
        return None if value in NULL_STRINGS else value
    return finite_or_none(value)


def clean_dataframe(df: pd.DataFrame) -> pd.DataFrame:
    """
    Strip strings and blank out null markers and non-finite numbers, column by column.
    Columns keep object dtype, so an integer column with gaps is still written as integers.
    """
    return pd.DataFrame({column: pd.Series([clean_value(v) for v in df[column]], index=df.index, dtype=object)
                         for column in df.columns}, index=df.index)


def write_records(records: list[dict],
                  directory: str,
                  stem: str,
                  chunk_size: int = 20000) -> tuple[str, str]:
    """
    Write records to `<directory>/<stem>.csv` and `<directory>/<stem>.jsonl`.
    CSV has one header row and RFC-4180 quoting; JSON-lines objects use the CSV column order as key order.
    Missing and non-finite values are written as empty CSV fields and JSON nulls.
    :return: the two paths.
    """
    os.makedirs(directory, exist_ok=True)
    columns = record_columns(records)
    csv_path = os.path.join(directory, f"{stem}.csv")
    jsonl_path = os.path.join(directory, f"{stem}.jsonl")

    num_chunks = max(1, math.ceil(len(records) / chunk_size))
    with open(csv_path, 'w', encoding='utf-8', newline='') as csv_file:
        for i in range(num_chunks):
            df_chunk = clean_dataframe(records_to_dataframe(records[i * chunk_size:(i + 1) * chunk_size], columns))
            df_chunk.to_csv(csv_file, index=False, header=(i == 0), lineterminator='\n')

    with open(jsonl_path, 'w', encoding='utf-8', newline='') as jsonl_file:
        for record in records:
            row = {c: finite_or_none(record.get(c)) for c in columns}
            jsonl_file.write(json.dumps(row, cls=JsonEncoder, ensure_ascii=False) + '\n')

    logger.info(f"wrote {len(records)} records to {csv_path} and {jsonl_path}")
    return csv_path, jsonl_path


def write_manifest(directory: str, stem: str, config: dict[str, Any], version: str,
                   wall_time_seconds: float, record_count: int) -> str:
    """Run manifest `<stem>.run.json`; the only output that changes between identical runs."""
    path = os.path.join(directory, f"{stem}.run.json")
    manifest = {
        'config': config,
        'version': version,
        'wall_time_seconds': round(wall_time_seconds, 6),
        'record_count': record_count,
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, cls=JsonEncoder, indent=2, sort_keys=True)
        f.write('\n')
    return path


def read_results(directory: str, exclude: tuple[str, ...] = ()) -> pd.DataFrame:
    """Concatenate every result CSV of a directory, tagging rows with their file stem."""
    if not os.path.isdir(directory):
        return pd.DataFrame()
    frames = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith('.csv') or name[:-len('.csv')] in exclude:
            continue
        path = os.path.join(directory, name)
        try:
            df = pd.read_csv(path)
        except pd.errors.EmptyDataError:
            logger.warning(f"skipping empty result file {path}")
            continue
        df.insert(0, 'file', name[:-len('.csv')])
        frames.append(df)
    if not frames:
        return pd.DataFrame()
    return pd.concat(frames, ignore_index=True, sort=False)


def summarize_results(df: pd.DataFrame) -> pd.DataFrame:
    """Per file and command: record count plus the mean of the main estimate columns present."""
    if df.empty:
        return pd.DataFrame(columns=['file', 'command', 'records'])
    keys = [c for c in ('file', 'command') if c in df.columns]
    summary = df.groupby(keys, sort=True).size().rename('records').reset_index()
    for column in ('p_hat', 'audit_violations', 'identity_residual', 'exponent', 'zeta'):
        if column in df.columns:
            values = pd.to_numeric(df[column], errors='coerce')
            means = values.groupby([df[k] for k in keys], sort=True).mean().rename(f"mean_{column}").reset_index()
            summary = summary.merge(means, on=keys, how='left')
    return summary
