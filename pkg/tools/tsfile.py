"""Parser for the .ts time-series archive format used by common benchmark suites.

Converts sktime-style .ts files (header lines starting with '@', one instance
per data line, channels separated by ':', the final field being the target)
into the series JSONL records the library loads.
"""

from __future__ import annotations

import json


def parse_ts(text):
    """Parse .ts file content into a list of (channels, target) pairs."""
    records = []
    in_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower().startswith("@data"):
            in_data = True
            continue
        if line.startswith("@"):
            continue
        if not in_data:
            continue
        parts = line.split(":")
        target = parts[-1].strip()
        channels = []
        for chunk in parts[:-1]:
            vals = []
            for cell in chunk.split(","):
                cell = cell.strip()
                if cell in ("?", "NaN", ""):
                    vals.append(None)
                else:
                    vals.append(float(cell))
            channels.append(vals)
        records.append((channels, target))
    if not records:
        raise ValueError("no @data section found in .ts input")
    return records


def ts_to_jsonl(text, out_path, prefix):
    records = parse_ts(text)
    with open(out_path, "w", encoding="utf-8") as fh:
        for i, (channels, target) in enumerate(records):
            fh.write(json.dumps({"id": f"{prefix}{i}", "label": target, "channels": channels}) + "\n")
    return len(records)
