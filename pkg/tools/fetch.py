#!/usr/bin/env python3
"""Fetch and convert the benchmark datasets into the data directory.

Requires network access.  Produces:

    penguins.csv          333 complete-case rows, label column 'species'
    proteins.jsonl        1113 labeled graphs
    vowels_train.jsonl    JapaneseVowels provided split (270 train)
    vowels_test.jsonl     JapaneseVowels provided split (370 test)
    flood_train.jsonl     FloodModeling1 provided split (regression targets)
    flood_test.jsonl
    arrowhead_train.jsonl ArrowHead provided split
    arrowhead_test.jsonl

Usage: python tools/fetch.py --data-dir data [--only penguins,proteins,...]
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import urllib.request
import zipfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from tsfile import ts_to_jsonl  # noqa: E402

PENGUINS_URL = (
    "https://raw.githubusercontent.com/allisonhorst/palmerpenguins/"
    "main/inst/extdata/penguins.csv"
)
PROTEINS_URL = "https://www.chrsmrrs.com/graphkerneldatasets/PROTEINS.zip"
TSC_BASE = "https://timeseriesclassification.com/aeon-toolkit"


def _get(url):
    print(f"fetching {url}")
    with urllib.request.urlopen(url, timeout=120) as resp:
        return resp.read()


def fetch_penguins(data_dir):
    raw = _get(PENGUINS_URL).decode("utf-8")
    reader = csv.DictReader(io.StringIO(raw))
    cols = ["island", "bill_length_mm", "bill_depth_mm", "flipper_length_mm",
            "body_mass_g", "sex"]
    rows = []
    for rec in reader:
        if any(rec[c] in ("", "NA") for c in cols + ["species"]):
            continue  # paper protocol uses the 333 complete cases
        rows.append(rec)
    assert len(rows) == 333, f"expected 333 complete cases, got {len(rows)}"
    out = data_dir / "penguins.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "species"] + cols)
        for i, rec in enumerate(rows):
            writer.writerow([f"p{i}", rec["species"]] + [rec[c] for c in cols])
    print(f"wrote {out} ({len(rows)} rows)")


def fetch_proteins(data_dir):
    blob = _get(PROTEINS_URL)
    zf = zipfile.ZipFile(io.BytesIO(blob))

    def read(name):
        return zf.read(f"PROTEINS/PROTEINS_{name}.txt").decode().splitlines()

    indicator = [int(v) for v in read("graph_indicator")]
    graph_labels = [v.strip() for v in read("graph_labels")]
    node_labels = [v.strip() for v in read("node_labels")]
    edges = [tuple(int(x) for x in line.split(",")) for line in read("A")]

    n_graphs = max(indicator)
    nodes_of = [[] for _ in range(n_graphs + 1)]
    for node_id, g in enumerate(indicator, start=1):
        nodes_of[g].append(node_id)
    local = {}
    for g in range(1, n_graphs + 1):
        for k, node_id in enumerate(nodes_of[g]):
            local[node_id] = (g, k)
    edges_of = [[] for _ in range(n_graphs + 1)]
    for u, v in edges:
        gu, lu = local[u]
        gv, lv = local[v]
        assert gu == gv, "edge crosses graph boundary"
        edges_of[gu].append([lu, lv])

    out = data_dir / "proteins.jsonl"
    with open(out, "w", encoding="utf-8") as fh:
        for g in range(1, n_graphs + 1):
            fh.write(json.dumps({
                "id": f"pr{g - 1}",
                "label": graph_labels[g - 1],
                "nodes": [node_labels[n - 1] for n in nodes_of[g]],
                "edges": edges_of[g],
            }) + "\n")
    print(f"wrote {out} ({n_graphs} graphs)")


def _fetch_tsc(data_dir, archive, prefix):
    blob = _get(f"{TSC_BASE}/{archive}.zip")
    zf = zipfile.ZipFile(io.BytesIO(blob))
    for split in ("TRAIN", "TEST"):
        text = zf.read(f"{archive}_{split}.ts").decode("utf-8")
        out = data_dir / f"{prefix}_{split.lower()}.jsonl"
        n = ts_to_jsonl(text, out, f"{prefix[:2]}{split[:2].lower()}")
        print(f"wrote {out} ({n} records)")


FETCHERS = {
    "penguins": fetch_penguins,
    "proteins": fetch_proteins,
    "vowels": lambda d: _fetch_tsc(d, "JapaneseVowels", "vowels"),
    "flood": lambda d: _fetch_tsc(d, "FloodModeling1", "flood"),
    "arrowhead": lambda d: _fetch_tsc(d, "ArrowHead", "arrowhead"),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--only", default=None,
                        help="comma-separated subset of: " + ", ".join(FETCHERS))
    args = parser.parse_args()
    data_dir = Path(args.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    names = args.only.split(",") if args.only else list(FETCHERS)
    for name in names:
        try:
            FETCHERS[name](data_dir)
        except Exception as exc:
            print(f"FAILED {name}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    main()
