#!/usr/bin/env python3
"""Download the Cora citation dataset and prepare it for the acceptance suite.

Run this on a machine with network access, then point GRAPH_MATERN_CORA_DIR
at the output directory when running pytest:

    python3 scripts/fetch_cora.py --out data/cora
    GRAPH_MATERN_CORA_DIR=$PWD/data/cora pytest tests/test_acceptance.py -k criterion_10

Output files (all indexed over the largest connected component, reindexed
to 0..n-1):

    edges.txt    edge list with a ``nodes N`` header, unit weights
    labels.csv   node_index,class_index rows
    ids.csv      id,index map from original paper ids to node indices
    classes.txt  class name per class index, one per line

The largest connected component of the citation graph has 2485 nodes and
5069 undirected edges; the script aborts if it finds anything else.
"""

import argparse
import io
import tarfile
import urllib.request
from pathlib import Path

URL = "https://linqs-data.soe.ucsc.edu/public/lbc/cora.tgz"
EXPECTED_NODES = 2485
EXPECTED_EDGES = 5069


def _read_archive(raw):
    cites, content = None, None
    with tarfile.open(fileobj=io.BytesIO(raw), mode="r:gz") as tar:
        for member in tar.getmembers():
            if member.name.endswith("cora.cites"):
                cites = tar.extractfile(member).read().decode("utf-8")
            elif member.name.endswith("cora.content"):
                content = tar.extractfile(member).read().decode("utf-8")
    if cites is None or content is None:
        raise RuntimeError("archive did not contain cora.cites and cora.content")
    return cites, content


def _largest_component(nodes, edges):
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    groups = {}
    for v in nodes:
        groups.setdefault(find(v), []).append(v)
    return set(max(groups.values(), key=len))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/cora", help="output directory")
    ap.add_argument(
        "--archive", default=None,
        help="path to an already-downloaded cora.tgz (skips the download)",
    )
    args = ap.parse_args()

    if args.archive:
        raw = Path(args.archive).read_bytes()
    else:
        print(f"downloading {URL} ...")
        with urllib.request.urlopen(URL) as resp:
            raw = resp.read()
    cites, content = _read_archive(raw)

    labels_by_id = {}
    class_names = []
    class_index = {}
    for line in content.splitlines():
        parts = line.strip().split("\t")
        if len(parts) < 2:
            continue
        paper_id, name = parts[0], parts[-1]
        if name not in class_index:
            class_index[name] = len(class_names)
            class_names.append(name)
        labels_by_id[paper_id] = class_index[name]

    # cora.cites lists "cited citing" pairs; keep each undirected pair once
    pairs = set()
    for line in cites.splitlines():
        parts = line.strip().split()
        if len(parts) != 2:
            continue
        u, v = parts
        if u == v or u not in labels_by_id or v not in labels_by_id:
            continue
        pairs.add((u, v) if u < v else (v, u))

    component = _largest_component(set(labels_by_id), pairs)
    kept = sorted(component)
    index = {pid: i for i, pid in enumerate(kept)}
    edges = sorted(
        tuple(sorted((index[u], index[v]))) for u, v in pairs
        if u in component and v in component
    )
    n = len(kept)
    if (n, len(edges)) != (EXPECTED_NODES, EXPECTED_EDGES):
        raise SystemExit(
            f"expected {EXPECTED_NODES} nodes / {EXPECTED_EDGES} edges in the "
            f"largest component, got {n} / {len(edges)}; the upstream archive "
            "may have changed"
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.txt", "w", encoding="utf-8") as fh:
        fh.write(f"nodes {n}\n")
        for u, v in edges:
            fh.write(f"{u} {v} 1.0\n")
    with open(out / "labels.csv", "w", encoding="utf-8") as fh:
        fh.write("node_index,class_index\n")
        for pid in kept:
            fh.write(f"{index[pid]},{labels_by_id[pid]}\n")
    with open(out / "ids.csv", "w", encoding="utf-8") as fh:
        fh.write("id,index\n")
        for pid in kept:
            fh.write(f"{pid},{index[pid]}\n")
    with open(out / "classes.txt", "w", encoding="utf-8") as fh:
        for name in class_names:
            fh.write(name + "\n")
    print(f"wrote {n} nodes, {len(edges)} edges, {len(class_names)} classes to {out}/")


if __name__ == "__main__":
    main()
