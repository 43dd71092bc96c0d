"""Convert TREC-style run scores into the comot JSONL dataset format.

Inputs:
  run     whitespace-separated `qid Q0 docid rank score tag` lines from an
          upstream ranker (the score column is used; rank is ignored)
  qrels   `qid 0 docid relevance` lines
  groups  `docid group` lines, group 1 for protected documents

Documents missing from qrels get relevance 0. Documents missing from the
group file are skipped with a warning, since fairness needs a label.
Output is one JSON object per query on stdout:

  {"query_id": "...", "docs": [{"doc_id": "...", "score": 1.3,
   "relevance": 2, "group": 0}, ...]}

Queries with fewer than three labelled documents or a single group are
kept here; `comot` drops them when it loads the file.

Usage: python trec_to_jsonl.py RUN QRELS GROUPS > split.jsonl
"""

import json
import sys
from collections import defaultdict


def read_pairs(path, key_cols, value_col, cast):
    out = {}
    with open(path) as f:
        for line in f:
            parts = line.split()
            if parts:
                out[tuple(parts[c] for c in key_cols)] = cast(parts[value_col])
    return out


def main(run_path, qrels_path, groups_path):
    qrels = read_pairs(qrels_path, (0, 2), 3, int)
    groups = {k[0]: v for k, v in read_pairs(groups_path, (0,), 1, int).items()}
    queries = defaultdict(list)
    with open(run_path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            qid, docid, score = parts[0], parts[2], float(parts[4])
            if docid not in groups:
                print(f"warning: no group for {docid}", file=sys.stderr)
                continue
            queries[qid].append(
                {
                    "doc_id": docid,
                    "score": score,
                    "relevance": max(qrels.get((qid, docid), 0), 0),
                    "group": groups[docid],
                }
            )
    for qid in sorted(queries):
        print(json.dumps({"query_id": qid, "docs": queries[qid]}))


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    main(*sys.argv[1:])
