#!/usr/bin/env python3
"""Brute-force scorer for the bundled fixture.

Written from the format and metric definitions alone, with no code shared
with the Rust crate. Float arithmetic mirrors the documented order of
operations (f32 vectors, sequential f64 accumulation) so ranking decisions
are reproduced exactly.

    python3 oracle.py            # prints expected.json to stdout
    python3 oracle.py --write    # rewrites expected.json
"""

import json
import math
import os
import struct
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
DIM = 64
K = 128
RERANK_K = 10
DEFAULT_PARAMS = (5.0, 0.1, 0.05)
GRID_A = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
GRID_B = [0.0, 0.02, 0.05, 0.1, 0.2, 0.5]
GRID_C = [0.0, 0.01, 0.05, 0.1, 0.5]
R_AT = [1, 5, 10]


def f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def encode(text, dim=DIM):
    chars = ["#"] + list(text.strip().lower()) + ["#"]
    acc = [0] * dim
    for i in range(len(chars) - 2):
        h = fnv1a64("".join(chars[i : i + 3]).encode("utf-8"))
        acc[h % dim] += -1 if h >> 63 else 1
    sq = 0.0
    for v in acc:
        sq += float(v) * float(v)
    norm = math.sqrt(sq)
    return [f32(v / norm) for v in acc]


def dot(a, b):
    s = 0.0
    for x, y in zip(a, b):
        s += x * y
    return s


def read_jsonl(name):
    with open(os.path.join(HERE, name), encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_ontology():
    records = read_jsonl("ontology.jsonl")
    by_cui = {r["cui"]: r for r in records}
    active = [r for r in records if r["status"] == "active"]

    def resolve(cui):
        seen = set()
        while True:
            r = by_cui[cui]
            if r["status"] == "active":
                return cui
            if r["status"] != "merged" or cui in seen:
                return None
            seen.add(cui)
            cui = r["merged_into"]

    rows = []
    for r in active:
        aliases = [r["name"]]
        for a in r["aliases"]:
            if a not in aliases:
                aliases.append(a)
        for i, a in enumerate(aliases):
            rows.append((r["cui"], a, i, encode(a)))
    related = set()
    for rel in read_jsonl("relations.jsonl"):
        a, b = resolve(rel["cui1"]), resolve(rel["cui2"])
        if a and b and a != b:
            related.add((a, b))
            related.add((b, a))
    canonical = {r["cui"]: r["name"] for r in active}
    return rows, related, resolve, canonical


def load_abbreviations():
    out = {}
    with open(os.path.join(HERE, "abbreviations.tsv"), encoding="utf-8") as f:
        for line in f:
            if line.strip():
                art, short, long = line.rstrip("\n").split("\t")
                out.setdefault(art, {})[short.strip()] = long.strip()
    return out


def expand(abbr, article, surface):
    forms = abbr.get(article, {})
    if surface.strip() in forms:
        return forms[surface.strip()]
    words = surface.split()
    if not any(w in forms for w in words):
        return surface
    return " ".join(forms.get(w, w) for w in words)


def search(rows, q, k):
    scored = [(dot(q, vec), cui, alias) for cui, alias, _, vec in rows]
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    return scored[:k]


def unique(cuis):
    out = []
    for c in cuis:
        if c not in out:
            out.append(c)
    return out


def rerank(cands, a, b, c):
    stats = {}
    for s, cui, _ in cands:
        n, tot = stats.get(cui, (0, 0.0))
        stats[cui] = (n + 1, tot + s)
    scored = []
    for s, cui, alias in cands:
        n, tot = stats[cui]
        adj = a * s + b * (tot / n) + c * n
        scored.append((adj, s, cui, alias))
    scored.sort(key=lambda t: (-t[0], -t[1], t[2], t[3]))
    return scored


def outcome(pred, gold, related):
    if pred == gold:
        return "Exact"
    if (pred, gold) in related:
        return "Related"
    return "Missed"


def summarise(entity_lists, golds, related):
    n = len(golds)
    r_at = {}
    for k in R_AT:
        r_at[str(k)] = sum(1 for e, g in zip(entity_lists, golds) if g in e[:k]) / n
    outs = [outcome(e[0], g, related) for e, g in zip(entity_lists, golds)]
    counts = {o: outs.count(o) for o in ("Exact", "Related", "Missed")}
    breakdown = {
        "exact": counts["Exact"] / n,
        "related": counts["Related"] / n,
        "missed": counts["Missed"] / n,
    }
    return r_at, breakdown, outs


def load_mentions(resolve):
    abbr = load_abbreviations()
    mentions = []
    for art in read_jsonl("corpus.jsonl"):
        for m in sorted(art["mentions"], key=lambda m: (m["start"], m["end"])):
            gold = resolve(m["cui"])
            if gold is None:
                continue
            mentions.append((art["id"], m["start"], expand(abbr, art["id"], m["text"]), gold))
    return mentions


def compute():
    rows, related, resolve, _ = load_ontology()
    mentions = load_mentions(resolve)
    golds = [m[3] for m in mentions]
    cand_sets = [search(rows, encode(m[2]), K) for m in mentions]

    base_lists = [unique([c[1] for c in cs]) for cs in cand_sets]
    base_r, base_b, base_out = summarise(base_lists, golds, related)

    def final_lists(a, b, c):
        out = []
        for cs in cand_sets:
            head = rerank(cs[:RERANK_K], a, b, c)
            out.append(unique([h[2] for h in head] + [t[1] for t in cs[RERANK_K:]]))
        return out

    rr_lists = final_lists(*DEFAULT_PARAMS)
    rr_r, rr_b, rr_out = summarise(rr_lists, golds, related)

    labels = ["Exact", "Related", "Missed"]
    counts = [[0, 0, 0] for _ in labels]
    for x, y in zip(base_out, rr_out):
        counts[labels.index(x)][labels.index(y)] += 1
    percent = []
    for row in counts:
        tot = sum(row)
        percent.append([c * 100.0 / tot if tot else 0.0 for c in row])

    grid = []
    for a in GRID_A:
        for b in GRID_B:
            for c in GRID_C:
                hits = 0
                for cs, g in zip(cand_sets, golds):
                    if rerank(cs[:RERANK_K], a, b, c)[0][2] == g:
                        hits += 1
                grid.append(((a, b, c), hits / len(golds)))

    def argmax(points):
        best = None
        for p, r in points:
            if best is None or r > best[1]:
                best = (p, r)
        return best

    best = argmax(grid)
    no_c = argmax([g for g in grid if g[0][2] == 0.0])

    # smallest gap between a decisive pair of scores, to show the oracle and
    # the crate cannot disagree through rounding
    margins = []
    for cs in cand_sets:
        top = cs[:RERANK_K + 1]
        margins.extend(top[i][0] - top[i + 1][0] for i in range(len(top) - 1) if top[i][0] != top[i + 1][0])
    return {
        "rows": len(rows),
        "entities": len({r[0] for r in rows}),
        "mentions": len(mentions),
        "baseline": {"r_at": base_r, "breakdown": base_b},
        "reranked": {"r_at": rr_r, "breakdown": rr_b},
        "transition": {"counts": counts, "row_percent": percent},
        "grid": {
            "best": list(best[0]),
            "best_r1": best[1],
            "best_without_c": list(no_c[0]),
            "best_without_c_r1": no_c[1],
        },
        "min_score_gap": min(margins),
    }


def main():
    result = compute()
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if "--write" in sys.argv:
        with open(os.path.join(HERE, "expected.json"), "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
