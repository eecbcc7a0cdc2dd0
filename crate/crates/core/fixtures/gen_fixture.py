#!/usr/bin/env python3
"""Generates the synthetic linking fixture.

Writes ontology.jsonl, relations.jsonl, corpus.jsonl and abbreviations.tsv
next to this script. Mentions are perturbed aliases; a deterministic
selection keeps 200 of them so that, under the reference encoder, the best
reranking coefficients use a non-zero entity-frequency weight.

    python3 gen_fixture.py && python3 oracle.py --write
"""

import json
import os
import random

import oracle

HERE = os.path.dirname(os.path.abspath(__file__))
SEED = 20240611
ARTICLES = 40
PER_ARTICLE = 5
# reranking point used to pick mentions that profit from alias frequency
PROBE = (1.0, 0.0, 0.5)
N_HELPS = 20
N_MISS = 70

DISO = ("DISO", "Disorders")
ANAT = ("ANAT", "Anatomy")
CHEM = ("CHEM", "Chemicals & Drugs")
LIVB = ("LIVB", "Living Beings")
PROC = ("PROC", "Procedures")
GENE = ("GENE", "Genes & Molecular Sequences")

# cui, name, extra aliases, (type id, type name), group
ENTITIES = [
    ("C9000001", "Parkinson disease", ["Parkinson's disease", "paralysis agitans", "idiopathic parkinsonism", "Parkinson disease idiopathic", "primary parkinsonism"], ("T047", "Disease or Syndrome"), DISO),
    ("C9000002", "Parkinsonism", ["parkinsonian syndrome"], ("T047", "Disease or Syndrome"), DISO),
    ("C9000003", "substantia nigra", ["nigral region", "substantia nigra pars compacta"], ("T023", "Body Part, Organ, or Organ Component"), ANAT),
    ("C9000004", "dopaminergic neuron", ["dopamine neuron", "DA neuron", "dopaminergic cell", "dopamine-producing neuron"], ("T025", "Cell"), ANAT),
    ("C9000005", "dopamine", [], ("T121", "Pharmacologic Substance"), CHEM),
    ("C9000006", "levodopa", ["L-DOPA"], ("T121", "Pharmacologic Substance"), CHEM),
    ("C9000007", "laboratory mice", ["lab mouse", "laboratory mouse strain"], ("T015", "Mammal"), LIVB),
    ("C9000008", "mice", ["mouse"], ("T015", "Mammal"), LIVB),
    ("C9000009", "iron", [], ("T196", "Element, Ion, or Isotope"), CHEM),
    ("C9000010", "iron overload", ["iron accumulation", "hemosiderosis", "iron deposition", "excess iron"], ("T047", "Disease or Syndrome"), DISO),
    ("C9000011", "oxidative stress", ["oxidative damage"], ("T046", "Pathologic Function"), DISO),
    ("C9000012", "neurodegeneration", ["neurodegenerative process", "neuronal degeneration", "neuron loss"], ("T046", "Pathologic Function"), DISO),
    ("C9000013", "alpha-synuclein", ["SNCA protein"], ("T116", "Amino Acid, Peptide, or Protein"), CHEM),
    ("C9000014", "MPTP", [], ("T131", "Hazardous or Poisonous Substance"), CHEM),
    ("C9000015", "neurotoxicity", [], ("T037", "Injury or Poisoning"), DISO),
    ("C9000016", "experiment", [], ("T062", "Research Activity"), PROC),
    ("C9000017", "tremor", [], ("T184", "Sign or Symptom"), DISO),
    ("C9000018", "kindlin-2", ["FERMT2 protein"], ("T116", "Amino Acid, Peptide, or Protein"), CHEM),
    ("C9000019", "kindlin-3", [], ("T116", "Amino Acid, Peptide, or Protein"), CHEM),
    ("C9000020", "FERMT2 gene", ["kindlin-2 gene"], ("T028", "Gene or Genome"), GENE),
]

# cui, name, status, merged_into
DEPRECATED = [
    ("C9000101", "Parkinson's disease, NOS", "merged", "C9000001"),
    ("C9000102", "Parkinson disease (obsolete)", "merged", "C9000101"),
    ("C9000103", "murine", "merged", "C9000008"),
    ("C9000201", "neuron term, retired", "deleted", None),
    ("C9000202", "kindlin family", "suppressed", None),
]

RELATIONS = [
    ("C9000001", "C9000002"),
    ("C9000002", "C9000017"),
    ("C9000003", "C9000004"),
    ("C9000005", "C9000006"),
    ("C9000005", "C9000004"),
    ("C9000007", "C9000008"),
    ("C9000009", "C9000010"),
    ("C9000011", "C9000012"),
    ("C9000012", "C9000015"),
    ("C9000013", "C9000001"),
    ("C9000014", "C9000015"),
    ("C9000018", "C9000019"),
    ("C9000018", "C9000020"),
    ("C9000103", "C9000007"),
    ("C9000201", "C9000004"),
]

ABBREVIATIONS = {"PD": "Parkinson disease", "SN": "substantia nigra", "DA": "dopamine"}

MODIFIERS = ["acute", "chronic", "severe", "human", "murine", "progressive", "striatal"]

TEMPLATES = [
    "We measured {m} in treated animals.",
    "Changes in {m} were observed after exposure.",
    "The role of {m} remains unclear.",
    "Levels of {m} correlated with outcome.",
    "Samples showed {m} at follow-up.",
    "Prior work linked {m} to disease onset.",
]


def typo(word, rng):
    if len(word) < 4:
        return word
    i = rng.randrange(1, len(word) - 1)
    op = rng.randrange(3)
    if op == 0:
        return word[:i] + word[i + 1 :]
    if op == 1:
        return word[:i] + word[i + 1] + word[i] + word[i + 2 :]
    return word[:i] + rng.choice("aeiourstn") + word[i + 1 :]


def variants(alias, rng):
    words = alias.split()
    out = {alias, alias.lower(), alias + "s", typo(alias, rng), typo(typo(alias, rng), rng)}
    out.add(rng.choice(MODIFIERS) + " " + alias)
    if len(alias) > 6:
        out.add(alias[: rng.randrange(4, len(alias) - 1)])
    if len(words) > 1:
        out.add(" ".join(reversed(words)))
        for w in words:
            out.add(w)
            out.add(rng.choice(MODIFIERS) + " " + w)
            out.add(typo(w, rng))
    return sorted(v for v in out if v.strip() and "  " not in v)


def write_jsonl(name, records):
    with open(os.path.join(HERE, name), "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def write_ontology():
    records = []
    for cui, name, aliases, (tid, tname), (gid, gname) in ENTITIES:
        records.append({
            "cui": cui, "name": name, "aliases": aliases,
            "type_ids": [tid], "type_names": [tname],
            "group_id": gid, "group_name": gname, "status": "active",
        })
    for cui, name, status, target in DEPRECATED:
        r = {
            "cui": cui, "name": name, "aliases": [],
            "type_ids": ["T047"], "type_names": ["Disease or Syndrome"],
            "group_id": "DISO", "group_name": "Disorders", "status": status,
        }
        if target:
            r["merged_into"] = target
        records.append(r)
    write_jsonl("ontology.jsonl", records)
    write_jsonl("relations.jsonl", [{"cui1": a, "cui2": b} for a, b in RELATIONS])


def pool(rng):
    """(surface, query, gold, abbreviation) candidates."""
    items = []
    for cui, name, aliases, _, _ in ENTITIES:
        for alias in [name] + aliases:
            for v in variants(alias, rng):
                items.append((v, v, cui, None))
    for short, long in ABBREVIATIONS.items():
        gold = {"PD": "C9000001", "SN": "C9000003", "DA": "C9000005"}[short]
        items.append((short, long, gold, (short, long)))
        if short == "DA":
            items.append(("DA neurons", "dopamine neurons", "C9000004", (short, long)))
    return items


def score(items):
    """Top-1 hit of every item at every default grid point."""
    rows, _, _, _ = oracle.load_ontology()
    points = [(a, b, c) for a in oracle.GRID_A for b in oracle.GRID_B for c in oracle.GRID_C]
    scored = []
    for surface, query, gold, abbr in items:
        cands = oracle.search(rows, oracle.encode(query), oracle.RERANK_K)
        hits = [oracle.rerank(cands, *p)[0][2] == gold for p in points]
        scored.append(((surface, query, gold, abbr), dict(zip(points, hits))))
    return scored


def select(scored, rng):
    """Mentions unaffected by reranking, plus a block that only the probe
    point with its entity-frequency weight gets right."""
    helps, hit, miss = [], [], []
    for item, hits in scored:
        if all(hits.values()):
            hit.append(item)
        elif not any(hits.values()):
            miss.append(item)
        elif hits[PROBE] and not any(h for p, h in hits.items() if p[2] == 0.0):
            helps.append(item)
    for group in (helps, hit, miss):
        rng.shuffle(group)
    abbr = [i for i in helps + hit + miss if i[3]]
    chosen = list(abbr)

    def take(group, n):
        picked = [i for i in group if i not in chosen][: max(0, n)]
        chosen.extend(picked)

    take(helps, N_HELPS - sum(1 for i in chosen if i in helps))
    take(miss, N_MISS - sum(1 for i in chosen if i in miss))
    take(hit, ARTICLES * PER_ARTICLE - len(chosen))
    assert len(chosen) == ARTICLES * PER_ARTICLE, len(chosen)
    rng.shuffle(chosen)
    return chosen


def write_corpus(chosen, rng):
    articles = []
    abbreviations = []
    merged_golds = {"C9000001": ["C9000101", "C9000102"], "C9000008": ["C9000103"]}
    gold_counter = {}
    for a in range(ARTICLES):
        aid = "PMID%05d" % (a + 1)
        title = "Case series %d on neurodegeneration models" % (a + 1)
        abstract = ""
        mentions = []
        for surface, _, gold, abbr in chosen[a * PER_ARTICLE : (a + 1) * PER_ARTICLE]:
            if abbr and (aid, abbr[0]) not in {(x[0], x[1]) for x in abbreviations}:
                abbreviations.append((aid, abbr[0], abbr[1]))
            n = gold_counter.get(gold, 0)
            gold_counter[gold] = n + 1
            alt = merged_golds.get(gold)
            if alt and n % 3 == 2:
                gold = alt[(n // 3) % len(alt)]
            template = rng.choice(TEMPLATES)
            prefix, suffix = template.split("{m}")
            if abstract:
                abstract += " "
            start = len((title + "\n" + abstract + prefix).encode("utf-8"))
            abstract += prefix + surface + suffix
            end = start + len(surface.encode("utf-8"))
            mentions.append({"start": start, "end": end, "text": surface, "cui": gold})
        articles.append({"id": aid, "title": title, "abstract": abstract, "mentions": mentions})
    write_jsonl("corpus.jsonl", articles)
    with open(os.path.join(HERE, "abbreviations.tsv"), "w", encoding="utf-8") as f:
        for row in abbreviations:
            f.write("\t".join(row) + "\n")


def main():
    rng = random.Random(SEED)
    write_ontology()
    items = pool(rng)
    scored = score(items)
    chosen = select(scored, rng)
    write_corpus(chosen, rng)
    print("pool %d, chosen %d" % (len(items), len(chosen)))


if __name__ == "__main__":
    main()
