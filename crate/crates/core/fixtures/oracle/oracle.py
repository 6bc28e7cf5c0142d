#!/usr/bin/env python3
"""Brute-force reference values for the bundled fixtures.

Run from the fixtures directory:  python3 oracle/oracle.py
Writes oracle/tfidf_expected.json and oracle/ranking_expected.json.
"""
import json
import math
import re
from collections import Counter

STRUCTURED = ["cuisines", "meals", "special_diets", "price_range", "location", "description"]
MIN_RATING = 4


def tokenize(text):
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]


def idf_table(docs):
    n = len(docs)
    df = Counter()
    for d in docs:
        df.update(set(tokenize(d)))
    return {t: math.log((1 + n) / (1 + c)) + 1 for t, c in df.items()}


def weights(text, idf):
    counts = Counter(t for t in tokenize(text) if t in idf)
    return {t: c * idf[t] for t, c in counts.items()}


def cosine(a, b):
    dot = sum(w * b.get(t, 0.0) for t, w in a.items())
    na = math.sqrt(sum(w * w for w in a.values()))
    nb = math.sqrt(sum(w * w for w in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return min(1.0, max(0.0, dot / (na * nb)))


def snippets(entity):
    out = []
    for field in STRUCTURED:
        value = entity.get(field)
        if isinstance(value, list):
            value = ", ".join(value)
        if value and value.strip():
            if field == "cuisines":
                value = value.lower()
            out.append((f"{entity['id']}#{field}#0", value))
    for i, r in enumerate(entity.get("reviews", [])):
        if r["rating"] >= MIN_RATING and r["text"].strip():
            out.append((f"{entity['id']}#review#{i}", r["text"]))
    return out


def rank(entities, docs_idf, snips, query, j, n):
    rows = []
    for e in entities:
        scored = [(sid, cosine(weights(query, docs_idf), weights(text, docs_idf))) for sid, text in snips[e["id"]]]
        scored.sort(key=lambda p: (-p[1], p[0]))
        top = scored[:j]
        total = 0.0
        for _, s in top:
            total += s
        item = total / len(top) if top else 0.0
        rows.append({
            "entity_id": e["id"],
            "item_score": item,
            "top_snippets": [{"snippet_id": sid, "score": s} for sid, s in top],
        })
    rows.sort(key=lambda r: (-r["item_score"], r["entity_id"]))
    return rows[:n]


def main():
    docs = [l.rstrip("\n") for l in open("three_docs.txt") if l.strip()]
    idf = idf_table(docs)
    tfidf = {
        "docs": docs,
        "idf": dict(sorted(idf.items())),
        "doc_weights": [dict(sorted(weights(d, idf).items())) for d in docs],
        "query_weights": {"cheap cheap pizza": dict(sorted(weights("cheap cheap pizza", idf).items()))},
        "cosine": {"cheap pizza": [cosine(weights("cheap pizza", idf), weights(d, idf)) for d in docs]},
    }
    with open("oracle/tfidf_expected.json", "w") as f:
        json.dump(tfidf, f, indent=2, sort_keys=True)
        f.write("\n")

    entities = [json.loads(l) for l in open("restaurants.jsonl") if l.strip()]
    queries = [json.loads(l) for l in open("queries.jsonl") if l.strip()]
    snips = {e["id"]: snippets(e) for e in entities}
    corpus_idf = idf_table([t for e in entities for _, t in snips[e["id"]]])
    out = {"j": 5, "n": 5, "min_rating": MIN_RATING, "plain": {}, "hybrid": {}}
    for q in queries:
        out["plain"][q["id"]] = rank(entities, corpus_idf, snips, q["text"], 5, 5)
        cons = q.get("slot_constraints")
        if cons:
            keep = [e for e in entities
                    if all(
                        (k == "cuisine" and v.lower() in [c.lower() for c in e["cuisines"]])
                        or (k == "area" and (e.get("location") or "").lower() == v.lower())
                        or (k == "price_range" and (e.get("price_range") or "").lower() == v.lower())
                        for k, v in cons.items())]
            out["hybrid"][q["id"]] = rank(keep, corpus_idf, snips, q["text"], 5, 5)
    with open("oracle/ranking_expected.json", "w") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
