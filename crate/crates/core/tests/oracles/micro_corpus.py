"""Independent oracle for the 3-document BM25 / Dirichlet / TF-IDF fixture.

Re-implements two-end bigram shingling from scratch and evaluates the
scoring formulas directly. Values printed here are frozen into
tests/acceptance.rs (criterion 5) and src/ranking.rs unit tests.
"""
import math

def grams(word, k):
    padded = [None] * (k - 1) + list(word) + [None] * (k - 1)
    out = []
    for i in range(len(padded) - k + 1):
        g = "".join(c for c in padded[i:i + k] if c is not None)
        out.append(g)
    return out

def two_end(word, k=2):
    gs = grams(word, k)
    m = len(gs)
    toks = []
    for i, g in enumerate(gs, 1):
        j = m - i + 1
        toks.append(f"{g}{j}" if i > j else f"{i}{g}")
    seen = []
    for t in toks:
        if t not in seen:
            seen.append(t)
    return seen

docs = ["rosmarin", "romarin", "marin"]
sets = [two_end(d) for d in docs]
N = len(docs)
df = {}
for s in sets:
    for t in s:
        df[t] = df.get(t, 0) + 1
cf = dict(df)
total_cf = sum(cf.values())
vocab = len(cf)
avgdl = sum(len(s) for s in sets) / N

def bm25(q, d, k1=1.2, b=0.75):
    tot = 0.0
    for t in q:
        if t in d:
            idf = math.log(1 + (N - df[t] + 0.5) / (df[t] + 0.5))
            tot += idf * (k1 + 1) / (1 + k1 * (1 - b + b * len(d) / avgdl))
    return tot

def dirichlet(q, d, mu=10.0):
    tot = len(q) * math.log(mu / (mu + len(d)))
    for t in q:
        if t in d:
            p = (cf.get(t, 0) + 1) / (total_cf + vocab + 1)
            tot += math.log(1 + 1 / (mu * p))
    return tot

def tfidf(q, d):
    return sum(math.log(1 + N / df[t]) for t in q if t in d)

print("sets", sets)
print("N", N, "total_cf", total_cf, "vocab", vocab, "avgdl", avgdl)
for qw in ["rosmarin", "marin"]:
    q = two_end(qw)
    for dw, d in zip(docs, sets):
        print(f"{qw}->{dw} bm25={bm25(q, d)!r} dirichlet={dirichlet(q, d)!r} tfidf={tfidf(q, d)!r}")
