#!/usr/bin/env python3
"""Reference oracle for the evaluation metrics.

Independently implements corpus BLEU (Papineni et al. 2002: clipped
multi-reference precisions, geometric mean over n<=4, closest-reference
brevity penalty, no smoothing) and NIST (Doddington 2002 / mteval-v13a:
reference-corpus information weights, n<=5, NIST length penalty) and writes
golden scores for the frozen corpora under tests/golden/. Run once from the
repository root:

    python3 tools/metric_oracle.py
"""

import collections
import json
import math
import os


def ngrams(toks, n):
    return [tuple(toks[i : i + n]) for i in range(len(toks) - n + 1)]


def corpus_bleu(pairs, max_n=4):
    matched = [0] * max_n
    total = [0] * max_n
    c = 0
    r = 0
    for hyp, refs in pairs:
        c += len(hyp)
        r += min((len(rf) for rf in refs), key=lambda L: (abs(L - len(hyp)), L))
        for n in range(1, max_n + 1):
            hyp_counts = collections.Counter(ngrams(hyp, n))
            ref_max = collections.Counter()
            for rf in refs:
                for gram, k in collections.Counter(ngrams(rf, n)).items():
                    ref_max[gram] = max(ref_max[gram], k)
            for gram, k in hyp_counts.items():
                total[n - 1] += k
                matched[n - 1] += min(k, ref_max.get(gram, 0))
    if any(m == 0 or t == 0 for m, t in zip(matched, total)):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(log_p)


def corpus_nist(pairs, max_n=5):
    counts = collections.Counter()
    total_unigrams = 0
    for _, refs in pairs:
        for rf in refs:
            total_unigrams += len(rf)
            for n in range(1, max_n + 1):
                counts.update(ngrams(rf, n))

    def info(gram):
        numer = total_unigrams if len(gram) == 1 else counts[gram[:-1]]
        return math.log2(numer / counts[gram])

    weighted = [0.0] * max_n
    total = [0] * max_n
    sys_len = 0.0
    ref_len = 0.0
    for hyp, refs in pairs:
        sys_len += len(hyp)
        ref_len += sum(len(rf) for rf in refs) / len(refs)
        for n in range(1, max_n + 1):
            hyp_counts = collections.Counter(ngrams(hyp, n))
            ref_max = collections.Counter()
            for rf in refs:
                for gram, k in collections.Counter(ngrams(rf, n)).items():
                    ref_max[gram] = max(ref_max[gram], k)
            for gram, k in hyp_counts.items():
                total[n - 1] += k
                if ref_max.get(gram, 0) > 0:
                    weighted[n - 1] += info(gram) * min(k, ref_max[gram])
    score = sum(w / t for w, t in zip(weighted, total) if t > 0)
    if sys_len <= 0 or ref_len <= 0:
        return 0.0
    beta = math.log(0.5) / math.log(1.5) ** 2
    ratio = min(1.0, sys_len / ref_len)
    penalty = math.exp(beta * math.log(ratio) ** 2)
    return score * penalty


def main():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    cases_path = os.path.join(root, "tests", "golden", "metrics_cases.json")
    golden_path = os.path.join(root, "tests", "golden", "metrics_golden.json")
    with open(cases_path) as f:
        cases = json.load(f)
    golden = {}
    for name, case in cases.items():
        pairs = [(rec["hyp"], rec["refs"]) for rec in case]
        golden[name] = {
            "bleu": corpus_bleu(pairs),
            "nist": corpus_nist(pairs),
        }
        print(f"{name}: BLEU {golden[name]['bleu']:.6f}  NIST {golden[name]['nist']:.6f}")
    with open(golden_path, "w") as f:
        json.dump(golden, f, indent=2)
        f.write("\n")
    print(f"wrote {golden_path}")


if __name__ == "__main__":
    main()
