"""Brute-force metric computation straight from (prediction, label) pairs."""


def tally(predictions, labels, k):
    counts = [[0] * k for _ in range(k)]
    for p, t in zip(predictions, labels):
        counts[t][p] += 1
    return counts


def brute_force_metrics(predictions, labels, k):
    n = len(labels)
    out = {"accuracy": sum(p == t for p, t in zip(predictions, labels)) / n}
    precision = recall = f1 = 0.0
    for c in range(k):
        tp = sum(1 for p, t in zip(predictions, labels) if p == c and t == c)
        fp = sum(1 for p, t in zip(predictions, labels) if p == c and t != c)
        fn = sum(1 for p, t in zip(predictions, labels) if p != c and t == c)
        support = tp + fn
        pc = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / support if support else 0.0
        fc = 2 * pc * rc / (pc + rc) if pc + rc else 0.0
        precision += support / n * pc
        recall += support / n * rc
        f1 += support / n * fc
    out.update(precision=precision, recall=recall, f1=f1)
    return out
