"""Edit distance and character error rate."""

from typing import Sequence

from ..errors import UndefinedRateError


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum number of insertions, deletions and substitutions turning ``a`` into ``b``."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(pred: Sequence, truth: Sequence) -> float:
    if len(truth) == 0:
        raise UndefinedRateError("character error rate is undefined for an empty ground truth")
    return levenshtein(pred, truth) / len(truth)
