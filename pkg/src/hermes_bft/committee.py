"""Impetus committee selection and failure-probability analysis.

Selection is a pure function of ``(run_seed, trial, n, c)``: a SHA-256
counter stream supplies 64-bit words and indices are drawn by rejection
sampling, so every node (and every implementation) picks the same committee
and primary for a given trial.

All probabilities are exact :class:`fractions.Fraction` values built from
big-integer binomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
import hashlib


class BadParams(ValueError):
    pass


class Unsatisfiable(ValueError):
    pass


@dataclass(frozen=True)
class CommitteeAssignment:
    trial: int
    members: frozenset
    primary: int

    def __post_init__(self):
        if self.primary in self.members:
            raise ValueError("primary must not be a committee member")

    @property
    def c(self) -> int:
        return len(self.members)

    def regulars(self, n: int) -> tuple[int, ...]:
        """Nodes that are neither committee members nor the primary."""
        return tuple(i for i in range(n)
                     if i not in self.members and i != self.primary)


class _WordStream:
    def __init__(self, run_seed: bytes, trial: int):
        self._prefix = run_seed + trial.to_bytes(8, "big")
        self._counter = 0
        self._words: list[int] = []

    def next_word(self) -> int:
        if not self._words:
            block = hashlib.sha256(
                self._prefix + self._counter.to_bytes(8, "big")).digest()
            self._counter += 1
            self._words = [int.from_bytes(block[k:k + 8], "big")
                           for k in range(24, -8, -8)]
        return self._words.pop()

    def below(self, m: int) -> int:
        """Uniform integer in [0, m) without modulo bias."""
        limit = (1 << 64) - ((1 << 64) % m)
        while True:
            w = self.next_word()
            if w < limit:
                return w % m


def select_committee(run_seed: bytes, trial: int, n: int,
                     c: int) -> CommitteeAssignment:
    if not (1 <= c <= n - 1):
        raise BadParams(f"need 1 <= c <= n-1, got n={n} c={c}")
    if trial < 0:
        raise BadParams("trial must be non-negative")
    stream = _WordStream(run_seed, trial)
    ids = list(range(n))
    # partial Fisher-Yates: the first c slots become the committee
    for i in range(c):
        j = i + stream.below(n - i)
        ids[i], ids[j] = ids[j], ids[i]
    rest = sorted(ids[c:])
    primary = rest[stream.below(len(rest))]
    return CommitteeAssignment(trial, frozenset(ids[:c]), primary)


# -- probabilities --------------------------------------------------------------

def _check(n: int, f: int, c: int, *, need_c_below_n: bool = False):
    if n < 1 or not (0 <= f < n) or not (1 <= c <= n):
        raise BadParams(f"invalid (n={n}, f={f}, c={c})")
    if need_c_below_n and c >= n:
        raise BadParams("c must be smaller than n")


def _binom(x: int, k: int) -> int:
    return comb(x, k) if 0 <= k <= x else 0


def faulty_count_pmf(n: int, f: int, c: int, b: int) -> Fraction:
    """P(exactly ``b`` faulty nodes in a uniformly drawn committee of c)."""
    return Fraction(_binom(n - f, c - b) * _binom(f, b), comb(n, c))


def p_f(n: int, f: int, c: int) -> Fraction:
    """Probability that at least half of the committee is faulty."""
    _check(n, f, c)
    lo = (c + 1) // 2  # ceil(c/2)
    num = sum(_binom(n - f, c - b) * _binom(f, b) for b in range(lo, c + 1))
    return Fraction(num, comb(n, c))


def p_total_failure(n: int, f: int, c: int) -> Fraction:
    """Probability that the committee contains no correct node."""
    _check(n, f, c)
    return Fraction(_binom(f, c), comb(n, c))


def p_v_bound(n: int, f: int, c: int) -> Fraction:
    """Upper bound on the probability that a view ends in a view change."""
    _check(n, f, c, need_c_below_n=True)
    pf = p_f(n, f, c)
    return Fraction(n, 3 * (n - c)) * (1 - pf) + pf


def p_equivocation(n: int, f: int, c: int) -> Fraction:
    """Probability that the primary and a committee quorum are all faulty.

    The primary is drawn from the ``n - c`` non-members, so given ``b``
    faulty members it is faulty with probability ``(f - b) / (n - c)``.
    """
    _check(n, f, c, need_c_below_n=True)
    q = c // 2 + 1
    total = Fraction(0)
    for b in range(q, min(c, f) + 1):
        total += faulty_count_pmf(n, f, c, b) * Fraction(f - b, n - c)
    return total


CRITERIA = {
    "p_f": p_f,
    "total_failure": p_total_failure,
}


def min_c_for_target(n: int, f: int, target, criterion: str = "p_f") -> int:
    target = Fraction(target)
    if not (0 < target <= 1):
        raise BadParams("target must lie in (0, 1]")
    fn = CRITERIA[criterion]
    for c in range(1, n):
        if fn(n, f, c) <= target:
            return c
    raise Unsatisfiable(f"no c < {n} reaches {criterion} <= {target}")


@dataclass(frozen=True)
class ProbabilityReport:
    n: int
    f: int
    c: int
    p_f: Fraction
    p_total_failure: Fraction
    p_v_bound: Fraction
    p_equivocation: Fraction


def report(n: int, f: int, c: int) -> ProbabilityReport:
    return ProbabilityReport(n, f, c, p_f(n, f, c), p_total_failure(n, f, c),
                             p_v_bound(n, f, c), p_equivocation(n, f, c))
