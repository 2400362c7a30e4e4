"""Compressed SLURM hostlist notation.

``node[01-03,07],gpu-a`` denotes node01, node02, node03, node07 and gpu-a.
Each comma-separated term holds at most one bracket group; the group holds
comma-separated numeric singletons and ``lo-hi`` ranges.  Generated numbers
are zero-padded to the width of the ``lo`` token as written.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass

NAME_CHARS = frozenset(string.ascii_letters + string.digits + "-_.")


class MalformedHostlist(ValueError):
    """A hostlist that does not follow the bracket grammar."""

    def __init__(self, position: int, reason: str, text: str = ""):
        self.position = position
        self.reason = reason
        self.text = text
        super().__init__(f"malformed hostlist {text!r} at position {position}: {reason}")


@dataclass(frozen=True)
class _Range:
    lo_token: str
    lo: int
    hi: int

    def __len__(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class _Term:
    prefix: str
    ranges: tuple[_Range, ...] | None
    suffix: str = ""

    def count(self) -> int:
        if self.ranges is None:
            return 1
        return sum(len(r) for r in self.ranges)

    def names(self):
        if self.ranges is None:
            yield self.prefix
            return
        for r in self.ranges:
            width = len(r.lo_token)
            for value in range(r.lo, r.hi + 1):
                yield f"{self.prefix}{value:0{width}d}{self.suffix}"


def _parse_bracket(text: str, start: int, end: int) -> tuple[_Range, ...]:
    # text[start:end] is the content between '[' and ']'
    ranges = []
    pos = start
    for item in text[start:end].split(","):
        if not item:
            raise MalformedHostlist(pos, "empty range", text)
        lo_tok, dash, hi_tok = item.partition("-")
        for offset, ch in enumerate(item):
            if not (ch.isdigit() and ch.isascii()) and ch != "-":
                raise MalformedHostlist(pos + offset, f"illegal character {ch!r} in range", text)
        if not lo_tok or (dash and not hi_tok):
            raise MalformedHostlist(pos, f"empty range {item!r}", text)
        if "-" in hi_tok:
            raise MalformedHostlist(pos + len(lo_tok) + 1 + hi_tok.index("-"),
                                    f"unsupported range {item!r}", text)
        lo = int(lo_tok)
        hi = int(hi_tok) if dash else lo
        if hi < lo:
            raise MalformedHostlist(pos, f"reversed range {item!r}", text)
        ranges.append(_Range(lo_tok, lo, hi))
        pos += len(item) + 1
    return tuple(ranges)


def _check_name_chars(text: str, start: int, end: int) -> None:
    for i in range(start, end):
        ch = text[i]
        if ch not in NAME_CHARS:
            raise MalformedHostlist(i, f"illegal character {ch!r}", text)


def _parse(text: str) -> list[_Term]:
    if not text:
        raise MalformedHostlist(0, "empty hostlist", text)
    terms = []
    n = len(text)
    pos = 0
    while True:
        start = pos
        open_at = close_at = -1
        while pos < n and text[pos] != ",":
            ch = text[pos]
            if ch == "]":
                raise MalformedHostlist(pos, "unbalanced ']'", text)
            if ch == "[":
                if open_at >= 0:
                    raise MalformedHostlist(pos, "more than one bracket group in term", text)
                open_at = pos
                pos += 1
                while pos < n and text[pos] not in "[]":
                    pos += 1
                if pos >= n:
                    raise MalformedHostlist(open_at, "unbalanced '['", text)
                if text[pos] == "[":
                    raise MalformedHostlist(pos, "nested '['", text)
                close_at = pos
            pos += 1
        if pos == start:
            raise MalformedHostlist(start, "empty term", text)
        if open_at < 0:
            _check_name_chars(text, start, pos)
            terms.append(_Term(text[start:pos], None))
        else:
            _check_name_chars(text, start, open_at)
            _check_name_chars(text, close_at + 1, pos)
            terms.append(_Term(text[start:open_at],
                               _parse_bracket(text, open_at + 1, close_at),
                               text[close_at + 1:pos]))
        if pos >= n:
            return terms
        pos += 1  # separating comma
        if pos >= n:
            raise MalformedHostlist(pos, "empty term", text)


def expand_hostlist(nodelist: str) -> list[str]:
    """Expand a compressed hostlist into hostnames, in written order.

    Duplicates are kept as written.

    >>> expand_hostlist("gpu-a,node[1,3-4]")
    ['gpu-a', 'node1', 'node3', 'node4']
    """
    return [name for term in _parse(nodelist) for name in term.names()]


def hostlist_cardinality(nodelist: str) -> int:
    """Number of names ``expand_hostlist`` would return, without building them."""
    return sum(term.count() for term in _parse(nodelist))


_NUMBERED = re.compile(r"^(.*?)(\d+)$")


def compress_hostlist(names) -> str:
    """Inverse of :func:`expand_hostlist` for a set of names.

    Output is deduplicated and sorted by prefix then numeric suffix; runs are
    only merged when the ``lo`` width reproduces every name in the run.
    """
    literal: list[str] = []
    numbered: dict[str, list[str]] = {}
    for name in dict.fromkeys(names):
        if not name or any(ch not in NAME_CHARS for ch in name):
            raise ValueError(f"cannot compress host name {name!r}")
        match = _NUMBERED.match(name)
        if match:
            numbered.setdefault(match.group(1), []).append(match.group(2))
        else:
            literal.append(name)

    terms = [(name, name) for name in literal]
    for prefix, digit_list in numbered.items():
        digit_list.sort(key=lambda d: (int(d), len(d)))
        items = []
        run_start = prev = digit_list[0]
        for digits in digit_list[1:]:
            width = len(run_start)
            if int(digits) == int(prev) + 1 and f"{int(digits):0{width}d}" == digits:
                prev = digits
                continue
            items.append(run_start if run_start == prev else f"{run_start}-{int(prev):0{len(run_start)}d}")
            run_start = prev = digits
        items.append(run_start if run_start == prev else f"{run_start}-{int(prev):0{len(run_start)}d}")
        if len(items) == 1 and "-" not in items[0]:
            terms.append((prefix + items[0], prefix + items[0]))
        else:
            terms.append((prefix, f"{prefix}[{','.join(items)}]"))
    terms.sort()
    return ",".join(text for _, text in terms)
