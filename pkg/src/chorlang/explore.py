"""Exhaustive exploration of a labelled transition system.

Used for both the choreography side and the network side of the
equivalence check.  States are memoised by key, so diamonds created by
independent steps are explored once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Generic, Hashable, Iterable, TypeVar

S = TypeVar("S")
L = TypeVar("L")


class BoundExceeded(Exception):
    def __init__(self, bound: int, reason: str = "") -> None:
        self.bound = bound
        super().__init__(f"exploration exceeded {bound} steps" + (f" ({reason})" if reason else ""))


@dataclass
class Exploration(Generic[L]):
    complete: set[tuple[L, ...]]
    stuck: set[tuple[L, ...]]  # maximal traces ending in a non-final state
    states: int


def explore(
    initial: S,
    successors: Callable[[S], Iterable[tuple[L | None, S]]],
    key: Callable[[S], Hashable],
    is_final: Callable[[S], bool],
    bound: int,
) -> Exploration[L]:
    """Collect every maximal label sequence reachable from ``initial``.

    ``None`` labels are silent.  Any path longer than ``bound`` steps, or any
    cycle, raises :class:`BoundExceeded`.
    """
    memo: dict[Hashable, tuple[frozenset, frozenset, int]] = {}

    def open_frame(state: S, k: Hashable) -> list:
        # state, key, successors, next index, complete, stuck, depth
        return [state, k, list(successors(state)), 0, set(), set(), 0]

    root = key(initial)
    stack = [open_frame(initial, root)]
    on_stack = {root}

    def absorb(frame: list, label, result: tuple[frozenset, frozenset, int]) -> None:
        ok, dead, depth = result
        if label is None:
            frame[4] |= ok
            frame[5] |= dead
        else:
            frame[4].update((label,) + t for t in ok)
            frame[5].update((label,) + t for t in dead)
        frame[6] = max(frame[6], depth + 1)

    while stack:
        frame = stack[-1]
        state, k, succ, i = frame[0], frame[1], frame[2], frame[3]
        if not succ:
            leaf = (frozenset({()}), frozenset(), 0) if is_final(state) else (frozenset(), frozenset({()}), 0)
            result = leaf
        elif i < len(succ):
            frame[3] = i + 1
            label, nxt = succ[i]
            nk = key(nxt)
            hit = memo.get(nk)
            if hit is not None:
                if len(stack) + hit[2] > bound:
                    raise BoundExceeded(bound)
                absorb(frame, label, hit)
                continue
            if nk in on_stack:
                raise BoundExceeded(bound, "the system can run forever")
            if len(stack) >= bound:
                raise BoundExceeded(bound)
            stack.append(open_frame(nxt, nk))
            on_stack.add(nk)
            continue
        else:
            result = (frozenset(frame[4]), frozenset(frame[5]), frame[6])
        memo[k] = result
        stack.pop()
        on_stack.discard(k)
        if stack:
            parent = stack[-1]
            label = parent[2][parent[3] - 1][0]
            absorb(parent, label, result)
        else:
            return Exploration(set(result[0]), set(result[1]), len(memo))
    raise AssertionError("unreachable")
