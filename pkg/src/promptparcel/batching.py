"""Merging a prompt group into one itemized prompt and parsing the
itemized completion back into per-prompt answers."""

import re
from dataclasses import dataclass, field

from .data import Prompt
from .errors import EmptyGroup, NoAnchorsFound

TEMPLATE_VERSION = "cliqueparcel-v1"
TEMPLATE_PREAMBLE = (
    "Return the answer for each question with their corresponding "
    "numerical itemization."
)

# An anchor is a line whose first non-whitespace characters are an integer
# followed by "." or ")" and then whitespace or end of line. Line-anchored
# on purpose: enumerations inside answer prose stay untouched.
_ANCHOR_RE = re.compile(r"^[ \t]*(\d+)[.)](?=\s|$)", re.MULTILINE)


@dataclass(frozen=True)
class BatchedPrompt:
    text: str
    member_ids: tuple[str, ...]
    template_version: str = TEMPLATE_VERSION


@dataclass
class ParsedAnswers:
    items: list[tuple[int, str]]
    complete: bool
    diagnostics: list[str] = field(default_factory=list)

    def texts_by_index(self) -> dict[int, str]:
        return dict(self.items)


def build_batch(group: list[Prompt]) -> BatchedPrompt:
    """Merge a group into the fixed itemized template:

        Return the answer ... itemization. 1. <p1> 2. <p2> ...

    Items are separated by single spaces; multi-line prompt texts are kept
    verbatim.
    """
    if not group:
        raise EmptyGroup("cannot batch an empty group")
    parts = [TEMPLATE_PREAMBLE]
    for i, prompt in enumerate(group, start=1):
        if not prompt.text:
            raise ValueError(f"prompt {prompt.id!r} has empty text")
        parts.append(f"{i}. {prompt.text}")
    return BatchedPrompt(
        text=" ".join(parts), member_ids=tuple(p.id for p in group)
    )


def contains_anchor_line(text: str) -> bool:
    """True when a prompt's own text would collide with the answer-anchor
    grammar; such prompts are batched anyway but flagged by the harness."""
    return _ANCHOR_RE.search(text) is not None


def parse_itemized(completion_text: str, expected_count: int) -> ParsedAnswers:
    """Split a completion into (index, answer) items along itemization
    anchors.

    Each item runs from just after its anchor to the next anchor, trimmed.
    Text before the first anchor is discarded. Duplicate or backwards
    indices are dropped and reported in ``diagnostics`` along with any
    missing indices; ``complete`` is True only when the kept indices are
    exactly 1..expected_count.
    """
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    matches = list(_ANCHOR_RE.finditer(completion_text))
    if not matches:
        raise NoAnchorsFound("completion contains no itemization anchors")

    items: list[tuple[int, str]] = []
    diagnostics: list[str] = []
    seen: set[int] = set()
    for pos, match in enumerate(matches):
        index = int(match.group(1))
        start = match.end()
        end = matches[pos + 1].start() if pos + 1 < len(matches) else len(completion_text)
        body = completion_text[start:end].strip()
        if index in seen:
            diagnostics.append(f"DuplicateItem({index})")
            continue
        if items and index < items[-1][0]:
            diagnostics.append(f"OutOfOrder({index})")
            continue
        seen.add(index)
        items.append((index, body))

    present = {index for index, _ in items}
    for index in range(1, expected_count + 1):
        if index not in present:
            diagnostics.append(f"MissingItem({index})")
    complete = present == set(range(1, expected_count + 1))
    return ParsedAnswers(items=items, complete=complete, diagnostics=diagnostics)


def split_batched_prompt(batch_text: str) -> list[str] | None:
    """Recover the member prompt texts from a batched prompt built by
    ``build_batch``, or None when the text is not in template form.

    Items are located by searching for the next sequential " k. " marker,
    so member texts that themselves contain such markers can confuse the
    split; ``contains_anchor_line`` flags the risky ones up front.
    """
    if not batch_text.startswith(TEMPLATE_PREAMBLE):
        return None
    rest = batch_text[len(TEMPLATE_PREAMBLE):]
    members: list[str] = []
    cursor = 0
    index = 1
    marker = re.compile(rf"(?:^|\s){index}\.\s")
    first = marker.search(rest)
    if not first:
        return None
    cursor = first.end()
    while True:
        index += 1
        nxt = re.compile(rf"(?:^|\s){index}\.\s").search(rest, cursor)
        if nxt is None:
            members.append(rest[cursor:].strip())
            break
        members.append(rest[cursor : nxt.start()].strip())
        cursor = nxt.end()
    return members
