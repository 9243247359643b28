"""Session-state value trees: canonical JSON codec, equivalence, diff and patch.

A state node is one of: None, bool, int/float (finite), str, a Sequence
(plain list), a Mapping (plain dict with string keys), or a DynamicStateList
(an ordered list of DynamicState entries describing dynamically created
objects). Values are treated as immutable; every API hands out fresh copies.

Diffs are themselves plain JSON trees that can double as partial session
states. See docs/diff-format.md for the encoding; the short version:

* ``{}`` is the empty diff and applies as a no-op to any base.
* A Mapping whose sole key is ``"__value__"`` replaces the base wholesale.
* Any other Mapping is a key-wise merge; ``{"__removed__": true}`` deletes
  a key.
* Scalars and Sequences replace bare.
* A list of entry-shaped objects edits a DynamicStateList entry-wise, with
  ``{"objectName": n, "__removed__": true}`` removal markers and an optional
  trailing ``{"__order__": [...]}`` flag.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterator

from .errors import ParseError

log = logging.getLogger(__name__)

StateNode = Any
"""A session-state value; see the module docstring for the closed set of shapes."""

OBJECT_NAME_KEY = "objectName"
CLASS_NAME_KEY = "className"
SESSION_STATE_KEY = "sessionState"
RESERVED_ENTRY_KEYS = frozenset((OBJECT_NAME_KEY, CLASS_NAME_KEY, SESSION_STATE_KEY))

REMOVED_MARKER = "__removed__"
ORDER_MARKER = "__order__"
VALUE_MARKER = "__value__"


@dataclass
class DynamicState:
    """One entry of a DynamicStateList.

    ``session_state is None`` together with an empty ``class_name`` means the
    entry is a by-name reference to a globally registered object and carries
    no inline state.
    """

    object_name: str = ""
    class_name: str = ""
    session_state: StateNode = None


class DynamicStateList(list):
    """Ordered list of DynamicState entries; non-empty names must be unique."""

    def __init__(self, entries: Any = ()):
        entries = list(entries)
        for e in entries:
            if not isinstance(e, DynamicState):
                raise TypeError(f"DynamicStateList entries must be DynamicState, got {type(e).__name__}")
        names = [e.object_name for e in entries if e.object_name]
        if len(names) != len(set(names)):
            raise ValueError("duplicate entry names in DynamicStateList")
        super().__init__(entries)


def validate_node(node: StateNode) -> None:
    """Raise TypeError/ValueError if node is not a well-formed state tree.

    Numbers must be finite (NaN/Inf have no JSON encoding here), mapping keys
    must be strings, and non-empty entry names in a DynamicStateList unique.
    """
    if node is None or isinstance(node, (bool, str, int)):
        return
    if isinstance(node, float):
        if not math.isfinite(node):
            raise ValueError(f"non-finite number in state tree: {node!r}")
        return
    if isinstance(node, DynamicStateList):
        names = set()
        for e in node:
            if not isinstance(e, DynamicState):
                raise TypeError("DynamicStateList entry is not a DynamicState")
            if not isinstance(e.object_name, str) or not isinstance(e.class_name, str):
                raise TypeError("DynamicState names must be strings")
            if e.object_name:
                if e.object_name in names:
                    raise ValueError(f"duplicate entry name {e.object_name!r}")
                names.add(e.object_name)
            if e.session_state is not None:
                validate_node(e.session_state)
        return
    if isinstance(node, list):
        for item in node:
            validate_node(item)
        return
    if isinstance(node, dict):
        for k, v in node.items():
            if not isinstance(k, str):
                raise TypeError(f"mapping key must be str, got {type(k).__name__}")
            validate_node(v)
        return
    raise TypeError(f"not a state node: {type(node).__name__}")


def _canonical_number(x):
    # Integral floats encode as integers so 5.0 and 5 are one canonical value.
    if isinstance(x, float) and x.is_integer():
        return int(x)
    return x


def to_plain(node: StateNode) -> Any:
    """Convert to plain JSON-ready data. DynamicState entries become the
    three-key wire form with keys in reserved order."""
    if isinstance(node, bool) or node is None or isinstance(node, str):
        return node
    if isinstance(node, (int, float)):
        return _canonical_number(node)
    if isinstance(node, DynamicStateList):
        return [
            {
                OBJECT_NAME_KEY: e.object_name,
                CLASS_NAME_KEY: e.class_name,
                SESSION_STATE_KEY: to_plain(e.session_state),
            }
            for e in node
        ]
    if isinstance(node, list):
        return [to_plain(x) for x in node]
    if isinstance(node, dict):
        return {k: to_plain(v) for k, v in node.items()}
    if isinstance(node, DynamicState):
        raise TypeError("a bare DynamicState is not a state node; wrap it in a DynamicStateList")
    raise TypeError(f"not a state node: {type(node).__name__}")


def _entry_shaped(obj: Any) -> bool:
    return (
        isinstance(obj, dict)
        and set(obj) <= RESERVED_ENTRY_KEYS
        and (OBJECT_NAME_KEY in obj or CLASS_NAME_KEY in obj)
        and isinstance(obj.get(OBJECT_NAME_KEY, ""), str)
        and isinstance(obj.get(CLASS_NAME_KEY, ""), str)
    )


def _is_entry_list(obj: Any) -> bool:
    # Non-empty: an empty array cannot be told apart from an empty Sequence,
    # so it decodes as a Sequence and the two compare as equivalent.
    return isinstance(obj, list) and bool(obj) and all(_entry_shaped(x) for x in obj)


def from_plain(obj: Any) -> StateNode:
    """Convert plain JSON data to a state node, detecting DynamicStateLists.

    An array becomes a DynamicStateList iff it is non-empty and every element
    is an object whose keys are a subset of the reserved entry keys and
    include objectName or className.
    """
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, float)):
        return _canonical_number(obj)
    if isinstance(obj, list):
        if _is_entry_list(obj):
            return DynamicStateList(
                DynamicState(
                    object_name=e.get(OBJECT_NAME_KEY, ""),
                    class_name=e.get(CLASS_NAME_KEY, ""),
                    session_state=from_plain(e[SESSION_STATE_KEY]) if SESSION_STATE_KEY in e else None,
                )
                for e in obj
            )
        return [from_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: from_plain(v) for k, v in obj.items()}
    raise TypeError(f"not JSON data: {type(obj).__name__}")


def _reject_constant(name: str):
    raise ValueError(f"non-finite number literal in JSON: {name}")


def encode(node: StateNode) -> str:
    """Canonical compact JSON encoding. Key order is preserved (it is part of
    the state), entries always carry all three reserved keys, and integral
    floats are written as integers."""
    validate_node(node)
    return json.dumps(to_plain(node), ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def decode(text: str) -> StateNode:
    """Inverse of encode. Raises ParseError on malformed JSON and ValueError
    on NaN/Infinity literals."""
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e}") from e
    return from_plain(data)


def encode_diff(d: Any) -> str:
    """Canonical compact encoding of a diff tree (diffs are plain JSON)."""
    return json.dumps(d, ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def decode_diff(text: str) -> Any:
    """Parse a diff tree. Markers are kept verbatim; no entry typing happens."""
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e}") from e


# --- equivalence --------------------------------------------------------------

def state_equivalent(a: StateNode, b: StateNode) -> bool:
    """Structural equivalence: Mapping key order is ignored, entry order in a
    DynamicStateList is significant, numbers compare exactly (but 5 == 5.0),
    and bool never equals a number."""
    return _plain_equivalent(to_plain(a), to_plain(b))


def _plain_equivalent(a: Any, b: Any) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_plain_equivalent(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return set(a) == set(b) and all(_plain_equivalent(v, b[k]) for k, v in a.items())
    return False


# --- diff ---------------------------------------------------------------------

def is_empty_diff(d: Any) -> bool:
    return d == {}


def diff(old: StateNode, new: StateNode) -> Any:
    """Compute a diff tree such that apply_diff(old, diff(old, new))
    is equivalent to new. diff(a, a) is {} for any a."""
    return _diff_plain(to_plain(old), to_plain(new))


def _replacement(v: Any) -> Any:
    if isinstance(v, dict):
        return {VALUE_MARKER: v}
    return v


def _diff_plain(a: Any, b: Any) -> Any:
    if _plain_equivalent(a, b):
        return {}
    if isinstance(a, dict) and isinstance(b, dict):
        out: dict = {}
        for k in a:
            if k not in b:
                out[k] = {REMOVED_MARKER: True}
        for k, v in b.items():
            if k in a:
                sub = _diff_plain(a[k], v)
                if sub != {}:
                    out[k] = sub
            else:
                out[k] = _replacement(v)
        return out
    if _is_entry_list(a) and (_is_entry_list(b) or b == []):
        return _diff_entry_list(a, b)
    return _replacement(b)


def _diff_entry_list(a: list, b: list) -> list:
    # Named entries match by name; the k-th anonymous entry of a matches the
    # k-th anonymous entry of b. Removal markers come first (targeting the
    # tail anonymous slots), then one item per new entry in new order.
    a_names = {}
    a_anon = []
    for i, e in enumerate(a):
        n = e.get(OBJECT_NAME_KEY, "")
        if n:
            a_names[n] = i
        else:
            a_anon.append(i)

    matched_a = set()
    partners = []  # index into a (or None) for each entry of b
    anon_used = 0
    for e in b:
        n = e.get(OBJECT_NAME_KEY, "")
        if n:
            p = a_names.get(n)
        elif anon_used < len(a_anon):
            p = a_anon[anon_used]
            anon_used += 1
        else:
            p = None
        partners.append(p)
        if p is not None:
            matched_a.add(p)

    out: list = []
    for i, e in enumerate(a):
        if i not in matched_a:
            out.append({OBJECT_NAME_KEY: e.get(OBJECT_NAME_KEY, ""), REMOVED_MARKER: True})

    for e, p in zip(b, partners):
        n = e.get(OBJECT_NAME_KEY, "")
        cls = e.get(CLASS_NAME_KEY, "")
        st = e.get(SESSION_STATE_KEY)
        if p is not None and cls == "" and a[p].get(CLASS_NAME_KEY, "") != "":
            # Demotion to a by-name reference. A bare reference entry reads as
            # a mention on an existing target, so tombstone the old one first.
            out.append({OBJECT_NAME_KEY: n, REMOVED_MARKER: True})
            out.append({OBJECT_NAME_KEY: n, CLASS_NAME_KEY: "", SESSION_STATE_KEY: st})
            continue
        if p is None or a[p].get(CLASS_NAME_KEY, "") != cls:
            # Created or recreated under a different class: full entry.
            out.append({OBJECT_NAME_KEY: n, CLASS_NAME_KEY: cls, SESSION_STATE_KEY: st})
            continue
        sub = _diff_plain(a[p].get(SESSION_STATE_KEY), st)
        if sub == {}:
            out.append({OBJECT_NAME_KEY: n})
        else:
            out.append({OBJECT_NAME_KEY: n, CLASS_NAME_KEY: cls, SESSION_STATE_KEY: sub})

    old_surviving = [a[i].get(OBJECT_NAME_KEY, "") for i in sorted(matched_a)]
    new_surviving = [e.get(OBJECT_NAME_KEY, "") for e, p in zip(b, partners) if p is not None]
    # The marker is name-based, so it can only be written when every entry is
    # named; anonymous order is carried by mention order alone.
    if old_surviving != new_surviving and all(e.get(OBJECT_NAME_KEY, "") for e in b):
        out.append({ORDER_MARKER: [e[OBJECT_NAME_KEY] for e in b]})
    return out


# --- apply --------------------------------------------------------------------

def apply_diff(base: StateNode, d: Any, remove_missing: bool = False) -> StateNode:
    """Apply a diff (or any partial session state) to a value, returning a
    fresh value. remove_missing controls whether DynamicStateList entries not
    mentioned by the diff are dropped (True) or retained (False); explicit
    removal markers are honored either way."""
    return from_plain(_apply_plain(to_plain(base), to_plain(d), remove_missing))


def _is_removal(v: Any) -> bool:
    return isinstance(v, dict) and v.get(REMOVED_MARKER) is True


def _entry_diff_item(x: Any) -> bool:
    if not isinstance(x, dict):
        return False
    if ORDER_MARKER in x:
        return set(x) == {ORDER_MARKER}
    return (
        set(x) <= RESERVED_ENTRY_KEYS | {REMOVED_MARKER}
        and (OBJECT_NAME_KEY in x or CLASS_NAME_KEY in x)
        and isinstance(x.get(OBJECT_NAME_KEY, ""), str)
        and isinstance(x.get(CLASS_NAME_KEY, ""), str)
    )


def _is_entry_diff(d: Any) -> bool:
    return isinstance(d, list) and bool(d) and all(_entry_diff_item(x) for x in d)


def _materialize(d: Any) -> Any:
    """Read a diff node as a full value (used where the base has nothing to
    merge into). Removal markers vanish; order markers are dropped."""
    if isinstance(d, dict):
        if set(d) == {VALUE_MARKER}:
            return copy.deepcopy(d[VALUE_MARKER])
        return {k: _materialize(v) for k, v in d.items() if not _is_removal(v)}
    if isinstance(d, list):
        if _is_entry_diff(d):
            out = []
            for item in d:
                if ORDER_MARKER in item or item.get(REMOVED_MARKER) is True:
                    continue
                out.append(
                    {
                        OBJECT_NAME_KEY: item.get(OBJECT_NAME_KEY, ""),
                        CLASS_NAME_KEY: item.get(CLASS_NAME_KEY, ""),
                        SESSION_STATE_KEY: _materialize(item[SESSION_STATE_KEY])
                        if SESSION_STATE_KEY in item
                        else None,
                    }
                )
            return out
        return [copy.deepcopy(x) for x in d]
    return d


def _apply_plain(base: Any, d: Any, remove_missing: bool) -> Any:
    if isinstance(d, dict):
        if not d:
            return copy.deepcopy(base)
        if set(d) == {VALUE_MARKER}:
            return copy.deepcopy(d[VALUE_MARKER])
        if isinstance(base, dict):
            out = dict(copy.deepcopy(base))
            for k, sub in d.items():
                if _is_removal(sub):
                    out.pop(k, None)
                elif k in out:
                    out[k] = _apply_plain(out[k], sub, remove_missing)
                else:
                    out[k] = _materialize(sub)
            return out
        # Mismatched site: the merge has nothing to merge into.
        return _materialize(d)
    if isinstance(d, list):
        if _is_entry_diff(d) and (_is_entry_list(base) or base == []):
            return _apply_entry_diff(base if isinstance(base, list) else [], d, remove_missing)
        if d == [] and _is_entry_list(base):
            # Empty full state over dynamic entries: the flag decides whether
            # the unmentioned entries survive, same as the live containers.
            return [] if remove_missing else copy.deepcopy(base)
        return _materialize(d)
    return d


@dataclass
class EntryItem:
    """Normalized form of one DynamicStateList diff/state item."""

    name: str = ""
    removed: bool = False
    has_class_key: bool = False
    class_name: str = ""
    has_state: bool = False
    state: Any = None


def normalize_entry_items(state: Any) -> tuple[list[EntryItem], list | None]:
    """Normalize a DynamicStateList-shaped state or diff into items plus an
    optional order marker. Accepts typed values (DynamicStateList entries)
    and raw wire dicts alike; non-items are skipped with a diagnostic.

    A reference-shaped item (empty className, null/absent state) counts as a
    pure mention: has_state is False so nothing gets applied over the target.
    """
    plain = to_plain(state)
    if not isinstance(plain, list):
        raise TypeError(f"not a dynamic entry list: {type(state).__name__}")
    items: list[EntryItem] = []
    order: list | None = None
    for x in plain:
        if not isinstance(x, dict):
            log.warning("ignoring non-object item in dynamic state list: %r", x)
            continue
        if ORDER_MARKER in x:
            o = x[ORDER_MARKER]
            if isinstance(o, list) and all(isinstance(n, str) for n in o):
                order = o
            else:
                log.warning("ignoring malformed order marker: %r", x)
            continue
        name = x.get(OBJECT_NAME_KEY, "")
        if not isinstance(name, str):
            log.warning("ignoring entry with non-string name: %r", x)
            continue
        if x.get(REMOVED_MARKER) is True:
            items.append(EntryItem(name=name, removed=True))
            continue
        cls = x.get(CLASS_NAME_KEY, "")
        if not isinstance(cls, str):
            log.warning("ignoring entry with non-string class: %r", x)
            continue
        has_class_key = CLASS_NAME_KEY in x
        has_state_key = SESSION_STATE_KEY in x
        st = x.get(SESSION_STATE_KEY)
        reference_shaped = cls == "" and st is None
        items.append(
            EntryItem(
                name=name,
                has_class_key=has_class_key,
                class_name=cls,
                has_state=has_state_key and not reference_shaped,
                state=st,
            )
        )
    return items, order


def _apply_entry_diff(base: list, d: list, remove_missing: bool) -> list:
    items, order = normalize_entry_items(d)

    entries = [
        [e.get(OBJECT_NAME_KEY, ""), e.get(CLASS_NAME_KEY, ""), copy.deepcopy(e.get(SESSION_STATE_KEY))]
        for e in base
    ]
    by_name = {e[0]: i for i, e in enumerate(entries) if e[0]}
    anon_slots = [i for i, e in enumerate(entries) if not e[0]]
    # Anonymous mentions claim the leading slots, anonymous removals the tail.
    n_anon_mentions = sum(1 for it in items if not it.name and not it.removed)

    removed_idx: set[int] = set()
    mentioned: list[int] = []  # entry indices in mention order
    created: list[list] = []
    anon_mention_i = 0
    anon_removed_i = 0

    for it in items:
        if it.removed:
            if it.name:
                t = by_name.get(it.name)
            else:
                slot = n_anon_mentions + anon_removed_i
                anon_removed_i += 1
                t = anon_slots[slot] if slot < len(anon_slots) else None
            if t is not None:
                removed_idx.add(t)
            continue
        if it.name:
            t = by_name.get(it.name)
            if t is not None and t in removed_idx:
                t = None  # removal earlier in this diff tombstones the name
        else:
            t = anon_slots[anon_mention_i] if anon_mention_i < len(anon_slots) else None
            anon_mention_i += 1
        if t is None:
            # Creation needs the className key (possibly empty: a reference
            # entry). A bare mention of an unknown entry is skipped.
            if it.has_class_key:
                created.append([it.name, it.class_name, _materialize(it.state) if it.has_state else None])
                mentioned.append(len(entries) + len(created) - 1)
            continue
        if it.has_class_key and it.class_name and it.class_name != entries[t][1]:
            entries[t] = [it.name, it.class_name, _materialize(it.state) if it.has_state else None]
        elif it.has_state:
            entries[t][2] = _apply_plain(entries[t][2], it.state, remove_missing)
        if t not in mentioned:
            mentioned.append(t)

    all_entries = entries + created
    survivors = [i for i in range(len(all_entries)) if i not in removed_idx]
    mentioned_set = set(mentioned)

    if order is not None:
        by_final_name = {all_entries[i][0]: i for i in survivors if all_entries[i][0]}
        head = [by_final_name[n] for n in order if n in by_final_name]
        final = head + [i for i in survivors if i not in set(head)]
    else:
        final = [i for i in mentioned if i in set(survivors)]
        final += [i for i in survivors if i not in mentioned_set]

    if remove_missing:
        final = [i for i in final if i in mentioned_set]

    return [
        {OBJECT_NAME_KEY: all_entries[i][0], CLASS_NAME_KEY: all_entries[i][1], SESSION_STATE_KEY: all_entries[i][2]}
        for i in final
    ]
