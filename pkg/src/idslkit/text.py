"""Natural-language scene descriptions to a rough initial IDSL scene.

The rules backend runs four stages:

* ``extract_entities`` finds room and object mentions with a shipped
  lexicon (room types, 151 object categories, attribute keywords);
* ``extract_relations`` maps phrase patterns ("next to", "against the
  wall", "facing", "on", "in the ...") to relation edges;
* ``build_graph`` attaches every object to a room and resolves wall
  targets, reporting ambiguities instead of guessing;
* ``graph_to_idsl`` lays rooms out as default rectangles and parks every
  object at its room centroid.  Placement is the optimizer's job.

The LLM backend replaces the first three stages with one structured
chat-completion request and then goes through the same normalisation.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Sequence

import httpx
import jsonschema
import numpy as np

from . import geometry as geo
from .idsl import (
    RELATION_TYPES,
    BuildingSpec,
    Connectivity,
    RelationSpec,
    RoomRelation,
    SceneState,
    make_object,
    make_room,
)
from .styles import known_styles

log = logging.getLogger(__name__)

ROOM = "room"
OBJECT = "object"
GENERIC_ROOM = "room"
BACK_FACE = 5
FRONT_FACE = 4
# walls handed out in turn to StableAgainst edges that name no wall
WALL_CYCLE = (3, 4, 2, 1)


class TextParseError(ValueError):
    pass


class LlmTransportError(RuntimeError):
    """Network failure, timeout or non-success HTTP status."""


class LlmResponseError(ValueError):
    """The endpoint answered but the payload is not a valid scene graph."""


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


def _load(name: str) -> dict:
    return json.loads(resources.files("idslkit").joinpath("data", name).read_text())


_IRREGULAR = {"safe": "safes", "tooth": "teeth", "person": "people"}


def pluralize(phrase: str) -> str:
    head, _, last = phrase.rpartition(" ")
    if last in _IRREGULAR:
        p = _IRREGULAR[last]
    elif last.endswith(("s", "x", "z", "ch", "sh")):
        p = last + "es"
    elif last.endswith("y") and last[-2:-1] not in ("a", "e", "i", "o", "u"):
        p = last[:-1] + "ies"
    elif last.endswith("fe"):
        p = last[:-2] + "ves"
    elif last.endswith("f"):
        p = last[:-1] + "ves"
    else:
        p = last + "s"
    return f"{head} {p}" if head else p


def _alternation(words) -> str:
    return "|".join(re.escape(w) for w in sorted(set(words), key=lambda w: (-len(w), w)))


@dataclass(frozen=True)
class Lexicon:
    categories: dict  # name -> {"size": [w, d, h], "wall": bool}
    fallback: tuple[str, tuple[float, float, float]]
    room_sizes: dict  # type -> (w, d)
    forms: dict  # surface -> (kind, canonical, plural)
    numbers: dict
    relations: dict  # phrase -> relation type
    containment: tuple[str, ...]
    room_has: tuple[str, ...]
    pronouns: tuple[str, ...]
    walls: dict
    attributes: tuple[str, ...]
    styles: tuple[str, ...]

    def category(self, surface: str) -> str | None:
        hit = self.forms.get(surface.strip().lower().replace("_", " "))
        if hit and hit[0] == OBJECT:
            return hit[1]
        return surface if surface in self.categories else None

    def room_type(self, surface: str) -> str | None:
        s = surface.strip().lower()
        if s in self.room_sizes:
            return s
        hit = self.forms.get(s.replace("-", " ").replace("_", " "))
        return hit[1] if hit and hit[0] == ROOM else None


@lru_cache(maxsize=1)
def lexicon() -> Lexicon:
    cats = _load("categories.json")
    rooms = _load("rooms.json")
    pat = _load("text_patterns.json")
    forms: dict[str, tuple[str, str, bool]] = {}
    singular: list[tuple[str, str, str]] = []
    # rooms first so that a shared surface form ("study", "closet") names the room
    for rtype, spec in rooms.items():
        for s in (rtype, rtype.replace("-", " "), *spec["aliases"]):
            singular.append((s.lower(), ROOM, rtype))
    for name, spec in cats["categories"].items():
        for s in (name.replace("_", " "), *spec["aliases"]):
            singular.append((s.lower(), OBJECT, name))
    for s, kind, canon in singular:
        forms.setdefault(s, (kind, canon, False))
    for s, kind, canon in singular:
        forms.setdefault(pluralize(s), (kind, canon, True))
    attrs = [w for group in pat["attributes"].values() for w in group]
    fb = cats["fallback"]
    return Lexicon(
        categories=cats["categories"],
        fallback=(fb["category"], tuple(fb["size"])),
        room_sizes={k: tuple(v["size"]) for k, v in rooms.items()},
        forms=forms,
        numbers=pat["numbers"],
        relations=dict(pat["relations"]),
        containment=tuple(pat["containment"]),
        room_has=tuple(pat["room_has"]),
        pronouns=tuple(pat["pronouns"]),
        walls=pat["walls"],
        attributes=tuple(attrs),
        styles=tuple(sorted(known_styles())),
    )


@dataclass(frozen=True)
class _Patterns:
    noun: re.Pattern
    prefix: re.Pattern
    wall: re.Pattern
    floor: re.Pattern
    pronoun: re.Pattern
    relation: re.Pattern
    contain: re.Pattern
    has: re.Pattern
    style: re.Pattern


@lru_cache(maxsize=1)
def _patterns() -> _Patterns:
    lx = lexicon()
    sides = _alternation(lx.walls)
    attr = _alternation([*lx.attributes, *lx.styles])
    nums = _alternation(lx.numbers)
    w = lambda alt: re.compile(rf"(?<![\w'-])(?:{alt})(?![\w'-])")  # noqa: E731
    return _Patterns(
        noun=w(_alternation(lx.forms)),
        prefix=re.compile(
            rf"(?:(?<![\w'-])(?P<det>the|this|that|these|those)\s+|(?<![\w'-])(?P<each>each|every|both)\s+)?"
            rf"(?:(?<![\w'-])(?P<num>{nums})\s+)?"
            rf"(?P<attrs>(?:(?<![\w'-])(?:{attr})\s*,?\s+(?:and\s+)?)*)$"
        ),
        wall=re.compile(rf"(?<![\w'-])(?:(?P<side>{sides})(?:ern)?\s+)?walls?(?![\w'-])"),
        floor=w("floor|ground"),
        pronoun=w(_alternation(lx.pronouns)),
        relation=w(_alternation(lx.relations)),
        contain=w(_alternation(lx.containment)),
        has=w(_alternation(lx.room_has)),
        style=w(_alternation(lx.styles)),
    )


_ATTR_SPLIT = re.compile(r"[\s,]+")


# ---------------------------------------------------------------------------
# graph types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    """An entity mention: a room (id is its IDSL room label) or one object
    instance (id ``{category}_{k}``)."""

    id: str
    kind: str
    label: str
    span: tuple[int, int]
    attributes: tuple[str, ...] = ()
    sentence: int = 0


@dataclass(frozen=True)
class Edge:
    """A relation ``source -> target``.  ``target`` is None for a wall
    relation whose room is not known yet; ``wall`` is a room plane index."""

    relation_type: str
    source: str
    target: str | None
    wall: int | None = None
    span: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class GraphIssue:
    severity: str
    message: str
    node: str | None = None


@dataclass
class EntityGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    parent: dict = field(default_factory=dict)  # object id -> room id
    issues: list = field(default_factory=list)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TextParseError("node ids must be unique")
        known = set(ids)
        for e in self.edges:
            if e.source not in known or e.target not in known:
                raise TextParseError(f"edge {e.relation_type} {e.source}->{e.target} has an unknown endpoint")
            if e.relation_type not in RELATION_TYPES:
                raise TextParseError(f"unknown relation type {e.relation_type!r}")

    @property
    def rooms(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == ROOM]

    @property
    def objects(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == OBJECT]

    @property
    def ok(self) -> bool:
        return not any(i.severity == "error" for i in self.issues)

    def node(self, nid: str) -> Node:
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(nid)


# ---------------------------------------------------------------------------
# scanning
# ---------------------------------------------------------------------------


@dataclass
class _Item:
    start: int
    end: int
    kind: str  # room, object, wall, floor, pron, rel, contain, has
    value: Any = None
    plural: bool = False
    definite: bool = False
    distributive: bool = False
    count: int | None = None
    attrs: tuple[str, ...] = ()
    prefix_start: int = 0
    nodes: tuple[str, ...] = ()


@dataclass
class _Scan:
    nodes: list[Node]
    edges: list[Edge]


def _sentences(text: str):
    for k, m in enumerate(re.finditer(r"[^.!?;\n]+", text)):
        yield k, m.start(), m.group()


def _items(sentence: str, offset: int) -> list[_Item]:
    P = _patterns()
    lx = lexicon()
    cands: list[_Item] = []
    for m in P.noun.finditer(sentence):
        kind, canon, plural = lx.forms[m.group()]
        pre = P.prefix.search(sentence[: m.start()])
        num = pre.group("num")
        attrs = tuple(a for a in _ATTR_SPLIT.split(pre.group("attrs")) if a and a != "and")
        cands.append(
            _Item(
                m.start() + offset,
                m.end() + offset,
                kind,
                canon,
                plural=plural,
                definite=pre.group("det") is not None,
                distributive=pre.group("each") is not None,
                count=lx.numbers[num] if num else None,
                attrs=attrs,
                prefix_start=pre.start() + offset,
            )
        )
    for m in P.wall.finditer(sentence):
        side = m.group("side")
        cands.append(_Item(m.start() + offset, m.end() + offset, "wall", lx.walls[side] if side else None))
    simple = (
        (P.floor, "floor", None),
        (P.pronoun, "pron", None),
        (P.relation, "rel", lx.relations),
        (P.contain, "contain", None),
        (P.has, "has", None),
    )
    for rx, kind, table in simple:
        for m in rx.finditer(sentence):
            cands.append(_Item(m.start() + offset, m.end() + offset, kind, table[m.group()] if table else m.group()))
    # longest match wins at a position; earlier matches shadow later overlaps
    cands.sort(key=lambda it: (it.start, -(it.end - it.start)))
    out, last = [], -1
    for it in cands:
        if it.start >= last:
            out.append(it)
            last = it.end
    return out


class _Scanner:
    """One left-to-right pass that creates nodes and relation edges."""

    def __init__(self, text: str):
        if not text or not text.strip():
            raise TextParseError("empty description")
        self.text = text
        self.low = text.lower()
        if len(self.low) != len(text):
            self.low = "".join(c.lower() if len(c.lower()) == 1 else c for c in text)
        self.nodes: list[dict] = []
        self.counters: dict[str, int] = {}
        self.history: list[tuple[str, ...]] = []  # object groups, most recent last
        self.edges: list[Edge] = []

    # -- nodes -------------------------------------------------------------

    def _new_id(self, kind: str, label: str) -> str:
        k = self.counters.get((kind, label), 0)
        self.counters[(kind, label)] = k + 1
        return f"{label}_0/{k}" if kind == ROOM else f"{label}_{k}"

    def _existing(self, kind: str, label: str) -> list[dict]:
        return [n for n in self.nodes if n["kind"] == kind and n["label"] == label]

    def _resolve(self, it: _Item, sentence: int) -> tuple[str, ...]:
        if it.definite or it.distributive:
            prior = self._existing(it.kind, it.value)
            if prior:
                picked = prior if it.plural or it.distributive else prior[-1:]
                for n in picked:
                    n["attrs"].extend(a for a in it.attrs if a not in n["attrs"])
                return tuple(n["id"] for n in picked)
        count = it.count if it.count is not None else (2 if it.plural else 1)
        ids = []
        for _ in range(max(count, 1)):
            nid = self._new_id(it.kind, it.value)
            self.nodes.append(
                {
                    "id": nid,
                    "kind": it.kind,
                    "label": it.value,
                    "span": (it.start, it.end),
                    "attrs": list(dict.fromkeys(it.attrs)),
                    "sentence": sentence,
                }
            )
            ids.append(nid)
        return tuple(ids)

    def _pronoun(self, exclude: set[str]) -> tuple[str, ...] | None:
        for group in reversed(self.history):
            if not exclude.intersection(group):
                return group
        return None

    # -- edges -------------------------------------------------------------

    def _emit(self, rtype: str, subject: list[str], target: str | None, wall=None, span=(0, 0)):
        for s in subject:
            if s != target:
                self.edges.append(Edge(rtype, s, target, wall, span))

    def _relate(self, rtype: str, subject: list[str], target_item: _Item | None, target: tuple[str, ...], span):
        """Edges for ``subject <rtype> target``; rooms and objects as targets
        follow different rules."""
        if not subject:
            return
        if target_item is not None and target_item.kind == "wall":
            if rtype == "Facing" or rtype == "AlignedWith":
                return
            # "against/on/by the wall": the back face goes to the wall
            self._emit("StableAgainst", subject, None, target_item.value, span)
            return
        if target_item is not None and target_item.kind == "floor":
            return
        if not target:
            return
        if target_item is not None and target_item.distributive and len(target) > 1:
            # "a lamp on each nightstand": one copy of the subject per target
            subject = [s for s in subject if s not in target]
            for s, t in zip(self._replicate(subject, len(target)), target):
                self._relate(rtype, [s], None, (t,), span)
            return
        t = target[0]
        is_room = any(n["id"] == t and n["kind"] == ROOM for n in self.nodes)
        if is_room:
            if rtype in ("Near", "AdjacentTo", "StableAgainst"):
                self._emit("AdjacentTo", subject, t, None, span)
            return
        if rtype == "StableAgainst" and target_item is not None and self._phrase(span) == "against":
            # pushed against another piece: side by side, not wall-mounted
            rtype = "AdjacentTo"
        self._emit(rtype, subject, t, None, span)

    def _replicate(self, subject: list[str], n: int) -> list[str]:
        if len(subject) != 1 or len(subject) >= n:
            return subject
        src = next(x for x in self.nodes if x["id"] == subject[0])
        out = list(subject)
        for _ in range(n - 1):
            nid = self._new_id(src["kind"], src["label"])
            self.nodes.append({**src, "id": nid, "attrs": list(src["attrs"])})
            self.edges.extend(Edge(e.relation_type, nid, e.target, e.wall, e.span) for e in list(self.edges) if e.source == src["id"])
            out.append(nid)
        return out

    def _phrase(self, span) -> str:
        return self.low[span[0] : span[1]]

    # -- main pass ---------------------------------------------------------

    def run(self) -> _Scan:
        for k, start, sentence in _sentences(self.low):
            items = _items(sentence, start)
            self._sentence(k, items)
            self._free_styles(sentence, start, items)
        nodes = [
            Node(n["id"], n["kind"], n["label"], n["span"], tuple(n["attrs"]), n["sentence"]) for n in self.nodes
        ]
        return _Scan(nodes, self._dedupe(self.edges))

    @staticmethod
    def _dedupe(edges: list[Edge]) -> list[Edge]:
        seen, out = set(), []
        for e in edges:
            key = (e.relation_type, e.source, e.target, e.wall)
            if key not in seen:
                seen.add(key)
                out.append(e)
        return out

    def _continues(self, end: int, start: int) -> bool:
        """True when nothing but plain words separates two items, so a
        relation target can be the subject of the next relation."""
        gap = self.low[end:start]
        return "," not in gap and not re.search(r"(?<![\w'-])(?:and|while|but)(?![\w'-])", gap)

    def _sentence(self, k: int, items: list[_Item]) -> None:
        groups: list[tuple[str, ...]] = []  # current subject, one entry per mention
        last_subject: list[str] = []
        chain: tuple[tuple[str, ...], int] | None = None  # last object target and its end
        pending: tuple[str, tuple[int, int]] | None = None
        room_ctx: str | None = None
        sentence_rooms: list[str] = []
        contained: set[str] = set()
        members: list[str] = []

        def subject() -> list[str]:
            return list(dict.fromkeys(x for g in groups for x in g))

        def close(subj, target=None, end=0):
            nonlocal last_subject, groups, pending, chain
            last_subject, groups, pending = subj, [], None
            chain = (target, end) if target else None

        for i, it in enumerate(items):
            nxt = items[i + 1] if i + 1 < len(items) else None
            if it.kind in (ROOM, OBJECT):
                ids = self._resolve(it, k)
                it.nodes = ids
                if it.kind == ROOM:
                    sentence_rooms.extend(x for x in ids if x not in sentence_rooms)
                if pending is not None:
                    rtype, span = pending
                    subj = subject() or last_subject
                    if rtype == "contain":
                        if it.kind == ROOM:
                            if subj:
                                self._emit("AdjacentTo", subj, ids[0], None, span)
                                contained.update(subj)
                            else:
                                room_ctx = ids[0]
                    else:
                        self._relate(rtype, subj, it, ids, span)
                    if it.kind == OBJECT:
                        self.history.append(ids)
                    close(subj, ids if it.kind == OBJECT else None, it.end)
                    continue
                if it.kind == ROOM:
                    if nxt is not None and nxt.kind == "has":
                        room_ctx = ids[0]
                    continue
                groups.append(ids)
                members.extend(ids)
                self.history.append(ids)
                chain = None
                if room_ctx is not None:
                    self._emit("AdjacentTo", list(ids), room_ctx, None, (it.start, it.end))
                    contained.update(ids)
            elif it.kind == "has":
                prev = items[i - 1] if i > 0 else None
                if (prev is None or prev.kind != ROOM) and groups:
                    close(subject())
            elif it.kind in ("rel", "contain"):
                if not groups:
                    if chain is not None and self._continues(chain[1], it.start):
                        groups = [chain[0]]
                    elif last_subject:
                        groups = [tuple(last_subject)]
                pending = (it.value if it.kind == "rel" else "contain", (it.start, it.end))
            elif it.kind in ("wall", "floor"):
                if pending is not None and pending[0] != "contain":
                    subj = subject() or last_subject
                    self._relate(pending[0], subj, it, (), pending[1])
                    close(subj)
                pending = None
            elif it.kind == "pron":
                target = self._pronoun(set(subject()))
                if target is None and len(groups) > 1:
                    # "a workbench and a bicycle next to it": the last mention
                    # is the subject and the one before it the antecedent
                    target, groups = groups[-2], groups[-1:]
                if target is None:
                    continue
                if pending is not None and pending[0] != "contain":
                    subj = subject() or last_subject
                    self._relate(pending[0], subj, it, target, pending[1])
                    close(subj, target, it.end)
                elif pending is None:
                    groups.append(target)

        # objects named in a sentence with exactly one room belong to it
        if len(sentence_rooms) == 1:
            loose = [m for m in dict.fromkeys(members) if m not in contained]
            self._emit("AdjacentTo", loose, sentence_rooms[0], None, (0, 0))

    def _free_styles(self, sentence: str, offset: int, items: list[_Item]) -> None:
        """Style words that qualify no mention ("decorated in a rustic style")
        go to the sentence's single room."""
        taken = [(it.prefix_start, it.end) for it in items if it.kind in (ROOM, OBJECT)]
        rooms = list(dict.fromkeys(x for it in items if it.kind == ROOM for x in it.nodes))
        if len(rooms) != 1:
            return
        node = next(n for n in self.nodes if n["id"] == rooms[0])
        for m in _patterns().style.finditer(sentence):
            s = m.start() + offset
            if any(a <= s < b for a, b in taken):
                continue
            if m.group() not in node["attrs"]:
                node["attrs"].append(m.group())


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def extract_entities(text: str) -> list[Node]:
    """Room and object mentions, one node per object instance."""
    return _Scanner(text).run().nodes


def extract_relations(text: str, nodes: Sequence[Node]) -> list[Edge]:
    """Relation edges between ``nodes``.  Containment and room membership
    come out as AdjacentTo(object, room)."""
    scan = _Scanner(text).run()
    known = {n.id for n in nodes}
    return [e for e in scan.edges if e.source in known and (e.target is None or e.target in known)]


def build_graph(nodes: Sequence[Node], edges: Sequence[Edge]) -> EntityGraph:
    """Attach every object to exactly one room and resolve wall targets.

    Attachment order: an explicit AdjacentTo(object, room) edge; the room
    of a related object (followed to a fixed point); the only room when
    there is exactly one.  Anything left is reported as an ambiguity.  A
    description that names no room gets one generic room.
    """
    nodes = list(nodes)
    issues: list[GraphIssue] = []
    if not nodes:
        raise TextParseError("no entities found")
    rooms = [n.id for n in nodes if n.kind == ROOM]
    if not rooms:
        rid = f"{GENERIC_ROOM}_0/0"
        nodes.insert(0, Node(rid, ROOM, GENERIC_ROOM, (0, 0)))
        rooms = [rid]
        issues.append(GraphIssue("warning", "no room mentioned; using one generic room", rid))
    room_set = set(rooms)
    objects = [n.id for n in nodes if n.kind == OBJECT]

    parent: dict[str, str] = {}
    for e in edges:
        if e.relation_type == "AdjacentTo" and e.target in room_set and e.source not in parent:
            parent[e.source] = e.target
    changed = True
    while changed:
        changed = False
        for e in edges:
            if e.target is None or e.target in room_set:
                continue
            a, b = e.source, e.target
            if a not in parent and b in parent:
                parent[a] = parent[b]
                changed = True
            elif b not in parent and a in parent:
                parent[b] = parent[a]
                changed = True
    for oid in objects:
        if oid in parent:
            continue
        if len(rooms) == 1:
            parent[oid] = rooms[0]
        else:
            issues.append(GraphIssue("error", f"cannot tell which of {len(rooms)} rooms holds {oid}", oid))

    out = []
    for e in edges:
        if e.target is None:
            host = parent.get(e.source)
            if host is None:
                issues.append(GraphIssue("warning", f"wall relation of {e.source} dropped: no room", e.source))
                continue
            e = Edge(e.relation_type, e.source, host, e.wall, e.span)
        out.append(e)
    for i in issues:
        log.warning("text graph: %s", i.message)
    return EntityGraph(tuple(nodes), tuple(out), parent, issues)


def text_to_graph(text: str) -> EntityGraph:
    nodes = extract_entities(text)
    return build_graph(nodes, extract_relations(text, nodes))


# ---------------------------------------------------------------------------
# graph -> IDSL
# ---------------------------------------------------------------------------


@dataclass
class TextDefaults:
    """Shape and placement defaults for the initial scene."""

    infer_wall_relations: bool = True
    wall_margin: float = 0.05
    # rooms grow until the furniture covers at most this share of the floor
    max_fill: float = 0.45
    building_id: str = "text_scene"
    room_sizes: dict | None = None
    category_sizes: dict | None = None

    def room_size(self, rtype: str) -> tuple[float, float]:
        table = self.room_sizes or lexicon().room_sizes
        return tuple(table.get(rtype, table[GENERIC_ROOM]))

    def object_spec(self, category: str) -> tuple[str, tuple[float, float, float], bool, bool]:
        """(category, size, wall piece, known)."""
        lx = lexicon()
        if self.category_sizes and category in self.category_sizes:
            return category, tuple(self.category_sizes[category]), False, True
        spec = lx.categories.get(category)
        if spec is None:
            name, size = lx.fallback
            return name, size, False, False
        return category, tuple(spec["size"]), bool(spec["wall"]), True


def _camel(rtype: str) -> str:
    return "".join(p.capitalize() for p in re.split(r"[-_ ]", rtype))


def _attribute_tags(attrs: Sequence[str]) -> list[str]:
    styles = known_styles()
    return [f"Style({a})" if a in styles else f"Attribute({a})" for a in attrs]


def _relation(e: Edge, rooms: set[str], wall: int | None) -> RelationSpec:
    if e.relation_type == "StableAgainst":
        if e.target in rooms:
            return RelationSpec("StableAgainst", e.target, child_plane_idx=BACK_FACE, parent_plane_idx=wall, margin=0.05)
        return RelationSpec("StableAgainst", e.target, child_plane_idx=BACK_FACE, parent_plane_idx=FRONT_FACE, margin=0.05)
    if e.relation_type == "OnTopOf":
        if e.target in rooms:
            return RelationSpec("OnTopOf", e.target, child_plane_idx=0, parent_plane_idx=0)
        return RelationSpec("OnTopOf", e.target, child_plane_idx=0, parent_plane_idx=1)
    return RelationSpec(e.relation_type, e.target)


def graph_to_idsl(g: EntityGraph, defaults: TextDefaults | None = None) -> SceneState:
    """Rooms side by side along +x as default rectangles; objects at their
    room centroid with identity rotation."""
    d = defaults or TextDefaults()
    if not g.nodes:
        raise TextParseError("empty graph")
    if not g.rooms:
        raise TextParseError("graph has no room")
    if not g.ok:
        raise TextParseError("; ".join(i.message for i in g.issues if i.severity == "error"))

    specs = {}
    warnings = []
    for n in g.objects:
        cat, size, wall, known = d.object_spec(n.label)
        if not known:
            msg = f"unknown category {n.label!r} for {n.id}; using a generic box"
            log.warning(msg)
            warnings.append(msg)
        specs[n.id] = (cat, size, wall, known)

    # size rooms: default table, grown to keep the furniture packable
    dims = {}
    for r in g.rooms:
        w, dep = d.room_size(r.label)
        area = sum(specs[o][1][0] * specs[o][1][1] for o, p in g.parent.items() if p == r.id)
        if area > d.max_fill * w * dep:
            f = float(np.sqrt(area / (d.max_fill * w * dep)))
            w, dep = float(np.ceil(w * f * 100) / 100), float(np.ceil(dep * f * 100) / 100)
        dims[r.id] = (w, dep)

    order = [r.id for r in g.rooms]
    x = 0.0
    polys = {}
    for rid in order:
        w, dep = dims[rid]
        polys[rid] = [(x, 0.0), (x + w, 0.0), (x + w, dep), (x, dep)]
        x += w

    rels: dict[str, list[RoomRelation]] = {rid: [] for rid in order}
    for a, b in zip(order, order[1:]):
        xa = polys[a][1][0]
        h = min(dims[a][1], dims[b][1])
        seg = geo.Segment2D((xa, 0.0), (xa, h))
        rels[a].append(RoomRelation("SharedEdge", b, seg))
        rels[b].append(RoomRelation("SharedEdge", a, seg))

    rooms = {}
    for r in g.rooms:
        tags = ["Semantics(RoomContour)", f"Semantics({_camel(r.label)})", *_attribute_tags(r.attributes)]
        rooms[r.id] = make_room(r.id, polys[r.id], tags=tags, relations=rels[r.id], room_type=r.label)

    n = len(order)
    neighbours = tuple(tuple(j for j in (i - 1, i + 1) if 0 <= j < n) for i in range(n))
    height = max(dims[rid][1] for rid in order)
    building = BuildingSpec(
        building_id=d.building_id,
        floor_outline=((0.0, 0.0), (x, 0.0), (x, height), (0.0, height), (0.0, 0.0)),
        scene_tags=("Semantics(building)",),
        room_entities=tuple(order),
        connectivity=Connectivity(tuple(order), neighbours, 0),
    )

    by_source: dict[str, list[Edge]] = {}
    for e in g.edges:
        by_source.setdefault(e.source, []).append(e)
    cycle = {rid: 0 for rid in order}

    def next_wall(rid):
        k = cycle[rid]
        cycle[rid] = k + 1
        return WALL_CYCLE[k % len(WALL_CYCLE)]

    room_ids = set(order)
    objects = {}
    for node in g.objects:
        cat, size, wall_piece, known = specs[node.id]
        host = g.parent[node.id]
        edges = by_source.get(node.id, [])
        relations = []
        for e in edges:
            wall = None
            if e.relation_type == "StableAgainst" and e.target in room_ids:
                wall = e.wall if e.wall is not None else next_wall(e.target)
            relations.append(_relation(e, room_ids, wall))
        if d.infer_wall_relations and wall_piece and not any(
            r.relation_type == "StableAgainst" for r in relations
        ):
            relations.append(
                RelationSpec("StableAgainst", host, child_plane_idx=BACK_FACE, parent_plane_idx=next_wall(host), margin=d.wall_margin)
            )
        tags = [f"Semantics({cat})"]
        if not known:
            tags.append(f"Label({node.label})")
        tags += _attribute_tags(node.attributes)
        cx, cy = geo.polygon_centroid(rooms[host].polygon)
        objects[node.id] = make_object(
            node.id,
            cat,
            position=(float(cx), float(cy), 0.0),
            local_center=(0.0, 0.0, size[2] / 2),
            local_size=size,
            semantic_tags=tags,
            relation_graph=relations,
        )
    extra = {"warnings": warnings} if warnings else {}
    return SceneState(building, rooms, objects, extra)


# ---------------------------------------------------------------------------
# LLM backend
# ---------------------------------------------------------------------------


def graph_schema() -> dict:
    """JSON Schema the endpoint must fill in."""
    lx = lexicon()
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["rooms", "objects", "relations"],
        "properties": {
            "rooms": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["id", "type", "attributes"],
                    "properties": {
                        "id": {"type": "string"},
                        "type": {"type": "string"},
                        "attributes": {"type": "array", "items": {"type": "string"}},
                    },
                },
            },
            "objects": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["id", "category", "room", "attributes"],
                    "properties": {
                        "id": {"type": "string"},
                        "category": {"type": "string"},
                        "room": {"type": ["string", "null"]},
                        "attributes": {"type": "array", "items": {"type": "string"}},
                    },
                },
            },
            "relations": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "source", "target", "wall"],
                    "properties": {
                        "type": {"enum": [t for t in RELATION_TYPES if t != "SharedEdge"]},
                        "source": {"type": "string"},
                        "target": {"type": ["string", "null"]},
                        "wall": {"enum": [None, *sorted(lx.walls)]},
                    },
                },
            },
        },
    }


SYSTEM_PROMPT = (
    "Convert the interior description into a scene graph. List every room and every object instance "
    "(one entry per instance). Use snake_case object categories and hyphenated room types. "
    "A relation with target null and a wall name means the source stands against that wall of its room."
)


@dataclass(frozen=True)
class LlmBackendConfig:
    """OpenAI-compatible chat-completions endpoint.

    The request is ``POST {endpoint}/chat/completions`` with a JSON body
    ``{model, temperature, messages, response_format}`` where
    ``response_format`` carries the graph JSON Schema.  The API key is read
    from the environment variable named by ``api_key_env`` and sent as a
    bearer token when set.
    """

    endpoint: str
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 2
    temperature: float = 0.0
    backoff: float = 1.0
    offline: bool = False
    schema: dict | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")

    @property
    def url(self) -> str:
        base = self.endpoint.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def output_schema(self) -> dict:
        return self.schema if self.schema is not None else graph_schema()

    def request_body(self, text: str) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": text},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": "scene_graph", "strict": True, "schema": self.output_schema()},
            },
        }


_RETRY_STATUS = {408, 429, 500, 502, 503, 504}


def _post(cfg: LlmBackendConfig, body: dict, client: httpx.Client | None) -> dict:
    if cfg.offline:
        raise LlmTransportError("offline mode: the LLM backend is disabled")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(cfg.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    own = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    try:
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(cfg.url, json=body, headers=headers, timeout=cfg.timeout)
            except httpx.HTTPError as exc:
                last = exc
                continue
            if resp.status_code in _RETRY_STATUS:
                last = LlmTransportError(f"HTTP {resp.status_code} from {cfg.url}")
                continue
            if resp.status_code >= 400:
                raise LlmTransportError(f"HTTP {resp.status_code} from {cfg.url}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise LlmResponseError(f"response body is not JSON: {exc}") from exc
        raise LlmTransportError(f"request to {cfg.url} failed after {cfg.max_retries + 1} attempts: {last}") from last
    finally:
        if own:
            client.close()


def _graph_payload(reply: dict, schema: dict) -> dict:
    try:
        content = reply["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise LlmResponseError("reply has no choices[0].message.content") from exc
    try:
        data = json.loads(content) if isinstance(content, str) else content
    except ValueError as exc:
        raise LlmResponseError(f"message content is not JSON: {exc}") from exc
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        raise LlmResponseError(f"scene graph fails its schema: {exc.message}") from exc
    return data


def payload_to_graph(data: dict) -> EntityGraph:
    """Normalise an LLM scene graph: canonical room labels and object ids,
    room membership as AdjacentTo edges, then ``build_graph``."""
    lx = lexicon()
    counters: dict[str, int] = {}
    ids: dict[str, str] = {}
    nodes: list[Node] = []

    def fresh(label, kind):
        k = counters.get((kind, label), 0)
        counters[(kind, label)] = k + 1
        return f"{label}_0/{k}" if kind == ROOM else f"{label}_{k}"

    for r in data["rooms"]:
        rtype = lx.room_type(r["type"]) or GENERIC_ROOM
        nid = fresh(rtype, ROOM)
        if r["id"] in ids:
            raise LlmResponseError(f"duplicate id {r['id']!r}")
        ids[r["id"]] = nid
        nodes.append(Node(nid, ROOM, rtype, (0, 0), tuple(a.lower() for a in r["attributes"])))
    edges: list[Edge] = []
    for o in data["objects"]:
        cat = lx.category(o["category"]) or re.sub(r"[^a-z0-9]+", "_", o["category"].lower()).strip("_") or "object"
        nid = fresh(cat, OBJECT)
        if o["id"] in ids:
            raise LlmResponseError(f"duplicate id {o['id']!r}")
        ids[o["id"]] = nid
        nodes.append(Node(nid, OBJECT, cat, (0, 0), tuple(a.lower() for a in o["attributes"])))
        if o["room"] is not None:
            if o["room"] not in ids:
                raise LlmResponseError(f"object {o['id']!r} names unknown room {o['room']!r}")
            edges.append(Edge("AdjacentTo", nid, ids[o["room"]]))
    for rel in data["relations"]:
        src = ids.get(rel["source"])
        tgt = None if rel["target"] is None else ids.get(rel["target"])
        if src is None or (rel["target"] is not None and tgt is None):
            raise LlmResponseError(f"relation {rel} names an unknown entity")
        wall = lx.walls[rel["wall"]] if rel["wall"] is not None else None
        if tgt is None and rel["type"] != "StableAgainst":
            raise LlmResponseError(f"relation {rel} has no target")
        edges.append(Edge(rel["type"], src, tgt, wall))
    return build_graph(nodes, edges)


def llm_graph(text: str, cfg: LlmBackendConfig, client: httpx.Client | None = None) -> EntityGraph:
    if not text or not text.strip():
        raise TextParseError("empty description")
    reply = _post(cfg, cfg.request_body(text), client)
    return payload_to_graph(_graph_payload(reply, cfg.output_schema()))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _first_room(g: EntityGraph) -> EntityGraph:
    first = g.rooms[0].id
    parent = dict(g.parent)
    for n in g.objects:
        parent.setdefault(n.id, first)
    issues = [
        GraphIssue("warning", i.message + f"; placed in {first}", i.node) if i.severity == "error" else i
        for i in g.issues
    ]
    return EntityGraph(g.nodes, g.edges, parent, issues)


def parse_text(
    text: str,
    backend: str | LlmBackendConfig = "rules",
    defaults: TextDefaults | None = None,
    on_ambiguity: str = "error",
    client: httpx.Client | None = None,
) -> SceneState:
    """Description -> initial scene.  ``backend`` is ``"rules"`` or an
    ``LlmBackendConfig``.  ``on_ambiguity="first-room"`` puts objects of
    unclear room into the first room instead of failing."""
    if on_ambiguity not in ("error", "first-room"):
        raise ValueError("on_ambiguity must be 'error' or 'first-room'")
    if isinstance(backend, LlmBackendConfig):
        g = llm_graph(text, backend, client)
    elif backend == "rules":
        g = text_to_graph(text)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if on_ambiguity == "first-room" and not g.ok:
        g = _first_room(g)
    return graph_to_idsl(g, defaults)
