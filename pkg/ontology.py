"""
Topic ontology store for calltopics
A forest of topic nodes with aliases, logical timestamps, name lookup,
JSON persistence and structural statistics.

Single writer: the pipeline owns the tree and serializes every mutation.
"""

import json
import uuid
from dataclasses import dataclass, field
from datetime import date, datetime, time, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union
from uuid import UUID

import numpy as np
from loguru import logger
from pydantic import TypeAdapter, ValidationError

from config import MAX_DEPTH
from errors import ConfigError, ConflictError, DepthError, NotFoundError, OntologyLoadError, ParameterError
from schemas import OntologyFile, SeedTopic, emit

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

# Topic ids are uuid5(namespace, normalized name) so rebuilding from the
# same corpus yields the same ids
TOPIC_NAMESPACE = UUID("5b1f6c3e-8a2d-4f7b-9c41-2e6d8a0f3b17")

Timestamp = Union[datetime, date]


def normalize_label(label: str) -> str:
    """Lowercase, trim, collapse internal whitespace"""
    return " ".join(label.split()).lower()


def topic_uuid(name: str) -> UUID:
    return uuid.uuid5(TOPIC_NAMESPACE, normalize_label(name))


def as_utc(ts: Timestamp) -> datetime:
    """Dates become midnight UTC; naive datetimes are taken as UTC"""
    if not isinstance(ts, datetime):
        return datetime.combine(ts, time.min, tzinfo=timezone.utc)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass
class TopicNode:
    topic_id: UUID
    name: str
    aliases: List[str] = field(default_factory=list)
    created_on: datetime = EPOCH
    updated_on: datetime = EPOCH
    parent_id: Optional[UUID] = None
    child_ids: List[UUID] = field(default_factory=list)

    @property
    def labels(self) -> List[str]:
        return [self.name, *self.aliases]

    @property
    def is_leaf(self) -> bool:
        return not self.child_ids

    def to_dict(self) -> Dict[str, Any]:
        return {
            "topic_id": str(self.topic_id),
            "name": self.name,
            "aliases": list(self.aliases),
            "created_on": self.created_on.isoformat(),
            "updated_on": self.updated_on.isoformat(),
            "parent_id": str(self.parent_id) if self.parent_id else None,
            "child_ids": [str(c) for c in self.child_ids],
        }


@dataclass(frozen=True)
class OntologyStats:
    total_nodes: int
    num_levels: int
    num_leaf_nodes: int
    avg_children_per_node: float
    std_children_per_node: float
    avg_aliases_per_node: float
    std_aliases_per_node: float
    nodes_per_level: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        data = dict(self.__dict__)
        data["nodes_per_level"] = list(self.nodes_per_level)
        return data


class Ontology:
    """Topic tree: id-indexed nodes, ordered roots and a label index"""

    def __init__(self, max_depth: int = MAX_DEPTH):
        if max_depth < 1:
            raise ParameterError("max_depth must be >= 1")
        self.max_depth = max_depth
        self.nodes: Dict[UUID, TopicNode] = {}
        self.root_ids: List[UUID] = []
        self.name_index: Dict[str, UUID] = {}
        self.seed_timestamp: Optional[datetime] = None

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, topic_id: object) -> bool:
        return topic_id in self.nodes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Ontology):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    # ---- lookup ------------------------------------------------------

    def get(self, topic_id: UUID) -> TopicNode:
        try:
            return self.nodes[topic_id]
        except KeyError:
            raise NotFoundError(f"Unknown topic id: {topic_id}") from None

    def find_by_name_or_alias(self, query: str) -> Optional[TopicNode]:
        """Exact lookup over names and aliases after normalization"""
        topic_id = self.name_index.get(normalize_label(query))
        return self.nodes[topic_id] if topic_id is not None else None

    def roots(self) -> List[TopicNode]:
        return [self.nodes[r] for r in self.root_ids]

    def children(self, topic_id: UUID) -> List[TopicNode]:
        return [self.nodes[c] for c in self.get(topic_id).child_ids]

    def depth(self, topic_id: UUID) -> int:
        node = self.get(topic_id)
        steps = 0
        while node.parent_id is not None:
            steps += 1
            if steps > len(self.nodes):
                raise OntologyLoadError("cycle", f"parent chain of {topic_id} does not reach a root")
            node = self.nodes[node.parent_id]
        return steps

    def path_to_root(self, topic_id: UUID) -> List[TopicNode]:
        """The node first, its root last"""
        path = [self.get(topic_id)]
        while path[-1].parent_id is not None:
            path.append(self.nodes[path[-1].parent_id])
        return path

    def walk_with_depth(self) -> Iterator[Tuple[TopicNode, int]]:
        """Pre-order over the forest, roots in order"""
        stack = [(self.nodes[r], 0) for r in reversed(self.root_ids)]
        while stack:
            node, level = stack.pop()
            yield node, level
            stack.extend((self.nodes[c], level + 1) for c in reversed(node.child_ids))

    def walk(self) -> Iterator[TopicNode]:
        for node, _ in self.walk_with_depth():
            yield node

    def leaves(self) -> List[TopicNode]:
        return [node for node in self.walk() if node.is_leaf]

    def descendants(self, topic_id: UUID) -> List[TopicNode]:
        """Every node below topic_id, pre-order"""
        found = []
        stack = list(reversed(self.get(topic_id).child_ids))
        while stack:
            node = self.nodes[stack.pop()]
            found.append(node)
            stack.extend(reversed(node.child_ids))
        return found

    def is_seed(self, topic_id: UUID) -> bool:
        return self.seed_timestamp is not None and self.get(topic_id).created_on == self.seed_timestamp

    # ---- mutation ----------------------------------------------------

    def insert_node(self, name: str, parent_id: Optional[UUID] = None, now: Timestamp = EPOCH) -> TopicNode:
        """
        Add a new topic under parent_id, or as a root

        Args:
            name: Topic label; its normalized form must be unused
            parent_id: Existing node, or None for a root
            now: Logical timestamp (document call date)

        Returns:
            The new node
        """
        normalized = normalize_label(name)
        if not normalized:
            raise ParameterError("Topic name must not be blank")

        level = 0
        if parent_id is not None:
            level = self.depth(parent_id) + 1
        if level > self.max_depth - 1:
            raise DepthError(f"Inserting {name!r} at level {level} exceeds max_depth {self.max_depth}")
        if normalized in self.name_index:
            raise ConflictError(f"Topic label already exists: {name!r}")

        topic_id = topic_uuid(name)
        if topic_id in self.nodes:
            raise ConflictError(f"Topic id already exists: {topic_id}")

        now = as_utc(now)
        node = TopicNode(topic_id=topic_id, name=name.strip(), created_on=now, updated_on=now, parent_id=parent_id)
        self.nodes[topic_id] = node
        if parent_id is None:
            self.root_ids.append(topic_id)
        else:
            self.nodes[parent_id].child_ids.append(topic_id)
        self.name_index[normalized] = topic_id
        return node

    def add_alias(self, topic_id: UUID, alias: str, now: Timestamp = EPOCH) -> TopicNode:
        """
        Attach an alias to a node. Re-adding a label the node already
        carries changes nothing but updated_on.
        """
        node = self.get(topic_id)
        normalized = normalize_label(alias)
        if not normalized:
            raise ParameterError("Alias must not be blank")

        owner = self.name_index.get(normalized)
        if owner is not None and owner != topic_id:
            raise ConflictError(f"Alias {alias!r} already names topic {self.nodes[owner].name!r}")
        if owner is None:
            node.aliases.append(alias.strip())
            self.name_index[normalized] = topic_id

        # Out-of-order logical times never move updated_on backwards
        node.updated_on = max(node.updated_on, as_utc(now))
        return node

    # ---- integrity ---------------------------------------------------

    def _label_index(self) -> Dict[str, UUID]:
        index: Dict[str, UUID] = {}
        for node in self.nodes.values():
            for label in node.labels:
                normalized = normalize_label(label)
                if not normalized:
                    raise OntologyLoadError("empty name", f"node {node.topic_id}")
                if normalized in index:
                    raise OntologyLoadError("duplicate name", repr(label))
                index[normalized] = node.topic_id
        return index

    def check_invariants(self) -> None:
        """Raise OntologyLoadError naming the first violated tree invariant"""
        for node in self.nodes.values():
            if node.parent_id is not None and node.parent_id not in self.nodes:
                raise OntologyLoadError("unknown parent", f"{node.name!r} cites {node.parent_id}")

        for node in self.nodes.values():
            if len(set(node.child_ids)) != len(node.child_ids):
                raise OntologyLoadError("parent/child mismatch", f"{node.name!r} lists a child twice")
            for child_id in node.child_ids:
                child = self.nodes.get(child_id)
                if child is None or child.parent_id != node.topic_id:
                    raise OntologyLoadError("parent/child mismatch", f"{node.name!r} -> {child_id}")
            if node.parent_id is not None and node.topic_id not in self.nodes[node.parent_id].child_ids:
                raise OntologyLoadError("parent/child mismatch", f"{node.name!r} missing from its parent")

        for topic_id in self.nodes:
            self.depth(topic_id)

        parentless = [n.topic_id for n in self.nodes.values() if n.parent_id is None]
        if len(set(self.root_ids)) != len(self.root_ids) or set(self.root_ids) != set(parentless):
            raise OntologyLoadError("root mismatch", "roots must be exactly the parentless nodes")

        for node, level in self.walk_with_depth():
            if level > self.max_depth - 1:
                raise OntologyLoadError("depth exceeded", f"{node.name!r} at level {level}")
            if node.updated_on < node.created_on:
                raise OntologyLoadError("timestamps", f"{node.name!r} updated before created")

        if self._label_index() != self.name_index:
            raise OntologyLoadError("index mismatch", "name_index out of sync with node labels")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_depth": self.max_depth,
            "seed_timestamp": self.seed_timestamp.isoformat() if self.seed_timestamp else None,
            "roots": [str(r) for r in self.root_ids],
            "nodes": [node.to_dict() for node in self.nodes.values()],
        }


def ontology_stats(tree: Ontology) -> OntologyStats:
    """
    Structural statistics of the tree

    Levels are depths (roots at 0); averages run over all nodes with
    population standard deviation.
    """
    if not tree.nodes:
        return OntologyStats(0, 0, 0, 0.0, 0.0, 0.0, 0.0, ())

    per_level: Dict[int, int] = {}
    for _, level in tree.walk_with_depth():
        per_level[level] = per_level.get(level, 0) + 1
    nodes_per_level = tuple(per_level.get(i, 0) for i in range(max(per_level) + 1))

    children = np.array([len(n.child_ids) for n in tree.nodes.values()], dtype=float)
    aliases = np.array([len(n.aliases) for n in tree.nodes.values()], dtype=float)
    return OntologyStats(
        total_nodes=len(tree.nodes),
        num_levels=len(nodes_per_level),
        num_leaf_nodes=int((children == 0).sum()),
        avg_children_per_node=float(children.mean()),
        std_children_per_node=float(children.std()),
        avg_aliases_per_node=float(aliases.mean()),
        std_aliases_per_node=float(aliases.std()),
        nodes_per_level=nodes_per_level,
    )


def save(tree: Ontology, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit(OntologyFile, tree.to_dict()) + "\n", encoding="utf-8")
    logger.info(f"Saved ontology with {len(tree)} nodes to {path}")
    return path


def load(path: Union[str, Path]) -> Ontology:
    """
    Read an ontology file and verify every tree invariant

    Raises:
        OntologyLoadError: unreadable or malformed file, or a violated invariant
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OntologyLoadError("unreadable", str(e)) from e
    try:
        data = OntologyFile.model_validate_json(text)
    except ValidationError as e:
        raise OntologyLoadError("malformed", str(e).splitlines()[0]) from e

    tree = Ontology(max_depth=data.max_depth)
    tree.seed_timestamp = as_utc(data.seed_timestamp) if data.seed_timestamp else None
    for record in data.nodes:
        if record.topic_id in tree.nodes:
            raise OntologyLoadError("duplicate id", str(record.topic_id))
        tree.nodes[record.topic_id] = TopicNode(
            topic_id=record.topic_id,
            name=record.name,
            aliases=list(record.aliases),
            created_on=as_utc(record.created_on),
            updated_on=as_utc(record.updated_on),
            parent_id=record.parent_id,
            child_ids=list(record.child_ids),
        )
    tree.root_ids = list(data.roots)
    tree.name_index = tree._label_index()
    tree.check_invariants()
    logger.info(f"Loaded ontology with {len(tree)} nodes from {path}")
    return tree


def load_seed_spec(path: Union[str, Path]) -> List[SeedTopic]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return TypeAdapter(List[SeedTopic]).validate_python(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"Invalid seed spec {path}: {e}") from e


def seed(tree: Ontology, seed_spec: Sequence[Union[SeedTopic, Mapping[str, Any]]], now: Timestamp = EPOCH) -> Ontology:
    """
    Insert root topics and their children with one shared timestamp

    Labels already in the tree are left alone, so seeding twice is a no-op.
    """
    entries = [s if isinstance(s, SeedTopic) else SeedTopic.model_validate(s) for s in seed_spec]
    seen = set()
    for entry in entries:
        for label in (entry.name, *entry.children):
            normalized = normalize_label(label)
            if normalized in seen:
                raise ConflictError(f"Duplicate seed topic: {label!r}")
            seen.add(normalized)

    now = as_utc(now)
    if tree.seed_timestamp is None:
        tree.seed_timestamp = now
    stamp = tree.seed_timestamp

    added = 0
    for entry in entries:
        root = tree.find_by_name_or_alias(entry.name)
        if root is None:
            root = tree.insert_node(entry.name, None, stamp)
            added += 1
        for child in entry.children:
            if tree.find_by_name_or_alias(child) is None:
                tree.insert_node(child, root.topic_id, stamp)
                added += 1

    logger.info(f"Seeded ontology: {added} new topics, {len(tree)} total")
    return tree
