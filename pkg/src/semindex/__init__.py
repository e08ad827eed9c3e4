"""Semantic key indexing for concept hierarchies.

Core pieces: the key algebra (keys), concept hierarchies (hierarchy),
the indexing algorithm with maintenance (indexer), multiaxial
descriptors (multiaxial), deduced-concept inference (dconcepts),
relational episode storage (store), case-based retrieval (cbr), the
dialog/query HTTP service (service) and the command line (cli).
"""

from .errors import EngineError
from .hierarchy import ConceptHierarchy, parse_hierarchy, validate
from .indexer import (
    IndexedHierarchy,
    check_correctness,
    delete_node,
    index_hierarchy,
    insert_node,
    render_indexed,
)
from .keys import (
    Key,
    X,
    expand,
    generalize,
    initial_key,
    instances_overlap,
    is_instance,
    parse_key,
    partially_unifiable,
)
from .multiaxial import (
    AxisBinding,
    MultiaxialDescriptor,
    MultiaxialExpression,
    Situation,
    descriptor_matches,
    descriptor_subsumes,
    parse_multiaxial,
)
from .store import Case, Episode, InstanceRecord, Store, open_store

__all__ = [
    "AxisBinding",
    "Case",
    "ConceptHierarchy",
    "EngineError",
    "Episode",
    "IndexedHierarchy",
    "InstanceRecord",
    "Key",
    "MultiaxialDescriptor",
    "MultiaxialExpression",
    "Situation",
    "Store",
    "X",
    "check_correctness",
    "delete_node",
    "descriptor_matches",
    "descriptor_subsumes",
    "expand",
    "generalize",
    "index_hierarchy",
    "initial_key",
    "insert_node",
    "instances_overlap",
    "is_instance",
    "open_store",
    "parse_hierarchy",
    "parse_key",
    "parse_multiaxial",
    "partially_unifiable",
    "render_indexed",
    "validate",
]
