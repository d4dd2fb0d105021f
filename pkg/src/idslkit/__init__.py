"""Indoor scene synthesis toolkit built around the IDSL scene format."""

from .idsl import (
    BuildingSpec,
    IDSLError,
    IDSLSchemaError,
    IDSLSyntaxError,
    ObjectSpec,
    RelationSpec,
    RoomSpec,
    SceneState,
    ValidationIssue,
    derive_world_geometry,
    parse_idsl,
    serialize_idsl,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "BuildingSpec",
    "IDSLError",
    "IDSLSchemaError",
    "IDSLSyntaxError",
    "ObjectSpec",
    "RelationSpec",
    "RoomSpec",
    "SceneState",
    "ValidationIssue",
    "derive_world_geometry",
    "parse_idsl",
    "serialize_idsl",
    "validate",
]
