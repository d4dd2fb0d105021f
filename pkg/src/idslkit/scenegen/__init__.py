"""Scene instantiation: envelope meshes, presets, asset matching, refinement, export."""

from .mesh import Mesh, MeshBuilder, MeshError, merge
from .presets import CATEGORIES as PRESET_CATEGORIES, Preset, PresetError, PresetLibrary, load_presets, validate_preset
from .envelope import WallParams, carve_openings, generate_floor_ceiling, generate_walls
from .assets import (
    AssetError,
    AssetRecord,
    FallbackStyle,
    MatchScore,
    MatchWeights,
    Selection,
    box_iou,
    fallback_generate,
    load_corpus,
    match_asset,
    proxy_mesh,
    select_asset,
)
from .refine import RefineConfig, RefineError, RefineProblem, RefineResult, refine, refine_placements
from .export import SvgStyle, export_mtl, export_obj, export_svg, read_obj
from .generate import GenerateConfig, GeneratedScene, default_corpus, generate_scene, place

__all__ = [
    "AssetError",
    "AssetRecord",
    "FallbackStyle",
    "GenerateConfig",
    "GeneratedScene",
    "MatchScore",
    "MatchWeights",
    "Mesh",
    "MeshBuilder",
    "MeshError",
    "PRESET_CATEGORIES",
    "Preset",
    "PresetError",
    "PresetLibrary",
    "RefineConfig",
    "RefineError",
    "RefineProblem",
    "RefineResult",
    "Selection",
    "SvgStyle",
    "WallParams",
    "box_iou",
    "carve_openings",
    "default_corpus",
    "export_mtl",
    "export_obj",
    "export_svg",
    "fallback_generate",
    "generate_floor_ceiling",
    "generate_scene",
    "generate_walls",
    "load_corpus",
    "load_presets",
    "match_asset",
    "merge",
    "place",
    "proxy_mesh",
    "read_obj",
    "refine",
    "refine_placements",
    "select_asset",
    "validate_preset",
]
