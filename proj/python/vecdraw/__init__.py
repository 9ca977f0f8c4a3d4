"""Vector-stroke drawing optimized against a text-image scoring backend."""

from ._core import (
    EMBEDDING_DIM,
    CanvasConfig,
    ConfigError,
    ContractError,
    DomainError,
    Error,
    IoError,
    MockBackend,
    MockServer,
    NumericError,
    ProtocolError,
    RasterConfig,
    RemoteError,
    Scene,
    ScoringBackend,
    Stroke,
    TransportError,
    connect,
    cosine_similarity,
    export_svg,
    init_scene,
    params_to_scene,
    parse_svg,
    reconstruct,
    reference_render,
    render,
    render_pullback,
    scene_to_params,
    synthesize,
)

__all__ = [
    "EMBEDDING_DIM",
    "CanvasConfig",
    "ConfigError",
    "ContractError",
    "DomainError",
    "Error",
    "IoError",
    "MockBackend",
    "MockServer",
    "NumericError",
    "ProtocolError",
    "RasterConfig",
    "RemoteError",
    "Scene",
    "ScoringBackend",
    "Stroke",
    "TransportError",
    "connect",
    "cosine_similarity",
    "export_svg",
    "init_scene",
    "params_to_scene",
    "parse_svg",
    "reconstruct",
    "reference_render",
    "render",
    "render_pullback",
    "scene_to_params",
    "synthesize",
]
