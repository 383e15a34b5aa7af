from .app import DEFAULT_MODEL, Encoder, SidecarConfig, create_app

__version__ = "0.1.0"
