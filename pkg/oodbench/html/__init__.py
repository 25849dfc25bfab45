from .jinja_env import get_jinja_env

__all__ = ["get_jinja_env"]
