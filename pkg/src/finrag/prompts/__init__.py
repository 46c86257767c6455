"""Versioned prompt resources; missing files fail loudly at load time."""

from importlib import resources

from finrag.errors import ConfigError

PROMPT_VERSION = "v1"


def load_prompt(name: str, version: str = PROMPT_VERSION) -> str:
    """Read a prompt template such as ``keywords`` or ``answer``."""
    filename = f"{name}_{version}.txt"
    ref = resources.files(__package__).joinpath(filename)
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigError(f"prompt resource '{filename}' is missing") from e
