import logging

from rich.logging import RichHandler


def setup_logging(level: str = "INFO") -> None:
    """
    Installs a single RichHandler on the root logger.
    Calling it again only updates the level.
    """

    root = logging.getLogger()
    root.setLevel(level)
    if any(isinstance(handler, RichHandler) for handler in root.handlers):
        return

    handler = RichHandler(rich_tracebacks=True, show_path=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
