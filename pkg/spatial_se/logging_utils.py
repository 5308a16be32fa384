import logging
import os

# Environment knobs (optional):
#   SPATIAL_SE_LOG=DEBUG|INFO|WARNING (default INFO)
#   SPATIAL_SE_VERBOSE_DEPS=1         (keep multiprocessing chatter)
LOG_LEVEL = getattr(logging, os.environ.get("SPATIAL_SE_LOG", "INFO").upper(), logging.INFO)


def _rich_handler() -> logging.Handler:
    # Prefer Rich; fall back to a plain StreamHandler if it cannot be imported.
    try:
        from rich.logging import RichHandler
        return RichHandler(
            show_time=True,
            show_path=False,
            rich_tracebacks=True,
            markup=False,
            log_time_format="[%X]",
        )
    except Exception:
        return logging.StreamHandler()


def init_logging(level: "int | str | None" = None) -> None:
    """Idempotent: set up colored console logging. A later call may only change the level."""
    lvl = _coerce_level(level) if level is not None else LOG_LEVEL
    root = logging.getLogger()
    if getattr(init_logging, "_inited", False):
        root.setLevel(lvl)
        for h in root.handlers:
            h.setLevel(lvl)
        return

    root.setLevel(lvl)
    ch = _rich_handler()
    ch.setLevel(lvl)
    # Message-only; Rich renders level/time.
    ch.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(ch)

    if not os.environ.get("SPATIAL_SE_VERBOSE_DEPS"):
        logging.getLogger("multiprocessing").setLevel(logging.WARNING)

    init_logging._inited = True  # type: ignore[attr-defined]


def _coerce_level(level: "int | str") -> int:
    if isinstance(level, int):
        return level
    return getattr(logging, str(level).upper(), logging.INFO)


def get_logger(name: str) -> logging.Logger:
    """Return a module logger that inherits the root config."""
    if not name.startswith("spatial_se"):
        name = f"spatial_se.{name}"
    return logging.getLogger(name)


def block(title: str, **fields) -> str:
    """Human-friendly multi-line block for structured log output."""
    if fields:
        lines = [f"{k:<12}: {v}" for k, v in fields.items()]
        body = "\n┃ " + "\n┃ ".join(lines)
    else:
        body = ""
    return f"┏ {title}{body}\n┗"
