"""
Command line: `spatial-se run|simulate|enhance|score|pack`.

Exit codes: 0 ok, 2 config validation, 3 missing input or partial outputs,
4 numerical failure, 1 anything else.
"""
import functools
import re
import sys
from pathlib import Path
from typing import Optional, Tuple

import click

from . import __version__
from .config import NUM_STAGES, PipelineConfig, config_to_dict, load_config, parse_config
from .errors import ConfigError, SpatialSEError
from .logging_utils import block, get_logger, init_logging
from .simulate.corpus import MANIFEST_NAME
from .stages import ALT_TEST_DIR, run, simulate_stage
from .workspace import Workspace

log = get_logger("cli")

SUBCOMMAND_STAGES = {"simulate": 1, "enhance": 2, "score": 3, "pack": 4}


def parse_stage_range(text: str) -> Tuple[int, int]:
    """'3' -> (3, 3); '1-4' or '1..4' -> (1, 4)."""
    m = re.fullmatch(r"\s*(\d+)\s*(?:(?:-|\.\.)\s*(\d+)\s*)?", text or "")
    if not m:
        raise ConfigError("stages", f"cannot parse stage range {text!r}; use N or N-M")
    start = int(m.group(1))
    stop = int(m.group(2)) if m.group(2) else start
    return start, stop


def _exit_code(e: BaseException) -> int:
    if isinstance(e, SpatialSEError):
        return e.exit_code
    if isinstance(e, FileNotFoundError):
        return 3
    return 1


def guarded(fn):
    """Map library failures onto the exit-code contract."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.exceptions.Exit:
            raise
        except Exception as e:
            code = _exit_code(e)
            log.error(f"{type(e).__name__}: {e}")
            if code == 1:
                log.debug("traceback", exc_info=True)
            sys.exit(code)
    return wrapper


def common_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="Pipeline YAML config."),
        click.option("--force", is_flag=True, help="Redo stages even when complete."),
        click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                     help="Per-utterance worker processes."),
        click.option("--seed", type=int, default=None, help="Override io.seed."),
        click.option("--work-dir", type=click.Path(file_okay=False), default=None,
                     help="Override io.work_dir."),
        click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"],
                                                      case_sensitive=False), default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def build_config(config_path: Optional[str], seed: Optional[int] = None, work_dir: Optional[str] = None,
                 stages: Optional[Tuple[int, int]] = None, **overrides) -> PipelineConfig:
    """Load the config and apply command-line overrides, then re-validate the whole."""
    raw = config_to_dict(load_config(config_path))
    if seed is not None:
        raw["io"]["seed"] = seed
    if work_dir is not None:
        raw["io"]["work_dir"] = work_dir
    if stages is not None:
        raw["stages"] = {"start": stages[0], "stop": stages[1]}
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, key = dotted.split(".")
        raw[section][key] = value
    return parse_config(raw)


def _report(status) -> None:
    log.info("\n" + block("DONE", **{f"stage {s}": v for s, v in status.items()}))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="spatial-se")
def main():
    """Multichannel speech enhancement recipes: simulate, enhance, score, pack."""


@main.command("run")
@common_options
@click.option("--stage", "stage_range", default=f"1-{NUM_STAGES}", show_default=True,
              help="Stage N or range N-M (1 simulate, 2 enhance, 3 score, 4 pack).")
@guarded
def run_cmd(config_path, force, jobs, seed, work_dir, log_level, stage_range):
    """Run a contiguous range of stages."""
    init_logging(log_level)
    cfg = build_config(config_path, seed, work_dir, parse_stage_range(stage_range))
    _report(run(cfg, force=force, jobs=jobs))


@main.command("simulate")
@common_options
@click.option("--count", type=click.IntRange(min=0), default=None, help="Override spatializer.count.")
@click.option("--diffuse-bank", type=click.Path(file_okay=False), default=None,
              help="Override spatializer.diffuse_bank.")
@click.option("--alt-test", is_flag=True,
              help="Render the alternate test set with spatializer.alt_diffuse_bank.")
@guarded
def simulate_cmd(config_path, force, jobs, seed, work_dir, log_level, count, diffuse_bank, alt_test):
    """Stage 1: spatialize the clean corpus."""
    init_logging(log_level)
    cfg = build_config(config_path, seed, work_dir, (1, 1),
                       **{"spatializer.count": count, "spatializer.diffuse_bank": diffuse_bank})
    if not alt_test:
        _report(run(cfg, force=force, jobs=jobs))
        return
    ws = Workspace(cfg.io.work_dir)
    existing = ws.stage_dir(1) / ALT_TEST_DIR / MANIFEST_NAME
    if existing.is_file() and not force:
        log.info("\n" + block("SKIP", stage="1 (alt test)", reason=f"{existing} exists"))
        return
    manifest = simulate_stage(cfg, ws, jobs, alt_test=True)
    log.info("\n" + block("DONE", alt_test=Path(manifest)))


def _single_stage(name: str):
    stage = SUBCOMMAND_STAGES[name]

    @common_options
    @guarded
    def cmd(config_path, force, jobs, seed, work_dir, log_level):
        init_logging(log_level)
        cfg = build_config(config_path, seed, work_dir, (stage, stage))
        _report(run(cfg, force=force, jobs=jobs))

    cmd.__doc__ = f"Stage {stage}: {name}."
    return main.command(name)(cmd)


enhance_cmd = _single_stage("enhance")
score_cmd = _single_stage("score")
pack_cmd = _single_stage("pack")


if __name__ == "__main__":
    main()
