"""Generic helper functions for wgqdpy"""

import copy
import hashlib
import json
import os
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Union

import numpy as np
from dotenv import load_dotenv

from wgqdpy.src.exceptions import ConfigurationError

ENV_PREFIX = "WGQD_"
SCENARIO_PACKAGE = "wgqdpy"
SCENARIO_DIR = "scenarios"
DEFAULT_SCENARIO_MODES = ["desk", "paper"]


def get_scenario_cfg(scenario_name: str) -> dict:
    """Get a packaged scenario configuration

    Scenario configurations are located in wgqdpy/scenarios/.

    :param scenario_name: Name of the scenario, without the .json suffix,
        e.g. "paper_fig3".
    :returns: Dictionary with the raw scenario configuration.
    """
    scenario_file = resources.files(SCENARIO_PACKAGE).joinpath(
        SCENARIO_DIR, scenario_name + ".json"
    )
    if not scenario_file.is_file():
        raise ConfigurationError(f"Unknown scenario '{scenario_name}'.")
    with scenario_file.open("r") as f:
        return json.load(f)


def load_json_config(config_path: Union[str, Path]) -> dict:
    """Load a JSON configuration file from disk

    :param config_path: Location of the JSON file.
    :returns: Dictionary with the configuration.
    :raises: ConfigurationError if the file is missing or not valid JSON.
    """
    config_path = Path(config_path)
    if not config_path.is_file():
        raise ConfigurationError(f"Config file {config_path} does not exist.")
    try:
        with open(config_path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"Config file {config_path} is not valid JSON: {e}."
        )


def select_mode(cfg: dict, paper_mode: bool = False) -> dict:
    """Resolve the desk-scale or paper-mode block of a scenario

    Scenarios may hold a 'desk' and a 'paper' block next to shared keys.
    The paper block is merged on top of the desk block when paper_mode
    is set, so it only needs to list what differs.

    :param cfg: Raw scenario or user configuration.
    :param paper_mode: Select full-fidelity parameters. Default is False.
    :returns: Flat configuration without the mode blocks.
    """
    shared = {k: v for k, v in cfg.items() if k not in DEFAULT_SCENARIO_MODES}
    resolved = merge_nested_dict(shared, cfg.get("desk", {}))
    if paper_mode:
        resolved = merge_nested_dict(resolved, cfg.get("paper", {}))
    return resolved


def merge_nested_dict(base: dict, update: dict) -> dict:
    """Recursively merge two (nested) dictionaries into a new one

    :param base: Dictionary with default values.
    :param update: Dictionary whose values take precedence.
    :returns: New dictionary; neither input is modified.
    """
    output_dict = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(output_dict.get(key), dict):
            output_dict[key] = merge_nested_dict(output_dict[key], value)
        else:
            output_dict[key] = copy.deepcopy(value)
    return output_dict


def make_nested_dict(
    value: Any,
    all_keys: list,
    output_dict: dict = None,
) -> dict:
    """Build a nested dictionary

    If an existing dictionary is passed, this dictionary is updated with
    the specified value in a nested dict at the location specified in 'keys'.
    Used to apply 'section.key=value' overrides to configurations.

    :param value: Value to add to the dictionary.
    :param all_keys: List of keys specifying the (nested) location of the value
        in the resulting dictionary.
    :param output_dict: Dictionary to update. Default is None, in which case
        a new dictionary is created.
    :returns: Dictionary updated with 'value' in location specified by 'keys'
    """
    if output_dict is None:
        output_dict = {}

    # use deepcopy to prevent elements in all_keys also being popped
    # from objects passed as all_keys during calls to make_nested_dict.
    keys = copy.deepcopy(all_keys)
    key = keys.pop(0)
    if len(keys) > 0 and isinstance(output_dict.get(key), dict):
        output_dict[key] = make_nested_dict(
            value, keys, output_dict=output_dict[key]
        )
    elif len(keys) > 0:
        output_dict[key] = make_nested_dict(value, keys, output_dict={})
    else:
        output_dict[key] = value
    return output_dict


def parse_override(override: str) -> tuple:
    """Parse a 'section.key=value' override from the command line

    The value is parsed as JSON when possible, and kept as string otherwise.

    :param override: Override string, e.g. "geometry.hole_radius=30".
    :returns: Tuple with the list of keys and the parsed value.
    """
    if "=" not in override:
        raise ValueError(
            f"Override should be of format 'section.key=value', "
            f"but is {override}."
        )
    path, raw_value = override.split("=", 1)
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return path.split("."), value


def env_setting(name: str, default: Any = None, cast: Callable = str) -> Any:
    """Read a WGQD_-prefixed setting from the environment

    A local .env file is loaded first, without overriding variables that
    are already set.

    :param name: Setting name without prefix, e.g. "SEED".
    :param default: Value returned if the variable is not set.
    :param cast: Callable used to convert the raw string.
    :returns: Converted setting or default.
    """
    load_dotenv(override=False)
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw == "":
        return default
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return cast(raw)
    except ValueError:
        raise ConfigurationError(
            f"Environment variable {ENV_PREFIX + name} should be of type "
            f"{cast.__name__}, but is {raw}."
        )


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "model_dump"):
        return obj.model_dump(mode="json")
    raise TypeError(f"Object of type {type(obj)} is not JSON serializable.")


def canonical_json(obj: Any) -> str:
    """Serialize to JSON with sorted keys, so equal content gives equal text"""
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


def content_hash(obj: Any) -> str:
    """sha256 hex digest of the canonical JSON form of obj"""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def file_digest(path: Union[str, Path]) -> str:
    """sha256 hex digest of a file on disk"""
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


def write_json(path: Union[str, Path], obj: Any) -> Path:
    """Write obj as canonical JSON and return the path"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(canonical_json(obj))
        f.write("\n")
    return path


def stream_rng(seed: int, stage: int = 0) -> np.random.Generator:
    """Random generator for one stage of a seeded pipeline

    Uses the counter-based Philox bit generator, keyed by a SeedSequence
    built from (seed, stage), so every stage draws from an independent
    substream that is reproducible across platforms.

    :param seed: Master seed (non-negative integer).
    :param stage: Stage index, e.g. 0 for emission, 1 for splitting.
    :returns: numpy Generator.
    """
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed should be a non-negative integer, but is {seed}.")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stage),))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, key: int) -> int:
    """Independent 63-bit seed for item key (e.g. a trial) of a seeded run"""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(key),))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def check_probability(value: float, name: str) -> float:
    """Check that a value lies in [0, 1]"""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} should be in [0, 1], but is {value}.")
    return value


def check_positive(value: float, name: str, strict: bool = True) -> float:
    """Check that a value is positive (or non-negative if strict=False)"""
    if strict and not value > 0:
        raise ValueError(f"{name} should be > 0, but is {value}.")
    if not strict and not value >= 0:
        raise ValueError(f"{name} should be >= 0, but is {value}.")
    return value
