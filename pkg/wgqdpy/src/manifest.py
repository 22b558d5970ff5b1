"""Provenance manifest written next to every CLI output"""

from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

from wgqdpy import __version__, wglogging
from wgqdpy.src.helper_functions import content_hash, file_digest, write_json

logger = wglogging.get_wg_logger()

MANIFEST_NAME = "manifest.json"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    """Record of one command run

    Output digests are sha256 hex digests keyed by the path relative to
    the output directory.
    """

    command: List[str]
    config: dict
    seed: Optional[int] = None
    version: str = __version__
    started: str = field(default_factory=utc_now)
    finished: Optional[str] = None
    outputs: Dict[str, str] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return content_hash(self.config)

    def add_output(self, out_dir: Union[str, Path], path: Union[str, Path]):
        """Register a written file by its digest"""
        path = Path(path)
        self.outputs[str(path.relative_to(out_dir))] = file_digest(path)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "seed": self.seed,
            "started": self.started,
            "finished": self.finished,
            "outputs": dict(sorted(self.outputs.items())),
        }

    def write(self, out_dir: Union[str, Path]) -> Path:
        """Close the run and write manifest.json into out_dir"""
        self.finished = utc_now()
        path = write_json(Path(out_dir) / MANIFEST_NAME, self.to_dict())
        logger.info(f"Wrote manifest with {len(self.outputs)} outputs to {path}.")
        return path
