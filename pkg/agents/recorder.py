import logging
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from config import ARTIFACT_VERSION
from utils.helpers import save_json, sha256_file
from .agent_base import AgentBase, AgentMessage, PipelineState


class ArtifactRecord(BaseModel):
    stage: str
    path: str
    sha256: str


class RunManifest(BaseModel):
    """
    Provenance of a run. Apart from the two timestamps, identical inputs and
    configuration produce an identical manifest.
    """
    command: str
    config_hash: str
    artifact_version: str = ARTIFACT_VERSION
    inputs: Dict[str, str] = Field(default_factory=dict)
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[ArtifactRecord] = Field(default_factory=list)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ManifestAgent(AgentBase):
    """
    Collects the artifact messages of the stage agents and writes the run
    summary and the manifest.
    """
    capabilities = {"record": "Checksum every emitted file and write summary.json and manifest.json"}

    def __init__(self, name: str, config, message_bus, registry, command: str):
        super().__init__(name, config, message_bus, registry)
        inputs = {}
        for key in ("index", "rates"):
            path = getattr(config, key)
            if path is not None and path.is_file():
                inputs[str(path)] = sha256_file(path)
        self.manifest = RunManifest(
            command=command, config_hash=config.digest(), inputs=inputs, started_at=utc_now()
        )

    async def process_message(self, message: AgentMessage) -> Optional[AgentMessage]:
        if message.content.get("type") != "artifact":
            return await super().process_message(message)
        path = message.content["path"]
        self.manifest.outputs.append(
            ArtifactRecord(stage=message.content["stage"], path=path, sha256=sha256_file(path))
        )
        logging.debug(f"Recorded artifact {path} from {message.sender}.")
        return None

    async def run(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        summary_path = state.out_dir / "summary.json"
        save_json(state.summary, summary_path)
        await self.publish_artifact(stage, summary_path)
        for message in self.message_bus.drain(self.name):
            await self.process_message(message)

        self.manifest.finished_at = utc_now()
        manifest_path = state.out_dir / "manifest.json"
        save_json(self.manifest.model_dump(mode="json"), manifest_path)
        return {"artifacts": len(self.manifest.outputs)}
