from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from utils.helpers import write_frame

MANIFEST_AGENT = "recorder"


class AgentMessage:
    """
    Represents a message exchanged between agents.

    Attributes:
        content (Dict[str, Any]): The content of the message; "type" says what it is.
        sender (str): The name of the agent sending the message.
        recipient (str): The name of the agent receiving the message.
    """
    def __init__(self, content: Dict[str, Any], sender: str, recipient: str):
        self.content = content
        self.sender = sender
        self.recipient = recipient


@dataclass
class PipelineState:
    """
    Results handed from one stage to the next within a run.

    Every stage reads what earlier stages left here and adds its own outputs;
    summary collects the machine-readable numbers of the run.
    """
    out_dir: Path
    index: Any = None
    rates: Any = None
    account: Any = None
    discounted: Any = None
    tau_estimate: Any = None
    tau_path: Any = None
    ledger: Any = None
    panel_spec: Any = None
    panel: Any = None
    report: Any = None
    summary: Dict[str, Any] = field(default_factory=dict)


class AgentBase(ABC):
    """
    Abstract base class for the stage agents of the FLVR pipeline.

    An agent registers its capabilities on construction. The command line
    picks the agent for a stage by capability and sends it a run message;
    handle_messages() runs the stage and posts the reply back on the bus.

    Attributes:
        name (str): The name of the agent.
        config: The validated RunConfig.
        message_bus: The communication system for inter-agent messaging.
        registry: The registry for storing agent capabilities.
    """
    capabilities: Dict[str, str] = {}

    def __init__(self, name: str, config, message_bus, registry):
        self.name = name
        self.config = config
        self.message_bus = message_bus
        self.registry = registry
        self.registry.register_agent(name, self)
        for capability, description in self.capabilities.items():
            self.registry.register_agent_capability(name, capability, description)

    @abstractmethod
    async def run(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        """
        Executes one pipeline stage.

        Args:
            stage (str): The capability being exercised, e.g. "panel".
            state (PipelineState): Shared results of earlier stages.

        Returns:
            Dict[str, Any]: The stage's summary entries.
        """

    async def process_message(self, message: AgentMessage) -> Optional[AgentMessage]:
        """
        Handles a {"type": "run", "stage": ...} request by running the stage and
        replying with its summary.
        """
        if message.content.get("type") != "run":
            return None
        summary = await self.run(message.content["stage"], message.content["state"])
        return AgentMessage(content={"type": "done", "summary": summary}, sender=self.name, recipient=message.sender)

    async def send_message(self, recipient: str, content: Dict[str, Any]):
        """
        Send a message to another agent.

        Example:
            await agent.send_message("recorder", {"type": "artifact", "stage": "ingest", "path": "out/index.csv"})
        """
        message = AgentMessage(content=content, sender=self.name, recipient=recipient)
        await self.message_bus.send_message(message)

    async def receive_message(self) -> AgentMessage:
        return await self.message_bus.receive_message(self.name)

    async def handle_messages(self):
        """Processes every queued message in order and sends any replies over the bus."""
        while self.message_bus.pending(self.name):
            message = await self.receive_message()
            reply = await self.process_message(message)
            if reply is not None:
                await self.message_bus.send_message(reply)

    async def publish_artifact(self, stage: str, path: Path):
        await self.send_message(MANIFEST_AGENT, {"type": "artifact", "stage": stage, "path": str(path)})

    async def write_table(self, stage: str, frame: pd.DataFrame, state: PipelineState, filename: str) -> Path:
        """Writes a CSV into the run's output directory and announces it."""
        path = state.out_dir / filename
        write_frame(frame, path)
        await self.publish_artifact(stage, path)
        return path

