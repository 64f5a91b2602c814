from asyncio import Queue
from typing import Dict, List
from agents.agent_base import AgentBase, AgentMessage


class MessageBus:
    """
    A message bus for asynchronous communication between agents.

    The pipeline driver sends each stage agent a "run" message and waits for
    its "done" reply. Stage agents announce every file they write with an
    "artifact" message to the manifest agent, which drains its queue at the
    end of the run.

    Attributes:
        queues (Dict[str, Queue]): A dictionary mapping agent names to their message queues.

    Example:
        message_bus = MessageBus()
        message_bus.register_agent(recorder)
        await message_bus.send_message(AgentMessage({"type": "artifact", "stage": "fit", "path": p}, "estimator", "recorder"))
    """

    def __init__(self):
        self.queues: Dict[str, Queue] = {}

    def register_agent(self, agent: AgentBase):
        """
        Register an agent with the message bus; this creates its message queue.
        """
        self.open_queue(agent.name)

    def open_queue(self, name: str):
        """Creates a mailbox for a participant that is not an agent, such as the pipeline driver."""
        self.queues[name] = Queue()

    async def send_message(self, message: AgentMessage):
        """
        Adds the message to the recipient's queue.

        Raises:
            KeyError: if the recipient was never registered.
        """
        if message.recipient not in self.queues:
            raise KeyError(f"No agent named '{message.recipient}' is registered on the message bus")
        await self.queues[message.recipient].put(message)

    async def receive_message(self, agent_name: str) -> AgentMessage:
        """
        Waits for and returns the next message for an agent.

        Example:
            message = await message_bus.receive_message("recorder")
        """
        return await self.queues[agent_name].get()

    def pending(self, agent_name: str) -> int:
        return self.queues[agent_name].qsize()

    def drain(self, agent_name: str) -> List[AgentMessage]:
        """Removes and returns every queued message of an agent without waiting."""
        queue = self.queues[agent_name]
        messages = []
        while not queue.empty():
            messages.append(queue.get_nowait())
        return messages
