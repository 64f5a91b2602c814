from typing import Any, Dict, List

from utils.errors import ConfigError


class AgentRegistry:
    """
    A registry for managing agents and their capabilities.

    The command line looks up the agent that runs a stage by capability
    ("ingest", "fit", "hedge", "panel", "test", "simulate", "record").

    Attributes:
        agents (Dict[str, Any]): A dictionary mapping agent names to agent instances.
        capabilities (Dict[str, Dict[str, str]]): Agent name -> capability -> description.

    Example:
        registry = AgentRegistry()
        registry.register_agent("hedger", hedger)
        registry.register_agent_capability("hedger", "hedge", "Price and hedge one AZCB")
    """

    def __init__(self):
        self.agents: Dict[str, Any] = {}
        self.capabilities: Dict[str, Dict[str, str]] = {}

    def register_agent(self, name: str, agent: Any):
        self.agents[name] = agent

    def register_agent_capability(self, agent_name: str, capability: str, description: str):
        """
        Register a capability for a specific agent.

        Args:
            agent_name (str): The name of the agent.
            capability (str): The capability being registered.
            description (str): A description of the capability.
        """
        if agent_name not in self.capabilities:
            self.capabilities[agent_name] = {}
        self.capabilities[agent_name][capability] = description

    def describe_all_agents(self) -> Dict[str, str]:
        """
        Returns:
            Dict[str, str]: A dictionary mapping agent names to their class names.
        """
        return {name: agent.__class__.__name__ for name, agent in self.agents.items()}

    def get_agents_with_capability(self, capability: str) -> List[str]:
        """
        Get a list of agents that have a specific capability, in registration order.

        Example:
            registry.get_agents_with_capability("panel")   # ["panel_analyst"]
        """
        return [agent for agent, caps in self.capabilities.items() if capability in caps]

    def agent_for(self, capability: str) -> Any:
        """
        The first agent registered for a capability.

        Raises:
            ConfigError: if no agent offers it.
        """
        names = self.get_agents_with_capability(capability)
        if not names:
            raise ConfigError(f"No agent is registered for '{capability}'")
        return self.agents[names[0]]
