from .agent_base import AgentBase, AgentMessage, PipelineState
from .estimator import ActivityTimeAgent
from .hedger import HedgeAgent
from .ingestor import IngestAgent
from .panel_analyst import PanelAgent
from .recorder import ManifestAgent, RunManifest
from .simulator import SimulationAgent
