import argparse
import asyncio
import logging
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from agent_registry import AgentRegistry
from agents import (
    ActivityTimeAgent,
    AgentBase,
    AgentMessage,
    HedgeAgent,
    IngestAgent,
    ManifestAgent,
    PanelAgent,
    PipelineState,
    SimulationAgent,
)
from config import RunConfig, load_run_config
from message_bus import MessageBus
from utils.errors import FLVRError

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

# Mailbox of the pipeline driver on the message bus
DRIVER = "pipeline"

# Stages each command runs, in order
PIPELINES: Dict[str, List[str]] = {
    "ingest": ["ingest"],
    "fit": ["ingest", "fit"],
    "hedge": ["ingest", "fit", "hedge"],
    "panel": ["ingest", "fit", "panel"],
    "test": ["ingest", "fit", "panel", "test"],
    "simulate": ["simulate"],
}


async def dispatch(message_bus: MessageBus, agent: AgentBase, stage: str, state: PipelineState) -> Dict[str, Any]:
    """Sends a run request to the agent, lets it work through its queue and returns the summary it replies with."""
    await message_bus.send_message(AgentMessage({"type": "run", "stage": stage, "state": state}, DRIVER, agent.name))
    await agent.handle_messages()
    reply = await message_bus.receive_message(DRIVER)
    return reply.content["summary"]


async def run_pipeline(config: RunConfig, command: str) -> PipelineState:
    """
    Builds the agents, runs the command's stages one after the other and
    finally lets the manifest agent write summary.json and manifest.json.
    """
    out_dir = config.prepare_out()
    registry = AgentRegistry()
    message_bus = MessageBus()
    agents = [
        IngestAgent("ingestor", config, message_bus, registry),
        ActivityTimeAgent("estimator", config, message_bus, registry),
        HedgeAgent("hedger", config, message_bus, registry),
        PanelAgent("panel_analyst", config, message_bus, registry),
        SimulationAgent("simulator", config, message_bus, registry),
        ManifestAgent("recorder", config, message_bus, registry, command=command),
    ]
    for agent in agents:
        message_bus.register_agent(agent)
    message_bus.open_queue(DRIVER)
    logging.debug(f"Agents: {registry.describe_all_agents()}")

    state = PipelineState(out_dir=out_dir)
    for stage in PIPELINES[command]:
        agent = registry.agent_for(stage)
        logging.info(f"Stage '{stage}' -> {agent.name}")
        state.summary[stage] = await dispatch(message_bus, agent, stage, state)
    await dispatch(message_bus, registry.agent_for("record"), "record", state)
    logging.info(f"Run '{command}' finished; outputs in {out_dir}.")
    return state


def cmd_ingest(config: RunConfig) -> PipelineState:
    return asyncio.run(run_pipeline(config, "ingest"))


def cmd_fit(config: RunConfig) -> PipelineState:
    return asyncio.run(run_pipeline(config, "fit"))


def cmd_hedge(config: RunConfig) -> PipelineState:
    return asyncio.run(run_pipeline(config, "hedge"))


def cmd_panel_test(config: RunConfig, with_test: bool = True) -> PipelineState:
    return asyncio.run(run_pipeline(config, "test" if with_test else "panel"))


def cmd_simulate(config: RunConfig) -> PipelineState:
    return asyncio.run(run_pipeline(config, "simulate"))


COMMANDS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "hedge": cmd_hedge,
    "panel": lambda config: cmd_panel_test(config, with_test=False),
    "test": cmd_panel_test,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--index", help="Total-return index CSV")
    common.add_argument("--rates", help="3-month T-bill discount-rate CSV")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--workers", type=int, help="ray workers (1 runs in-process)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(prog="flvr", description="FLVR backtesting and minimal-market-model simulation")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("ingest", parents=[common], help="Build the savings account and discounted index")
    commands.add_parser("fit", parents=[common], help="Estimate tau0 and the activity-time trendline")

    hedge = commands.add_parser("hedge", parents=[common], help="Hedge one AZCB")
    hedge.add_argument("--start", help="Initiation date (snapped forward to the next observation)")
    hedge.add_argument("--maturity", help="Maturity date (snapped forward to the next observation)")
    hedge.add_argument("--cost-bp", type=float, help="Proportional transaction costs in basis points")
    hedge.add_argument("--fraction-source", choices=["portfolio", "price"])

    for name, text in (("panel", "Hedge the contract panel"), ("test", "Panel plus the one-sided t-test")):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument("--term-min-months", type=int)
        sub.add_argument("--term-max-months", type=int)
        sub.add_argument("--cost-bp", type=float)
        sub.add_argument("--alpha", type=float)
        sub.add_argument("--fraction-source", choices=["portfolio", "price"])

    simulate = commands.add_parser("simulate", parents=[common], help="Monte-Carlo oracle and hedge convergence")
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--paths", type=int, help="Paths of the ZCB oracle")
    simulate.add_argument("--step", type=float, help="Step (years) of the ZCB oracle simulation")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested config values given on the command line; unset flags are None."""
    flag = lambda name: getattr(args, name, None)
    overrides: Dict[str, Any] = {
        "index": flag("index"),
        "rates": flag("rates"),
        "out": flag("out"),
        "workers": flag("workers"),
        "log_level": flag("log_level"),
    }
    if args.command == "hedge":
        overrides["hedge"] = {
            "start": flag("start"),
            "maturity": flag("maturity"),
            "cost_bp": flag("cost_bp"),
            "fraction_source": flag("fraction_source"),
        }
    if args.command in ("panel", "test"):
        overrides["panel"] = {
            "terms": {"min_months": flag("term_min_months"), "max_months": flag("term_max_months")},
            "cost_bp": flag("cost_bp"),
            "alpha": flag("alpha"),
            "fraction_source": flag("fraction_source"),
        }
    if args.command == "simulate":
        overrides["sim"] = {
            "oracle": {"seed": flag("seed"), "n_paths": flag("paths"), "step": flag("step")},
            "convergence": {"seed": flag("seed")},
        }
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point. Returns the process exit code: 0 success, 1 data error,
    2 configuration error, 3 numerical failure.
    """
    load_dotenv()
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    args = build_parser().parse_args(argv)

    try:
        config = load_run_config(args.config, overrides_from_args(args))
        logging.getLogger().setLevel(config.log_level)
        COMMANDS[args.command](config)
    except FLVRError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
