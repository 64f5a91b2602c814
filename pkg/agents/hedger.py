from typing import Any, Dict

from azcb import CostModel, make_contract, run_hedge
from .agent_base import AgentBase, PipelineState


class HedgeAgent(AgentBase):
    """
    Runs the single-contract experiment. Without configured dates the AZCB
    starts where the fit window ends and matures on the last observation.
    """
    capabilities = {"hedge": "Price and hedge one AZCB and write its ledger"}

    async def run(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        settings = self.config.hedge
        S, line = state.discounted, state.tau_estimate.trendline
        start = settings.start if settings.start is not None else line.fit_window[1]
        maturity = settings.maturity if settings.maturity is not None else len(S) - 1
        contract = make_contract(S.dates, start, maturity, line)
        ledger = run_hedge(
            contract, S, state.tau_path,
            costs=CostModel.from_bp(settings.cost_bp),
            fraction_source=settings.fraction_source,
        )
        state.ledger = ledger
        await self.write_table(stage, ledger.to_frame(), state, "hedge_ledger.csv")
        return ledger.summary()
