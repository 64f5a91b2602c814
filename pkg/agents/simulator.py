from typing import Any, Dict

import pandas as pd

from mmm_sim import (
    benchmarked_drift_zscore,
    convergence_frame,
    hedge_convergence_experiment,
    mc_zcb_price,
    simulate_paths,
)
from .agent_base import AgentBase, PipelineState


class SimulationAgent(AgentBase):
    """
    Checks the closed-form ZCB price against exact minimal-market-model
    paths and measures how the hedge error shrinks with the rebalancing step.
    """
    capabilities = {"simulate": "Monte-Carlo ZCB oracle, hedge convergence and path samples"}

    async def run(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        settings = self.config.sim
        workers = self.config.workers

        oracle_paths = simulate_paths(settings.oracle, workers=workers)
        oracle = mc_zcb_price(oracle_paths, settings.oracle.s0, 0.0, float(oracle_paths.times[-1]))
        await self.write_table(stage, pd.DataFrame([oracle.to_dict()]), state, "oracle_report.csv")

        rows = hedge_convergence_experiment(settings.convergence, settings.convergence_steps)
        await self.write_table(stage, convergence_frame(rows), state, "convergence.csv")

        finest = settings.convergence.model_copy(
            update={"step": settings.convergence_steps[-1], "n_paths": settings.path_sample}
        )
        sample = simulate_paths(finest)
        await self.write_table(stage, sample.to_frame(settings.path_sample), state, "sim_paths.csv")

        summary: Dict[str, Any] = {
            "oracle": oracle.to_dict(),
            "convergence": convergence_frame(rows).to_dict(orient="records"),
        }
        if settings.drift_check:
            summary["benchmarked_drift_z"] = benchmarked_drift_zscore(
                settings.convergence.model_copy(update={"step": settings.convergence_steps[-1]})
            )
        return summary
