from typing import Any, Dict

from activity_time import activity_time, estimate_initial_tau, first_half_window, trend_frame
from .agent_base import AgentBase, PipelineState


class ActivityTimeAgent(AgentBase):
    """Estimates tau0 on the first half of the sample and writes the activity time with its trend."""
    capabilities = {"fit": "Estimate the initial activity time and the linear trendline"}

    async def run(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        S = state.discounted
        window = first_half_window(len(S))
        estimate = estimate_initial_tau(S, window, self.config.tau_search)
        path = activity_time(S, estimate.tau0)
        state.tau_estimate, state.tau_path = estimate, path

        await self.write_table(stage, trend_frame(path, estimate.trendline), state, "activity_time.csv")
        line = estimate.trendline
        return {
            "tau0": estimate.tau0,
            "intercept": line.intercept,
            "slope": line.slope,
            "r_squared": line.r_squared,
            "fit_end": str(S.dates[window[1]].date()),
            "at_bracket_edge": estimate.at_boundary,
        }
