import logging
from typing import Any, Dict

import pandas as pd

from azcb import CostModel
from panel import build_panel, cost_sensitivity, histogram_frame, run_panel, t_test
from utils.errors import ConfigError
from .agent_base import AgentBase, PipelineState


class PanelAgent(AgentBase):
    """
    Runs the cross-section of extreme-maturity contracts and the one-sided
    t-test of the mean FLVR, plus the transaction-cost sweep.
    """
    capabilities = {
        "panel": "Hedge every monthly AZCB of the panel and aggregate the outcomes",
        "test": "Test H0: mu = 0 against mu > 0 on the panel FLVRs",
    }

    async def run(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        if stage == "panel":
            return await self.run_panel(stage, state)
        if stage == "test":
            return await self.run_test(stage, state)
        raise ConfigError(f"{self.name} cannot run stage '{stage}'")

    async def run_panel(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        settings = self.config.panel
        spec = build_panel(
            state.discounted,
            state.tau_estimate.trendline,
            terms=settings.terms,
            costs=CostModel.from_bp(settings.cost_bp),
            window=settings.window,
            reference_count=settings.reference_count,
        )
        result = run_panel(
            spec, state.discounted, state.tau_path,
            workers=self.config.workers,
            chunk_size=settings.chunk_size,
            fraction_source=settings.fraction_source,
            bins=settings.bins,
        )
        state.panel_spec, state.panel = spec, result

        await self.write_table(stage, result.to_frame(), state, "panel.csv")
        await self.write_table(stage, histogram_frame(result.flvr_histogram), state, "flvr_histogram.csv")
        await self.write_table(stage, histogram_frame(result.error_histogram), state, "error_histogram.csv")
        summary = result.summary()
        if settings.reference_count is not None:
            summary["reference_count"] = settings.reference_count
        return summary

    async def run_test(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        if state.panel is None:
            await self.run_panel("panel", state)
        settings = self.config.panel
        report = t_test(state.panel, settings.alpha)
        state.report = report
        await self.write_table(stage, pd.DataFrame([report.to_dict()]), state, "test_report.csv")

        summary = report.to_dict()
        if settings.sensitivity_bp:
            rows = cost_sensitivity(
                state.panel_spec, state.discounted, state.tau_path,
                settings.sensitivity_bp, settings.alpha,
                workers=self.config.workers,
                chunk_size=settings.chunk_size,
                fraction_source=settings.fraction_source,
            )
            frame = pd.DataFrame([vars(r) for r in rows])
            await self.write_table(stage, frame, state, "cost_sensitivity.csv")
            summary["cost_sensitivity"] = frame.to_dict(orient="records")
            logging.info(f"Cost sweep over {len(rows)} level(s) written.")
        return summary
