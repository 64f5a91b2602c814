import logging
from typing import Any, Dict

from market_data import SeriesRole, align_rates, build_savings_account, discount_index, load_series
from .agent_base import AgentBase, PipelineState


class IngestAgent(AgentBase):
    """
    Loads the index and T-bill files, rolls the savings account and
    discounts the index by it.
    """
    capabilities = {"ingest": "Build the savings account and the discounted index from the input CSVs"}

    async def run(self, stage: str, state: PipelineState) -> Dict[str, Any]:
        self.config.require_inputs()
        index = load_series(self.config.index, self.config.index_schema, SeriesRole.INDEX)
        rates = load_series(self.config.rates, self.config.rates_schema, SeriesRole.RATE)
        aligned, carried = align_rates(rates, index)
        account = build_savings_account(aligned)
        discounted = discount_index(index, account)
        state.index, state.rates, state.account, state.discounted = index, aligned, account, discounted

        await self.write_table(stage, index.to_frame(), state, "index.csv")
        await self.write_table(stage, aligned.to_frame(), state, "rates_on_grid.csv")
        await self.write_table(stage, account.to_frame(), state, "savings_account.csv")
        await self.write_table(stage, discounted.to_frame(), state, "discounted_index.csv")

        logging.info(
            f"Discounted index spans {discounted.dates[0].date()} to {discounted.dates[-1].date()} "
            f"({len(discounted)} observations)."
        )
        return {
            "observations": len(discounted),
            "first_date": str(discounted.dates[0].date()),
            "last_date": str(discounted.dates[-1].date()),
            "skipped_index_rows": index.skipped,
            "skipped_rate_rows": rates.skipped,
            "carried_forward_rates": carried,
            "dropped_index_dates": discounted.join.dropped_left,
            "savings_account_final": float(account.values[-1]),
        }
