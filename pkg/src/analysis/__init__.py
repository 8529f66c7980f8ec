"""
Complexity and locality analysis of the attention blocks.
"""

from src.analysis.attention_cost import (
    CostReport,
    SelfAttention2d,
    count_costs,
    dependence_test,
    format_table,
    measure_costs,
    write_csv,
)

__all__ = [
    "CostReport",
    "SelfAttention2d",
    "count_costs",
    "dependence_test",
    "format_table",
    "measure_costs",
    "write_csv",
]
