#!/usr/bin/env python3
"""Regenerate the derived fixtures from the primary ones.

fixtures/table2.csv and fixtures/expected_groups.json are primary data and
never touched here. Derived artifacts:

  fixtures/table2_oracle.csv  coalition table holding exactly the coalitions
                              a drop sweep queries (full set + each N\\{j}),
                              reconstructed from the drop fixture
  fixtures/synthetic17.json   block-structured synthetic oracle config whose
                              recovery mass stays within the expected groups
"""

import json
from pathlib import Path

from kpshap import (
    Grouping,
    default_schema,
    oracle_table_from_delta,
    read_delta_csv,
    write_oracle_table,
)

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def make_oracle_table() -> None:
    schema, _ = default_schema()
    delta = read_delta_csv(FIXTURES / "table2.csv", schema)
    table = oracle_table_from_delta(delta)
    write_oracle_table(FIXTURES / "table2_oracle.csv", schema, table)
    print(f"wrote {FIXTURES / 'table2_oracle.csv'} ({len(table)} coalitions)")


def make_synthetic_config() -> None:
    schema, _ = default_schema()
    grouping = Grouping.from_json(FIXTURES / "expected_groups.json", schema)
    n = schema.n
    base = [round(0.6 + 0.02 * i, 2) for i in range(n)]
    recovery = [[0.0] * n for _ in range(n)]
    for members in grouping.groups:
        share = round(0.8 / (len(members) - 1), 10)
        for i in members:
            for j in members:
                if i != j:
                    recovery[i][j] = share
    doc = {"base": base, "recovery": recovery, "noise_sd": 0.05}
    path = FIXTURES / "synthetic17.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    make_oracle_table()
    make_synthetic_config()
