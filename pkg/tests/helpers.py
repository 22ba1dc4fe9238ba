"""Shared test utilities: random scenario generation."""

from __future__ import annotations

import random

from gridepi.scenario import ScenarioConfig, parse_scenario


def random_scenario_text(
    rng: random.Random,
    max_dim: int = 6,
    randomize_params: bool = True,
) -> str:
    """Build a small random but always-valid scenario text."""
    while True:
        width = rng.randint(2, max_dim)
        height = rng.randint(2, max_dim)
        rows = []
        persons = 0
        walkable = 0
        for _ in range(height):
            row = []
            for _ in range(width):
                if rng.random() < 0.18:
                    row.append("#")
                    continue
                walkable += 1
                if rng.random() < 0.3:
                    row.append(rng.choice("SSSIIERV"))
                    persons += 1
                else:
                    row.append(".")
            rows.append("".join(row))
        if walkable == 0 or persons == 0:
            continue
        text = "[grid]\n" + "\n".join(rows) + "\n"
        if randomize_params:
            text += (
                "\n[params]\n"
                f"beta={round(rng.uniform(0.1, 1.0), 3)}\n"
                f"sigma={round(rng.uniform(0.0, 1.0), 3)}\n"
                f"mu={round(rng.uniform(0.0, 1.0), 3)}\n"
                f"p_mv={round(rng.uniform(0.0, 1.0), 3)}\n"
                f"infected_persistence={round(rng.uniform(0.0, 0.95), 3)}\n"
            )
        return text


def random_scenario(rng: random.Random, **kwargs) -> ScenarioConfig:
    return parse_scenario(random_scenario_text(rng, **kwargs))
