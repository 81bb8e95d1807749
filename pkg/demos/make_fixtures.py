"""Write the small exact-oracle fixtures to ../fixtures as JSON.

Run from anywhere; the output directory is resolved relative to this file.
"""

import json
from pathlib import Path

import numpy as np

from otx.core import CostSpec
from otx.oracle_exact import (
    DiscreteSpace,
    claim42_instance,
    fixture_to_json,
    remark40_instance,
    remark41_instance,
)

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def correlated_chain():
    """Three symbols in {0, 1, 2} that like to stay close to their
    neighbour, with a tilt towards 2 in the last coordinate."""
    a = np.arange(3.0)
    w = np.exp(-np.subtract.outer(a, a) ** 2)
    table = np.einsum("i,ij,jk,k->ijk", [0.5, 0.3, 0.2], w, w, [1.0, 1.5, 2.0])
    uniform = [(a, np.full(3, 1 / 3))] * 3
    mu = DiscreteSpace.product(uniform)
    nu = DiscreteSpace([a] * 3, table / table.sum())
    return mu, nu, CostSpec.lp(1)


def main():
    OUT.mkdir(exist_ok=True)
    mu, nu = claim42_instance(3, 2.0**-3)
    fixtures = {
        "claim42_n3.json": (mu, nu, CostSpec.hamming()),
        "remark40.json": remark40_instance(),
        "remark41.json": remark41_instance(),
        "finite_correlated.json": correlated_chain(),
    }
    for name, (mu, nu, cost) in fixtures.items():
        path = OUT / name
        path.write_text(json.dumps(fixture_to_json(mu, nu, cost), indent=2, sort_keys=True) + "\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
