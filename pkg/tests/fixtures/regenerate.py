"""Regenerate the pinned phi(0) fixtures.

Values come from Newton shooting and are written only when the fixed-step and
adaptive integrators agree to 1e-8.
"""
from __future__ import annotations

from pathlib import Path

from lqmfg import __version__
from lqmfg.oracle import write_fixture
from lqmfg.scenarios import load_scenario

FILES = {
    "tanh-crowd-degenerate": "oracle_phi.csv",
    "linear-degenerate": "oracle_phi_linear.csv",
    "coupled-2": "oracle_phi_coupled.csv",
}
ETAS = (-1.0, 0.0, 1.0)


def main() -> None:
    here = Path(__file__).parent
    for name, fname in FILES.items():
        write_fixture(here / fname, name, load_scenario(name).general, 0.0, ETAS,
                      meta=f"scenario={name} t0=0 steps=1000 version={__version__}")


if __name__ == "__main__":
    main()
