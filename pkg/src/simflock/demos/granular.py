"""Granular column-collapse proxy with Cam-Clay admissibility screening.

A column of material (radius 0.1 m, height 0.4 m) collapses into a cone at
the angle of repose theta = atan(mu_s). Conserving volume,

    V = pi r0^2 h0,   r = (3 V / (pi tan theta))^(1/3),   h = r tan theta.

Configurations with kappa >= lambda (Modified Cam-Clay compression /
swelling indices) are physically inadmissible and are rejected before any
computation or output. Density, Young's modulus, and Poisson's ratio are
accepted and logged to the snapshot header but do not move the proxy
outputs; they exist so studies can sweep the full six-parameter space.

Each completed trial writes a small cone-profile CSV snapshot into the
directory named by the optional OUT_DIR config entry.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Iterator

from ..protocol import Done, ErrorMsg, Rejected, SimMessage, SimRequest
from ._runner import number, run_simulator

COLUMN_RADIUS = 0.1  # m
COLUMN_HEIGHT = 0.4  # m
PROFILE_SAMPLES = 33


def granular_metrics(mu_s: float) -> dict[str, float]:
    if mu_s <= 0:
        raise ValueError(f"mu_s must be positive, got {mu_s}")
    tan_theta = mu_s
    volume = math.pi * COLUMN_RADIUS**2 * COLUMN_HEIGHT
    radius = (3.0 * volume / (math.pi * tan_theta)) ** (1.0 / 3.0)
    return {"pile_radius": radius, "pile_height": radius * tan_theta}


def write_snapshot(path: Path, trial_id: int, metrics: dict[str, float],
                   rho: float, e_mod: float, nu: float) -> None:
    radius = metrics["pile_radius"]
    height = metrics["pile_height"]
    lines = [
        f"# trial {trial_id}",
        f"# rho={rho!r} E={e_mod!r} nu={nu!r}",
        "r,z",
    ]
    for i in range(PROFILE_SAMPLES):
        x = radius * i / (PROFILE_SAMPLES - 1)
        z = height * (1.0 - x / radius)
        lines.append(f"{x:.9g},{z:.9g}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def handle(request: SimRequest) -> Iterator[SimMessage]:
    config = request.config
    try:
        mu_s = number(config, "mu_s")
        rho = number(config, "rho")
        lam = number(config, "lambda")
        kappa = number(config, "kappa")
        e_mod = number(config, "E")
        nu = number(config, "nu")
    except TypeError as exc:
        yield ErrorMsg(str(exc))
        return

    if kappa >= lam:
        yield Rejected(reason="kappa >= lambda")
        return

    try:
        metrics = granular_metrics(mu_s)
    except ValueError as exc:
        yield ErrorMsg(str(exc))
        return

    out_dir = config.get("OUT_DIR")
    if isinstance(out_dir, str) and out_dir:
        try:
            write_snapshot(
                Path(out_dir) / f"trial_{request.trial_id:05d}.csv",
                request.trial_id, metrics, rho, e_mod, nu,
            )
        except OSError as exc:
            yield ErrorMsg(f"snapshot write failed: {exc}")
            return
    yield Done(metrics=metrics)


def main() -> None:
    sys.exit(run_simulator(handle))


if __name__ == "__main__":
    main()
