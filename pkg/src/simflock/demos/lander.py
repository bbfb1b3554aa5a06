"""Lunar-lander honeycomb impact model (closed form).

Four legs, each with a constant-yield-force crush element, arrest a lander
touching down vertically. The effective arresting force is

    F = n_legs * f_y * cos(alpha2) * cos(beta)

with alpha2 the strut inclination angle and beta the leg spread angle.
A landing arrests only when F exceeds lunar weight m*g; the crush stroke
then follows from energy balance at constant deceleration:

    a = F/m - g,   s = v0^2 / (2 a),   energy = F * s.

Non-arresting parameter combinations return sentinel metrics
(peak_accel = g, energy_absorbed = 0) instead of erroring, so estimation
studies score them as poor rather than crashed.
"""

from __future__ import annotations

import math
import sys
from typing import Iterator

from ..protocol import Done, ErrorMsg, Report, SimMessage, SimRequest
from ._runner import number, run_simulator

MASS = 300.0  # kg
TOUCHDOWN_SPEED = 2.0  # m/s
N_LEGS = 4
LUNAR_G = 1.62  # m/s^2


def lander_metrics(beta: float, alpha2: float, f_y: float) -> dict[str, float]:
    """Closed-form impact metrics; raises ValueError outside the valid region."""
    for name, angle in (("beta", beta), ("alpha2", alpha2)):
        if not 0.0 <= angle < math.pi / 2:
            raise ValueError(f"{name} must lie in [0, pi/2), got {angle}")
    if f_y <= 0:
        raise ValueError(f"f_y must be positive, got {f_y}")
    force = N_LEGS * f_y * math.cos(alpha2) * math.cos(beta)
    if force <= MASS * LUNAR_G:
        return {"peak_accel": LUNAR_G, "energy_absorbed": 0.0}
    peak_accel = force / MASS
    decel = peak_accel - LUNAR_G
    stroke = TOUCHDOWN_SPEED**2 / (2.0 * decel)
    return {"peak_accel": peak_accel, "energy_absorbed": force * stroke}


def handle(request: SimRequest) -> Iterator[SimMessage]:
    try:
        beta = number(request.config, "beta")
        alpha2 = number(request.config, "alpha2")
        f_y = number(request.config, "f_y")
    except TypeError as exc:
        yield ErrorMsg(str(exc))
        return
    try:
        metrics = lander_metrics(beta, alpha2, f_y)
    except ValueError as exc:
        yield ErrorMsg(str(exc))
        return
    steps = request.report_steps or 0
    for k in range(1, steps + 1):
        # synthetic checkpoints: the partial-crush acceleration ramp
        yield Report(step=k, metrics={"peak_accel": metrics["peak_accel"] * k / steps})
    yield Done(metrics=metrics)


def main() -> None:
    sys.exit(run_simulator(handle))


if __name__ == "__main__":
    main()
