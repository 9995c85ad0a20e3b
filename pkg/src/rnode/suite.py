"""Bundled synthetic scenarios: the 19-violation mixed suite and the speed fleet.

All scenes share one layout (meters, world +y is the traffic direction):

* two monitored lanes, x in [9, 12.5] and [12.5, 16], y in [10, 210]
* a zebra crossing at y in [150, 155], so the stop line sits at y = 150
* a divider at x in [7, 9] with an opening between y = 80 and y = 92
* an opposite carriageway at x < 7 carrying -y traffic (no lane detections)

Speed lines land at y = 60 and y = 160, 100 m apart.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .synth import SceneGeometry, ScenarioSpec, VehicleSpec, random_plate
from .trace import Scenario

LANE1_X = 10.75
LANE2_X = 14.25
OPP_FAR_X = 1.75
OPP_NEAR_X = 5.25
Y_START = 2.5
Y_END = 217.5
HALF_LEN = 2.25
CRUISE_KMH = 40.0

GEOMETRY = SceneGeometry(
    lanes=((9.0, 10.0, 12.5, 210.0), (12.5, 10.0, 16.0, 210.0)),
    zebra=(9.0, 150.0, 16.0, 155.0),
    dividers=((7.0, 10.0, 9.0, 80.0), (7.0, 92.0, 9.0, 210.0)),
    size_m=(17.0, 220.0),
    scale_px_per_m=10.0,
)

STOP_FRONT_Y = 150.0


class _Plates:
    def __init__(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def __call__(self) -> str:
        return random_plate(self.rng)


def _s_for_front(y_front: float) -> float:
    return (y_front - HALF_LEN) - Y_START


def lane_vehicle(label: str, x: float, plate: str, *, front_y: float, at_t: float, kmh: float = CRUISE_KMH,
                 stop_front: Optional[float] = None, resume_t: Optional[float] = None,
                 scripts: Sequence[str] = (), occlusions: Sequence[tuple[float, float]] = ()) -> VehicleSpec:
    """Vehicle driving +y along a lane whose front reaches ``front_y`` at ``at_t``."""
    enter = at_t - _s_for_front(front_y) / (kmh / 3.6)
    stops = ()
    if stop_front is not None:
        stops = ((_s_for_front(stop_front), resume_t),)
    return VehicleSpec(label, ((x, Y_START), (x, Y_END)), kmh, enter, stops=stops, plate=plate,
                       scripts=tuple(scripts), occlusions=tuple(occlusions))


def opposite_vehicle(label: str, plate: str, enter: float, x: float = OPP_FAR_X, kmh: float = CRUISE_KMH,
                     scripts: Sequence[str] = ()) -> VehicleSpec:
    return VehicleSpec(label, ((x, Y_END), (x, Y_START)), kmh, enter, plate=plate, scripts=tuple(scripts))


def uturn_vehicle(label: str, plate: str, enter: float, turn_kmh: float = 14.0,
                  occlusions: Sequence[tuple[float, float]] = ()) -> VehicleSpec:
    """Lane-1 vehicle that turns through the divider opening into the opposite carriageway."""
    cx, cy, r = 8.0, 83.0, LANE1_X - 8.0
    arc = [(cx + r * math.cos(th), cy + r * math.sin(th)) for th in np.linspace(0.0, math.pi, 17)]
    path = [(LANE1_X, Y_START)] + arc + [(OPP_NEAR_X, Y_START)]
    arc_start = cy - Y_START
    arc_end = arc_start + sum(math.dist(a, b) for a, b in zip(arc, arc[1:]))
    return VehicleSpec(label, tuple(path), CRUISE_KMH, enter,
                       profile=((arc_start - 20.0, turn_kmh), (arc_end, 30.0)), plate=plate,
                       scripts=("ILLEGAL_UTURN",), occlusions=tuple(occlusions))


def wrong_way_vehicle(label: str, plate: str, enter: float, kmh: float = 45.0) -> VehicleSpec:
    return VehicleSpec(label, ((LANE2_X, Y_END), (LANE2_X, Y_START)), kmh, enter, plate=plate,
                       scripts=("WRONG_WAY",))


def red_block(prefix: str, plates: _Plates, red: float, green: float, *, zebra: bool, jumps: Sequence[float],
              lane1_queue: int = 2, lane2_queue: int = 0) -> list[VehicleSpec]:
    """Traffic around one RED phase.

    Lane 1: optional stop-on-crosswalk vehicle (crosses during AMBER, halts
    on the zebra) followed by a compliant queue. Lane 2: red-light jumpers at
    ``red + offset`` and then an optional compliant queue.
    """
    out = []
    head = STOP_FRONT_Y - 1.0
    if zebra:
        out.append(lane_vehicle(f"{prefix}-zb", LANE1_X, plates(), front_y=STOP_FRONT_Y, at_t=red - 1.5,
                                stop_front=153.0, resume_t=green + 0.3, scripts=("ZEBRA_BREACH",)))
        head = 153.0 - 4.5 - 2.5
    for k in range(lane1_queue):
        front = head - 7.0 * k
        out.append(lane_vehicle(f"{prefix}-q1{k}", LANE1_X, plates(), front_y=front, at_t=red + 2.0 + 3.0 * k,
                                stop_front=front, resume_t=green + 0.7 * (k + 1)))
    for k, off in enumerate(jumps):
        out.append(lane_vehicle(f"{prefix}-sj{k}", LANE2_X, plates(), front_y=STOP_FRONT_Y, at_t=red + off,
                                scripts=("SIGNAL_JUMP",)))
    last = max(jumps, default=0.0)
    for k in range(lane2_queue):
        front = STOP_FRONT_Y - 1.0 - 7.0 * k
        out.append(lane_vehicle(f"{prefix}-q2{k}", LANE2_X, plates(), front_y=front,
                                at_t=red + last + 3.0 + 3.0 * k, stop_front=front, resume_t=green + 0.7 * (k + 1)))
    return out


def warmup(prefix: str, plates: _Plates, times: Sequence[float]) -> list[VehicleSpec]:
    out = []
    for k, t in enumerate(times):
        x = LANE1_X if k % 2 == 0 else LANE2_X
        out.append(VehicleSpec(f"{prefix}-w{k}", ((x, Y_START), (x, Y_END)), CRUISE_KMH, t, plate=plates()))
    return out


def _plan(reds: Sequence[float], red_len: float = 15.0) -> tuple[tuple[float, str], ...]:
    plan = [(0.0, "GREEN")]
    for r in reds:
        plan += [(r - 3.0, "AMBER"), (r, "RED"), (r + red_len, "GREEN")]
    return tuple(plan)


def suite_specs(occluded: bool = False, frame_rate: float = 30.0) -> list[ScenarioSpec]:
    """Three scenes, 19 scripted violations in total.

    Scene 1: 2 U-turns. Scene 2: 2 U-turns, 3 signal jumps, 1 crosswalk stop,
    1 wrong-way. Scene 3: 1 U-turn, 5 signal jumps, 3 crosswalk stops,
    1 wrong-way. With ``occluded`` one signal jump in scene 3 is hidden for
    2 s around its crossing (longer than the tracker's max age) and one
    U-turn in scene 1 is hidden for 20 frames on its approach.
    """
    specs = []

    # scene 1
    p = _Plates(101)
    reds = (23.0, 58.0)
    v = warmup("s1", p, (0.0, 1.0, 3.5, 5.0))
    v += red_block("s1r1", p, 23.0, 38.0, zebra=False, jumps=(), lane1_queue=2, lane2_queue=2)
    v += red_block("s1r2", p, 58.0, 73.0, zebra=False, jumps=(), lane1_queue=1, lane2_queue=1)
    ut_occl = ((44.0, 44.0 + 20.0 / frame_rate),) if occluded else ()
    v.append(uturn_vehicle("s1-ut0", p(), 41.0, occlusions=ut_occl))
    v.append(uturn_vehicle("s1-ut1", p(), 76.0))
    v += [opposite_vehicle(f"s1-o{k}", p(), t) for k, t in enumerate((2.0, 12.0, 30.0, 47.0, 66.0))]
    specs.append(ScenarioSpec(GEOMETRY, tuple(v), _plan(reds), duration_s=100.0, frame_rate=frame_rate))

    # scene 2
    p = _Plates(202)
    reds = (23.0, 58.0)
    v = warmup("s2", p, (0.0, 1.5, 3.0, 4.5))
    v += red_block("s2r1", p, 23.0, 38.0, zebra=True, jumps=(1.0, 3.5), lane1_queue=2)
    v += red_block("s2r2", p, 58.0, 73.0, zebra=False, jumps=(2.0,), lane1_queue=2)
    v.append(uturn_vehicle("s2-ut0", p(), 41.0))
    v.append(uturn_vehicle("s2-ut1", p(), 76.0))
    v.append(wrong_way_vehicle("s2-ww0", p(), 68.0))
    v += [opposite_vehicle(f"s2-o{k}", p(), t) for k, t in enumerate((5.0, 20.0, 50.0))]
    specs.append(ScenarioSpec(GEOMETRY, tuple(v), _plan(reds), duration_s=100.0, frame_rate=frame_rate))

    # scene 3
    p = _Plates(303)
    reds = (23.0, 58.0, 93.0)
    v = warmup("s3", p, (0.0, 2.0, 4.0))
    sj_occl = ((22.5, 24.5),) if occluded else ()
    block = red_block("s3r1", p, 23.0, 38.0, zebra=True, jumps=(1.0, 4.0), lane1_queue=1)
    block = [replace(b, occlusions=sj_occl) if b.label == "s3r1-sj0" else b for b in block]
    v += block
    v += red_block("s3r2", p, 58.0, 73.0, zebra=True, jumps=(1.5, 4.5), lane1_queue=1)
    v += red_block("s3r3", p, 93.0, 108.0, zebra=True, jumps=(7.0,), lane1_queue=1)
    v.append(uturn_vehicle("s3-ut0", p(), 31.0))
    v.append(wrong_way_vehicle("s3-ww0", p(), 70.0, kmh=50.0))
    v += [opposite_vehicle(f"s3-o{k}", p(), t) for k, t in enumerate((8.0, 33.0, 70.0))]
    specs.append(ScenarioSpec(GEOMETRY, tuple(v), _plan(reds), duration_s=118.0, frame_rate=frame_rate))
    return specs


def speed_fleet_spec(frame_rate: float, speeds_kmh: Sequence[float], calibration_s: float = 10.0,
                     headway_s: float = 2.5, seed: int = 7) -> ScenarioSpec:
    """Vehicles of known constant speed, fastest first per lane so nobody overtakes.

    The first ``calibration_s`` seconds carry lawful warm-up traffic only.
    """
    plates = _Plates(seed)
    ordered = sorted(speeds_kmh, reverse=True)
    warm_times = (0.0, 0.5)
    vehicles = warmup("warm", plates, warm_times)
    # speed-line crossings must happen after calibration (start line at y = 60),
    # and nobody may catch up with the slower warm-up traffic
    warm_clear = max(warm_times) + (Y_END - Y_START) / (CRUISE_KMH / 3.6)
    t = max(calibration_s + 1.0, warm_clear)
    lane_t = [t, t + headway_s / 2]
    for k, v in enumerate(ordered):
        lane = k % 2
        x = LANE1_X if lane == 0 else LANE2_X
        vehicles.append(VehicleSpec(f"v{k:02d}-{v:.1f}", ((x, Y_START), (x, Y_END)), float(v), lane_t[lane],
                                    plate=plates(), scripts=("SPEEDING",) if v > 60.0 else ()))
        lane_t[lane] += headway_s
    slowest = min(ordered) / 3.6
    duration = max(lane_t) + (Y_END - Y_START) / slowest + 1.0
    return ScenarioSpec(GEOMETRY, tuple(vehicles), ((0.0, "GREEN"),), duration_s=duration, frame_rate=frame_rate)


def generate_suite(seed: int = 0, occluded: bool = False) -> list[Scenario]:
    from .synth import generate_scenario

    return [generate_scenario(spec, seed + k) for k, spec in enumerate(suite_specs(occluded))]


def dense_traffic_spec(frame_rate: float = 30.0, duration_s: float = 40.0, headway_s: float = 4.0,
                       seed: int = 11) -> ScenarioSpec:
    """Lawful two-lane traffic at cruise speed; about 10 vehicles on screen at any time."""
    plates = _Plates(seed)
    vehicles = []
    t, k = -20.0, 0
    while t < duration_s:
        for lane, x in enumerate((LANE1_X, LANE2_X)):
            vehicles.append(VehicleSpec(f"d{k:03d}-{lane}", ((x, Y_START), (x, Y_END)), CRUISE_KMH,
                                        t + lane * headway_s / 2, plate=plates()))
        t += headway_s
        k += 1
    return ScenarioSpec(GEOMETRY, tuple(vehicles), ((0.0, "GREEN"),), duration_s=duration_s, frame_rate=frame_rate)
