"""Requests, vehicles, stops, and the cost model shared by all planners.

Times are seconds from the start of the run (floats).  A request's service
window is fixed at submission: pickup no later than ``request_time +
max_wait``, dropoff no later than ``request_time + direct_time + max_delay``.
Both deadlines are inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .errors import InternalError

# request lifecycle states
PENDING = "pending"      # submitted, not yet matched
ASSIGNED = "assigned"    # matched to a vehicle, not yet picked up
ONBOARD = "onboard"      # picked up; the serving vehicle is now immutable for it
COMPLETED = "completed"
REJECTED = "rejected"    # window expired before pickup

_TRANSITIONS = {
    PENDING: {ASSIGNED, REJECTED},
    ASSIGNED: {ONBOARD, PENDING, REJECTED},
    ONBOARD: {COMPLETED},
    COMPLETED: set(),
    REJECTED: set(),
}


@dataclass
class Request:
    """One trip request; virtual requests (probabilistic demand) reuse the type."""

    id: int
    origin: int
    destination: int
    request_time: float
    direct_time: float          # network shortest-path time origin -> destination
    max_wait: float             # pickup slack, seconds
    max_delay: float            # total-delay budget, seconds (>= max_wait)
    state: str = PENDING
    assigned_vehicle: Optional[int] = None
    pickup_time: Optional[float] = None
    dropoff_time: Optional[float] = None
    is_virtual: bool = False
    probability: float = 1.0    # P(request materializes); 1 for real requests

    def __post_init__(self):
        if self.origin == self.destination:
            raise InternalError(f"request {self.id}: origin equals destination")
        if not self.max_wait > 0:
            raise InternalError(f"request {self.id}: max_wait must be positive")
        if self.max_delay < self.max_wait:
            raise InternalError(f"request {self.id}: max_delay < max_wait")

    @property
    def latest_pickup(self) -> float:
        return self.request_time + self.max_wait

    @property
    def latest_dropoff(self) -> float:
        return self.request_time + self.direct_time + self.max_delay

    def _move(self, new_state: str) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise InternalError(
                f"request {self.id}: illegal transition {self.state} -> {new_state}"
            )
        self.state = new_state

    def mark_assigned(self, vehicle_id: int) -> None:
        if self.state != ASSIGNED:
            self._move(ASSIGNED)
        self.assigned_vehicle = vehicle_id

    def revert_to_pending(self) -> None:
        self._move(PENDING)
        self.assigned_vehicle = None

    def mark_onboard(self, time: float) -> None:
        self._move(ONBOARD)
        self.pickup_time = time

    def mark_completed(self, time: float) -> None:
        self._move(COMPLETED)
        self.dropoff_time = time

    def mark_rejected(self) -> None:
        self._move(REJECTED)
        self.assigned_vehicle = None


@dataclass(frozen=True)
class Stop:
    """A route waypoint: pick up or drop off one request at a node."""

    request_id: int
    node: int
    is_pickup: bool

    def key(self):
        # dropoffs order after pickups of the same request id
        return (0 if self.is_pickup else 1, self.request_id)


@dataclass
class VehicleState:
    """Position and plan of one vehicle.

    ``loc`` is the node the vehicle will next occupy (vehicles are snapped to
    nodes); ``position_time`` is the earliest time it can depart that node.
    A mid-edge vehicle therefore has position_time in the future.
    """

    id: int
    capacity: int
    loc: int
    position_time: float = 0.0
    onboard: list = field(default_factory=list)          # request ids, pickup order
    route: list = field(default_factory=list)            # list[Stop], committed plan
    rebalance_target: Optional[int] = None

    @property
    def is_idle(self) -> bool:
        return not self.route and not self.onboard and self.rebalance_target is None

    @property
    def seats_free(self) -> int:
        return self.capacity - len(self.onboard)

    def copy(self) -> "VehicleState":
        return replace(
            self,
            onboard=list(self.onboard),
            route=list(self.route),
        )


@dataclass(frozen=True)
class CostParams:
    """Weights of the dispatch objective: total delay plus unserved penalties."""

    unserved_penalty: float

    @classmethod
    def for_windows(cls, max_wait: float, max_delay: float) -> "CostParams":
        # large enough that serving any feasible request beats ignoring it
        return cls(unserved_penalty=10.0 * (max_wait + max_delay))


def waiting_time(req: Request) -> float:
    if req.pickup_time is None:
        raise InternalError(f"request {req.id} has no pickup time")
    return req.pickup_time - req.request_time


def total_delay(req: Request) -> float:
    """Delay at dropoff versus an immediate direct ride (includes waiting)."""
    if req.dropoff_time is None:
        raise InternalError(f"request {req.id} has no dropoff time")
    return req.dropoff_time - (req.request_time + req.direct_time)


def scheduled_delay(dropoff_time: float, req: Request) -> float:
    """Same as total_delay but for a planned (not yet realized) dropoff."""
    return dropoff_time - (req.request_time + req.direct_time)


def system_cost(
    served: Iterable[Request], unserved_count: int, params: CostParams
) -> float:
    """Planning objective: accumulated delays plus a penalty per ignored request."""
    return sum(total_delay(r) for r in served) + params.unserved_penalty * unserved_count
