"""Problem data: users, depots, trips, time periods and modes of transport.

Holds the preference and period tables, the leg-metric helpers every graph
builder uses, a seeded synthetic generator and a line-oriented text format.

Text format
-----------
UTF-8, ``#`` starts a comment, blank lines are ignored. Sections appear as
``[name]`` headers; every data line is comma separated::

    [params]      key,value            (name, horizon, max_wait, alpha)
    [mots]        kind,speed,distance_cost_rate,time_cost_rate,emission_cost_rate
    [periods]     index,start,end,delta_public,delta_bike,delta_car,
                  beta_public,beta_bike,beta_car
    [depots]      id,x,y,car_start,bike_start,public_start,car_end,bike_end,public_end
    [users]       id,access,trip;trip;...
    [trips]       id,user,start_depot,end_depot,reference
    [tasks]       id,trip,x,y,service_time,fixed_start

``access`` is a five character bit string over (walk, bike, car, e-car,
public). Depot counts are integers or ``inf``. Betas are decimal literals and
are kept as exact fractions. Tasks are listed in the stored visiting order of
their trip.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

MOTS = ("car", "bike", "public")
ACCESS_FLAGS = ("walk", "bike", "car", "ecar", "public")

# Preference scores (1 best .. 10 worst) keyed on the access bit pattern
# (walk, bike, car, e-car, public); values are (public, bike, car).
PREFERENCE_TABLE: dict[tuple[int, ...], tuple[int, int, int]] = {
    (1, 0, 0, 0, 0): (4, 6, 7),
    (0, 1, 0, 0, 0): (6, 4, 7),
    (0, 0, 0, 0, 1): (4, 6, 7),
    (0, 0, 1, 0, 0): (6, 7, 4),
    (0, 0, 0, 1, 0): (6, 7, 5),
    (1, 1, 0, 0, 0): (4, 4, 7),
    (0, 1, 0, 0, 1): (4, 4, 7),
    (0, 0, 1, 0, 1): (4, 5, 4),
    (0, 0, 1, 1, 0): (7, 7, 4),
    (1, 0, 0, 0, 1): (4, 6, 7),
    (0, 1, 1, 0, 0): (6, 4, 4),
    (0, 0, 0, 1, 1): (4, 7, 5),
    (1, 0, 1, 0, 0): (4, 5, 4),
    (0, 1, 0, 1, 0): (6, 5, 6),
    (1, 1, 0, 0, 1): (4, 4, 7),
    (1, 0, 0, 1, 0): (4, 7, 5),
    (0, 1, 1, 0, 1): (4, 4, 4),
    (0, 0, 1, 1, 1): (7, 7, 4),
    (1, 1, 1, 0, 1): (4, 4, 4),
    (0, 1, 1, 1, 1): (7, 4, 4),
    (1, 0, 1, 1, 1): (4, 7, 4),
    (1, 1, 1, 1, 0): (4, 4, 4),
    (1, 1, 0, 1, 1): (4, 4, 7),
    (1, 1, 1, 1, 1): (4, 4, 4),
    (0, 0, 0, 0, 0): (4, 5, 5),
}

# Per-period preference deltas (public, bike, car) for the seven default periods.
PERIOD_DELTAS: tuple[tuple[int, int, int], ...] = (
    (-3, -2, +1),
    (+2, -2, +3),
    (-2, -1, -3),
    (0, 0, 0),
    (-2, -3, +1),
    (+2, -2, +3),
    (-1, +2, -2),
)

# Per-period cost/time factors (car, public, bike) for the seven default periods.
PERIOD_BETAS: tuple[tuple[Fraction, Fraction, Fraction], ...] = tuple(
    tuple(Fraction(v) for v in row)
    for row in (
        ("1.2", "1.1", "1"),
        ("1.4", "0.8", "1.1"),
        ("1.3", "0.9", "1"),
        ("1", "1", "1"),
        ("1.3", "1", "1"),
        ("1.4", "0.9", "1.1"),
        ("1.1", "1.3", "1"),
    )
)

DEFAULT_PERIOD_BOUNDS = (0, 90, 150, 240, 420, 510, 600, 720)

UNBOUNDED = None  # depot count marker for modes without a fleet limit


class InstanceError(ValueError):
    """Raised for malformed instance text or inconsistent instance data."""


def round_half_up(value) -> int:
    """Round a Fraction/int to the nearest integer, ties upwards."""
    value = Fraction(value)
    return math.floor(value + Fraction(1, 2))


@dataclass(frozen=True)
class User:
    id: str
    mot_access: tuple[int, int, int, int, int]
    trip_ids: tuple[str, ...]


@dataclass(frozen=True)
class TaskSpec:
    id: str
    location: tuple[int, int]
    service_time: int
    fixed_start: int


@dataclass(frozen=True)
class TripSpec:
    id: str
    user_id: str
    start_depot: str
    end_depot: str
    tasks: tuple[TaskSpec, ...]
    given_order_is_reference: bool = True


@dataclass(frozen=True)
class Depot:
    id: str
    location: tuple[int, int]
    car_start: tuple[tuple[str, Optional[int]], ...]
    car_end: tuple[tuple[str, Optional[int]], ...]

    def start_count(self, mot: str) -> Optional[int]:
        return dict(self.car_start)[mot]

    def end_count(self, mot: str) -> Optional[int]:
        return dict(self.car_end)[mot]


@dataclass(frozen=True)
class TimePeriod:
    index: int
    start: int
    end: int
    pref_delta: tuple[tuple[str, int], ...]
    beta: tuple[tuple[str, Fraction], ...]

    def delta(self, mot: str) -> int:
        return dict(self.pref_delta)[mot]

    def factor(self, mot: str) -> Fraction:
        return dict(self.beta)[mot]


@dataclass(frozen=True)
class MotParams:
    kind: str
    speed: int
    distance_cost_rate: int
    time_cost_rate: int
    emission_cost_rate: int


DEFAULT_MOTS = (
    MotParams("car", 500, 3, 3, 1),
    MotParams("bike", 250, 0, 3, 0),
    MotParams("public", 300, 1, 3, 0),
)


def default_periods(bounds: Iterable[int] = DEFAULT_PERIOD_BOUNDS) -> tuple[TimePeriod, ...]:
    bounds = tuple(bounds)
    if len(bounds) != len(PERIOD_DELTAS) + 1:
        raise InstanceError("default tables define exactly seven periods")
    periods = []
    for t in range(len(PERIOD_DELTAS)):
        dp, db, dc = PERIOD_DELTAS[t]
        bc, bp, bb = PERIOD_BETAS[t]
        periods.append(
            TimePeriod(
                index=t,
                start=bounds[t],
                end=bounds[t + 1],
                pref_delta=(("car", dc), ("bike", db), ("public", dp)),
                beta=(("car", bc), ("bike", bb), ("public", bp)),
            )
        )
    return tuple(periods)


@dataclass(frozen=True)
class Instance:
    users: tuple[User, ...]
    depots: tuple[Depot, ...]
    trips: tuple[TripSpec, ...]
    periods: tuple[TimePeriod, ...]
    mots: tuple[MotParams, ...] = DEFAULT_MOTS
    horizon: int = 720
    max_wait: int = 30
    alpha: int = 15
    name: str = "instance"

    def __post_init__(self):
        validate(self)

    def user(self, uid: str) -> User:
        return _index(self.users)[uid]

    def trip(self, rid: str) -> TripSpec:
        return _index(self.trips)[rid]

    def depot(self, did: str) -> Depot:
        return _index(self.depots)[did]

    def mot(self, kind: str) -> MotParams:
        return {m.kind: m for m in self.mots}[kind]

    def trips_of(self, uid: str) -> tuple[TripSpec, ...]:
        return tuple(self.trip(r) for r in self.user(uid).trip_ids)

    def period_at(self, time: float) -> TimePeriod:
        """Period containing ``time``; times at or past the horizon map to the last one."""
        for p in self.periods:
            if p.start <= time < p.end:
                return p
        if time >= self.horizon:
            return self.periods[-1]
        raise InstanceError(f"time {time} outside the planning horizon")

    @property
    def n_intervals(self) -> int:
        return self.horizon // self.alpha


def _index(items):
    return {it.id: it for it in items}


def validate(inst: Instance) -> None:
    def dup_check(kind, ids):
        seen = set()
        for i in ids:
            if i in seen:
                raise InstanceError(f"duplicate {kind} id {i!r}")
            seen.add(i)

    dup_check("user", [u.id for u in inst.users])
    dup_check("depot", [d.id for d in inst.depots])
    dup_check("trip", [r.id for r in inst.trips])
    dup_check("task", [q.id for r in inst.trips for q in r.tasks])
    if not inst.users:
        raise InstanceError("instance needs at least one user")
    if inst.alpha <= 0 or inst.horizon <= 0 or inst.horizon % inst.alpha:
        raise InstanceError("horizon must be a positive multiple of alpha")
    if inst.max_wait < 0:
        raise InstanceError("max_wait must be non-negative")
    if sorted(m.kind for m in inst.mots) != sorted(MOTS):
        raise InstanceError(f"mots must be exactly {MOTS}")
    for m in inst.mots:
        if m.speed <= 0:
            raise InstanceError(f"mot {m.kind}: speed must be positive")
    _check_periods(inst.periods, inst.horizon)
    depots = {d.id for d in inst.depots}
    for d in inst.depots:
        for counts in (d.car_start, d.car_end):
            if sorted(k for k, _ in counts) != sorted(MOTS):
                raise InstanceError(f"depot {d.id}: counts needed for {MOTS}")
            for k, v in counts:
                if v is not None and v < 0:
                    raise InstanceError(f"depot {d.id}: negative count for {k}")
    users = {u.id: u for u in inst.users}
    owner = {}
    for u in inst.users:
        if not u.trip_ids:
            raise InstanceError(f"user {u.id} has no trips")
        for rid in u.trip_ids:
            if rid in owner:
                raise InstanceError(f"trip {rid} referenced by users {owner[rid]} and {u.id}")
            owner[rid] = u.id
    for r in inst.trips:
        if r.user_id not in users:
            raise InstanceError(f"trip {r.id}: unknown user {r.user_id!r}")
        if owner.get(r.id) != r.user_id:
            raise InstanceError(f"trip {r.id} not listed by its user {r.user_id}")
        if r.start_depot not in depots or r.end_depot not in depots:
            raise InstanceError(f"trip {r.id}: unknown depot")
        if not r.tasks:
            raise InstanceError(f"trip {r.id} has no tasks")
        for q in r.tasks:
            if q.service_time < 0:
                raise InstanceError(f"task {q.id}: negative service time")
            if not 0 <= q.fixed_start < inst.horizon:
                raise InstanceError(f"task {q.id}: fixed_start outside [0, H)")
    missing = set(owner) - {r.id for r in inst.trips}
    if missing:
        raise InstanceError(f"users reference unknown trips {sorted(missing)}")


def _check_periods(periods, horizon):
    if not periods:
        raise InstanceError("at least one period required")
    ordered = sorted(periods, key=lambda p: p.start)
    if ordered[0].start != 0:
        raise InstanceError("period gap: periods must start at 0")
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise InstanceError(f"period overlap between {a.index} and {b.index}")
        if b.start > a.end:
            raise InstanceError(f"period gap between {a.index} and {b.index}")
    if ordered[-1].end != horizon:
        raise InstanceError("period gap: periods must end at the horizon")
    for p in periods:
        if p.end <= p.start:
            raise InstanceError(f"period {p.index} is empty")
        if sorted(k for k, _ in p.pref_delta) != sorted(MOTS):
            raise InstanceError(f"period {p.index}: deltas needed for {MOTS}")


# --------------------------------------------------------------------------
# preferences and leg metrics


def base_preference(user: User, mot: str) -> int:
    """Table lookup on the user's access pattern; unknown patterns use the all-zero row."""
    row = PREFERENCE_TABLE.get(tuple(user.mot_access), PREFERENCE_TABLE[(0, 0, 0, 0, 0)])
    return row[("public", "bike", "car").index(mot)]


def period_preference(user: User, mot: str, period: TimePeriod) -> int:
    return min(10, max(1, base_preference(user, mot) + period.delta(mot)))


def travel_metrics(src, dst, mot: MotParams) -> tuple[int, int, int]:
    """Distance (m, rounded up), travel time (min, rounded up) and base cost.

    Distance and emission rates are milli-units per meter, the time rate is
    cost units per minute.
    """
    distance = math.ceil(math.dist(src, dst))
    if distance == 0:
        return 0, 0, 0
    minutes = -(-distance // mot.speed)
    milli = (
        distance * mot.distance_cost_rate
        + 1000 * minutes * mot.time_cost_rate
        + distance * mot.emission_cost_rate
    )
    return distance, minutes, round_half_up(Fraction(milli, 1000))


def apply_beta(base_cost: int, base_time: int, mot: str, period: TimePeriod) -> tuple[int, int]:
    beta = period.factor(mot)
    return round_half_up(base_cost * beta), round_half_up(base_time * beta)


def max_beta(inst: Instance, mot: str) -> Fraction:
    return max(p.factor(mot) for p in inst.periods)


def reference_time(inst: Instance, src, dst) -> int:
    """Slowest possible travel time between two points over every mode and period."""
    return max(
        math.ceil(travel_metrics(src, dst, m)[1] * max_beta(inst, m.kind)) for m in inst.mots
    )


def trip_start_location(inst: Instance, trip: TripSpec):
    return inst.depot(trip.start_depot).location


def trip_end_location(inst: Instance, trip: TripSpec):
    return inst.depot(trip.end_depot).location


def reference_schedule(inst: Instance, trip: TripSpec) -> tuple[int, int]:
    """(start, end) of a trip under its stored task times and padded travel times."""
    first, last = trip.tasks[0], trip.tasks[-1]
    start = first.fixed_start - reference_time(inst, trip_start_location(inst, trip), first.location)
    end = (
        last.fixed_start
        + last.service_time
        + reference_time(inst, last.location, trip_end_location(inst, trip))
    )
    return start, end


def user_link_time(inst: Instance, from_depot: str, to_depot: str) -> int:
    """Walking/public transfer time between two depots (0 within one depot)."""
    src, dst = inst.depot(from_depot).location, inst.depot(to_depot).location
    return travel_metrics(src, dst, inst.mot("public"))[1]


# --------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorParams:
    n_users: int
    trips_per_user: tuple[int, int] = (1, 2)
    tasks_per_trip: tuple[int, int] = (1, 3)
    n_depots: int = 1
    area: int = 6000
    cars_per_depot: int = 1
    service_time: tuple[int, int] = (15, 60)
    first_start: tuple[int, int] = (0, 240)
    gap: tuple[int, int] = (0, 90)
    horizon: int = 720
    max_wait: int = 30
    alpha: int = 15
    name: Optional[str] = None


def generate_instance(params: GeneratorParams, seed: int, *, max_attempts: int = 200) -> Instance:
    """Draw a random instance; task times follow a schedule every mode can keep.

    Raises InstanceError if no user schedule fits into the horizon within
    ``max_attempts`` redraws.
    """
    for lo_hi in (params.trips_per_user, params.tasks_per_trip, params.service_time,
                  params.first_start, params.gap):
        if lo_hi[0] > lo_hi[1]:
            raise InstanceError(f"empty range {lo_hi}")
    if params.n_users < 1 or params.n_depots < 1 or params.trips_per_user[0] < 1 \
            or params.tasks_per_trip[0] < 1:
        raise InstanceError("n_users, n_depots, trips and tasks must be at least 1")
    rng = random.Random(seed)
    periods = default_periods(_scaled_bounds(params.horizon))
    depots = []
    for i in range(params.n_depots):
        loc = (rng.randint(0, params.area), rng.randint(0, params.area))
        depots.append(
            Depot(
                id=f"d{i}",
                location=loc,
                car_start=(("car", params.cars_per_depot), ("bike", UNBOUNDED), ("public", UNBOUNDED)),
                car_end=(("car", params.cars_per_depot + 1), ("bike", UNBOUNDED), ("public", UNBOUNDED)),
            )
        )
    # skeleton instance for travel-time helpers
    probe = Instance(
        users=(User("p", (0, 0, 0, 0, 0), ("r",)),),
        depots=tuple(depots),
        trips=(TripSpec("r", "p", "d0", "d0", (TaskSpec("q", (0, 0), 0, 0),)),),
        periods=periods,
        horizon=params.horizon,
        max_wait=params.max_wait,
        alpha=params.alpha,
    )
    patterns = list(PREFERENCE_TABLE)
    users, trips = [], []
    task_no = trip_no = 0
    for u in range(params.n_users):
        uid = f"p{u}"
        access = rng.choice(patterns)
        n_trips = rng.randint(*params.trips_per_user)
        home = rng.randrange(params.n_depots)
        for _ in range(max_attempts):
            drafted = _draft_user_trips(rng, probe, params, uid, home, n_trips, trip_no, task_no)
            if drafted is not None:
                break
        else:
            raise InstanceError(f"could not fit the trips of user {uid} into the horizon")
        user_trips = drafted
        trip_no += len(user_trips)
        task_no += sum(len(r.tasks) for r in user_trips)
        trips.extend(user_trips)
        users.append(User(uid, access, tuple(r.id for r in user_trips)))
    name = params.name or f"E_{params.n_users}_{seed}"
    return Instance(
        users=tuple(users),
        depots=tuple(depots),
        trips=tuple(trips),
        periods=periods,
        horizon=params.horizon,
        max_wait=params.max_wait,
        alpha=params.alpha,
        name=name,
    )


def _scaled_bounds(horizon):
    if horizon == DEFAULT_PERIOD_BOUNDS[-1]:
        return DEFAULT_PERIOD_BOUNDS
    return tuple(b * horizon // DEFAULT_PERIOD_BOUNDS[-1] for b in DEFAULT_PERIOD_BOUNDS)


def _draft_user_trips(rng, probe, params, uid, home, n_trips, trip_no, task_no):
    cursor = rng.randint(*params.first_start)
    prev_end_depot = None
    out = []
    for i in range(n_trips):
        start_d = f"d{home}" if i == 0 or params.n_depots == 1 else f"d{rng.randrange(params.n_depots)}"
        end_d = f"d{rng.randrange(params.n_depots)}"
        if prev_end_depot is not None:
            cursor += user_link_time(probe, prev_end_depot, start_d)
        here = probe.depot(start_d).location
        t = cursor
        tasks = []
        for _ in range(rng.randint(*params.tasks_per_trip)):
            loc = (rng.randint(0, params.area), rng.randint(0, params.area))
            t += reference_time(probe, here, loc)
            service = 5 * rng.randint(params.service_time[0] // 5, params.service_time[1] // 5)
            if t >= params.horizon:
                return None
            tasks.append(TaskSpec(f"q{task_no + len(tasks)}", loc, service, t))
            t += service
            here = loc
        t += reference_time(probe, here, probe.depot(end_d).location)
        if t > params.horizon:
            return None
        task_no += len(tasks)
        out.append(TripSpec(f"r{trip_no + i}", uid, start_d, end_d, tuple(tasks)))
        cursor = t + rng.randint(*params.gap)
        prev_end_depot = end_d
    return out


# --------------------------------------------------------------------------
# text format

_DEPOT_FIELDS = ("id", "x", "y", "car_start", "bike_start", "public_start",
                 "car_end", "bike_end", "public_end")
_FIELDS = {
    "mots": ("kind", "speed", "distance_cost_rate", "time_cost_rate", "emission_cost_rate"),
    "periods": ("index", "start", "end", "delta_public", "delta_bike", "delta_car",
                "beta_public", "beta_bike", "beta_car"),
    "depots": _DEPOT_FIELDS,
    "users": ("id", "access", "trips"),
    "trips": ("id", "user", "start_depot", "end_depot", "reference"),
    "tasks": ("id", "trip", "x", "y", "service_time", "fixed_start"),
    "params": ("key", "value"),
}


def _count(v):
    return "inf" if v is None else str(v)


def save_instance(inst: Instance) -> str:
    lines = [f"# multimodal car-sharing instance {inst.name}", "[params]",
             f"name,{inst.name}", f"horizon,{inst.horizon}", f"max_wait,{inst.max_wait}",
             f"alpha,{inst.alpha}", "[mots]", "# " + ",".join(_FIELDS["mots"])]
    for m in inst.mots:
        lines.append(f"{m.kind},{m.speed},{m.distance_cost_rate},{m.time_cost_rate},{m.emission_cost_rate}")
    lines += ["[periods]", "# " + ",".join(_FIELDS["periods"])]
    for p in inst.periods:
        d, b = dict(p.pref_delta), dict(p.beta)
        lines.append(",".join(str(x) for x in (
            p.index, p.start, p.end, d["public"], d["bike"], d["car"],
            _fraction_text(b["public"]), _fraction_text(b["bike"]), _fraction_text(b["car"]))))
    lines += ["[depots]", "# " + ",".join(_DEPOT_FIELDS)]
    for dp in inst.depots:
        s, e = dict(dp.car_start), dict(dp.car_end)
        lines.append(",".join([dp.id, str(dp.location[0]), str(dp.location[1])]
                              + [_count(s[k]) for k in MOTS] + [_count(e[k]) for k in MOTS]))
    lines += ["[users]", "# " + ",".join(_FIELDS["users"])]
    for u in inst.users:
        lines.append(f"{u.id},{''.join(map(str, u.mot_access))},{';'.join(u.trip_ids)}")
    lines += ["[trips]", "# " + ",".join(_FIELDS["trips"])]
    for r in inst.trips:
        lines.append(f"{r.id},{r.user_id},{r.start_depot},{r.end_depot},{int(r.given_order_is_reference)}")
    lines += ["[tasks]", "# " + ",".join(_FIELDS["tasks"])]
    for r in inst.trips:
        for q in r.tasks:
            lines.append(f"{q.id},{r.id},{q.location[0]},{q.location[1]},{q.service_time},{q.fixed_start}")
    return "\n".join(lines) + "\n"


def _fraction_text(f: Fraction) -> str:
    if f.denominator == 1:
        return str(f.numerator)
    # betas are decimals in practice; fall back to a/b otherwise
    for digits in range(1, 7):
        scaled = f * 10**digits
        if scaled.denominator == 1:
            return f"{f.numerator // f.denominator}.{str(scaled.numerator % 10**digits).zfill(digits)}" \
                if f >= 0 else str(float(f))
    return f"{f.numerator}/{f.denominator}"


def load_instance(text: str) -> Instance:
    """Parse the text format; raises InstanceError with a line/field diagnostic."""
    rows: dict[str, list[tuple[int, list[str]]]] = {k: [] for k in _FIELDS}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _FIELDS:
                raise InstanceError(f"line {no}: unknown section [{section}]")
            continue
        if section is None:
            raise InstanceError(f"line {no}: data outside a section")
        fields = [f.strip() for f in line.split(",")]
        names = _FIELDS[section]
        if len(fields) < len(names):
            raise InstanceError(f"line {no}: {section}: missing field '{names[len(fields)]}'")
        if len(fields) > len(names):
            raise InstanceError(f"line {no}: {section}: too many fields")
        rows[section].append((no, fields))

    def num(no, section, name, value, kind=int):
        try:
            return kind(value)
        except (ValueError, ZeroDivisionError):
            raise InstanceError(f"line {no}: {section}: bad value {value!r} for '{name}'") from None

    def count(no, name, value):
        return None if value == "inf" else num(no, "depots", name, value)

    params = {}
    for no, (key, value) in rows["params"]:
        params[key] = (no, value)
    mots = tuple(
        MotParams(f[0], *(num(no, "mots", n, v) for n, v in zip(_FIELDS["mots"][1:], f[1:])))
        for no, f in rows["mots"]
    )
    periods = []
    for no, f in rows["periods"]:
        n = _FIELDS["periods"]
        ints = [num(no, "periods", n[i], f[i]) for i in range(6)]
        betas = [num(no, "periods", n[i], f[i], Fraction) for i in range(6, 9)]
        periods.append(TimePeriod(
            index=ints[0], start=ints[1], end=ints[2],
            pref_delta=(("car", ints[5]), ("bike", ints[4]), ("public", ints[3])),
            beta=(("car", betas[2]), ("bike", betas[1]), ("public", betas[0])),
        ))
    depots = []
    for no, f in rows["depots"]:
        c = [count(no, _DEPOT_FIELDS[i], f[i]) for i in range(3, 9)]
        depots.append(Depot(
            id=f[0], location=(num(no, "depots", "x", f[1]), num(no, "depots", "y", f[2])),
            car_start=tuple(zip(MOTS, c[:3])), car_end=tuple(zip(MOTS, c[3:])),
        ))
    users = []
    for no, f in rows["users"]:
        access = f[1]
        if len(access) != 5 or set(access) - {"0", "1"}:
            raise InstanceError(f"line {no}: users: bad value {access!r} for 'access'")
        trip_ids = tuple(t for t in f[2].split(";") if t)
        users.append(User(f[0], tuple(int(c) for c in access), trip_ids))
    tasks_by_trip: dict[str, list[TaskSpec]] = {}
    for no, f in rows["tasks"]:
        n = _FIELDS["tasks"]
        x, y, s, fs = (num(no, "tasks", n[i], f[i]) for i in range(2, 6))
        tasks_by_trip.setdefault(f[1], []).append(TaskSpec(f[0], (x, y), s, fs))
    trips = []
    known = set()
    for no, f in rows["trips"]:
        known.add(f[0])
        trips.append(TripSpec(f[0], f[1], f[2], f[3], tuple(tasks_by_trip.get(f[0], ())),
                              bool(num(no, "trips", "reference", f[4]))))
    orphan = set(tasks_by_trip) - known
    if orphan:
        raise InstanceError(f"tasks reference unknown trips {sorted(orphan)}")

    def param(key, default, kind=int):
        if key not in params:
            return default
        no, value = params[key]
        return num(no, "params", key, value, kind)

    return Instance(
        users=tuple(users), depots=tuple(depots), trips=tuple(trips), periods=tuple(periods),
        mots=mots or DEFAULT_MOTS, horizon=param("horizon", 720), max_wait=param("max_wait", 30),
        alpha=param("alpha", 15), name=param("name", "instance", str),
    )
