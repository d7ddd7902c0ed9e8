from fractions import Fraction

import pytest

from conftest import ALL_ACCESS, make_instance, small_instance
from mmcarshare.instance import (DEFAULT_MOTS, GeneratorParams, InstanceError, MotParams, TimePeriod, User,
                                 apply_beta, base_preference, default_periods, generate_instance,
                                 load_instance, period_preference, round_half_up, save_instance,
                                 travel_metrics)
from mmcarshare.models import assemble_m4b, warm_start
from mmcarshare.multigraph import build_graph
from mmcarshare.separation import M4bSeparator

PERIODS = default_periods()


def user(access):
    return User("p", access, ("r",))


# --------------------------------------------------------------------------
# preference lookups


def test_base_preference_walk_only_car():
    assert base_preference(user((1, 0, 0, 0, 0)), "car") == 7


def test_base_preference_car_and_public():
    assert base_preference(user((0, 0, 1, 0, 1)), "car") == 4


def test_base_preference_no_access_bike():
    assert base_preference(user((0, 0, 0, 0, 0)), "bike") == 5


def test_base_preference_unknown_pattern_falls_back_to_zero_row():
    # (0,0,1,1,1) is listed; (1,1,1,0,0) is not
    assert base_preference(user((1, 1, 1, 0, 0)), "bike") == 5


def test_period_preference_upper_clamp():
    # base 7 for car, period 1 adds 3
    assert period_preference(user((1, 0, 0, 0, 0)), "car", PERIODS[1]) == 10


def test_period_preference_zero_delta():
    assert period_preference(user((1, 0, 0, 0, 0)), "public", PERIODS[3]) == 4


def test_period_preference_lower_clamp():
    steep = TimePeriod(4, 0, 720, (("car", 0), ("bike", -5), ("public", 0)),
                       (("car", Fraction(1)), ("bike", Fraction(1)), ("public", Fraction(1))))
    assert period_preference(user((0, 1, 0, 0, 0)), "bike", steep) == 1


def test_period_preference_always_in_range():
    for access in [(1, 0, 0, 0, 0), (0, 0, 1, 0, 1), (0, 0, 0, 0, 0), ALL_ACCESS]:
        for p in PERIODS:
            for m in ("car", "bike", "public"):
                assert 1 <= period_preference(user(access), m, p) <= 10


# --------------------------------------------------------------------------
# travel data


def test_travel_metrics_zero_distance():
    assert travel_metrics((5, 5), (5, 5), DEFAULT_MOTS[0]) == (0, 0, 0)


def test_travel_metrics_exact_division():
    car = MotParams("car", 500, 0, 0, 0)
    assert travel_metrics((0, 0), (3000, 0), car)[:2] == (3000, 6)


def test_travel_metrics_cost_formula():
    mot = MotParams("car", 250, 1, 2, 1)
    assert travel_metrics((0, 0), (1000, 0), mot) == (1000, 4, 10)


def test_travel_metrics_rounds_distance_up():
    mot = MotParams("bike", 100, 0, 0, 0)
    assert travel_metrics((0, 0), (1, 1), mot)[0] == 2


def test_apply_beta_rush_hour_car():
    assert apply_beta(5, 10, "car", PERIODS[1])[0] == 7


def test_apply_beta_identity():
    assert apply_beta(13, 9, "bike", PERIODS[3]) == (13, 9)


def test_apply_beta_public_time():
    assert apply_beta(3, 10, "public", PERIODS[1])[1] == 8


def test_round_half_up_ties():
    assert [round_half_up(Fraction(x, 2)) for x in (1, 3, 5, 21)] == [1, 2, 3, 11]


# --------------------------------------------------------------------------
# generator


def test_generator_minimal_shape():
    inst = generate_instance(GeneratorParams(1, (1, 1), (1, 1), n_depots=1), 7)
    assert len(inst.users) == 1 and len(inst.trips) == 1
    assert len(inst.trips[0].tasks) == 1


def test_generator_deterministic():
    p = GeneratorParams(3, (1, 2), (1, 3), n_depots=2)
    assert save_instance(generate_instance(p, 5)) == save_instance(generate_instance(p, 5))


def test_generator_seeds_differ():
    p = GeneratorParams(3, (1, 2), (1, 3))
    assert save_instance(generate_instance(p, 1)) != save_instance(generate_instance(p, 2))


def test_generator_stored_sequences_are_time_feasible():
    inst = generate_instance(GeneratorParams(3, (1, 2), (1, 3)), 11)
    graph = build_graph(inst, "M4")
    problem = assemble_m4b(graph)
    ws = warm_start(problem)
    assert problem.model.is_feasible(ws)
    assert M4bSeparator(graph)(ws) == []


def test_generator_rejects_empty_range():
    with pytest.raises(InstanceError):
        generate_instance(GeneratorParams(2, (2, 1)), 0)


def test_generator_rejects_zero_users():
    with pytest.raises(InstanceError):
        generate_instance(GeneratorParams(0), 0)


def test_generator_name():
    assert generate_instance(GeneratorParams(3), 4).name == "E_3_4"


# --------------------------------------------------------------------------
# file format


def test_round_trip_generated():
    inst = small_instance(3, users=3, depots=2)
    assert load_instance(save_instance(inst)) == inst


def test_round_trip_hand_made():
    inst = make_instance({"a": [[(100, 200, 10, 50)], [(300, 0, 5, 400), (0, 300, 5, 450)]]})
    assert load_instance(save_instance(inst)) == inst


def _edit(text, old, new):
    assert old in text
    return text.replace(old, new, 1)


def test_load_rejects_period_overlap():
    text = save_instance(small_instance(0))
    with pytest.raises(InstanceError, match="period overlap"):
        load_instance(_edit(text, "\n1,90,150,", "\n1,80,150,"))


def test_load_rejects_period_gap():
    text = save_instance(small_instance(0))
    with pytest.raises(InstanceError, match="period gap"):
        load_instance(_edit(text, "\n1,90,150,", "\n1,100,150,"))


def test_load_rejects_missing_car_end():
    inst = small_instance(0)
    text = save_instance(inst)
    line = next(l for l in text.splitlines() if l.startswith("d0,"))
    with pytest.raises(InstanceError, match="car_end"):
        load_instance(_edit(text, line, ",".join(line.split(",")[:6])))


def test_load_rejects_duplicate_task_id():
    text = save_instance(make_instance({"a": [[(1, 1, 5, 100), (2, 2, 5, 200)]]}))
    with pytest.raises(InstanceError, match="duplicate"):
        load_instance(_edit(text, "q1,r0", "q0,r0"))


def test_load_reports_line_number():
    text = save_instance(small_instance(0))
    with pytest.raises(InstanceError, match=r"line \d+"):
        load_instance(_edit(text, "horizon,720", "horizon,abc"))
