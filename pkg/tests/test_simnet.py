from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedsim.cost import CostParams, time_ratio
from fedsim.data import generate_synthetic
from fedsim.federation import FederationConfig, run_experiment
from fedsim.simnet import SERVER, TrafficLedger, record_transfer, simulated_time

CP = CostParams(k_n=2.0, k_s=3.0, agencies=4, model_ratio=0.0)


def test_single_event_total():
    led = record_transfer(TrafficLedger(), 0, SERVER, 100, "data")
    assert led.total_bytes == 100
    assert led.bytes_up == 100 and led.bytes_down == 0


def test_direction_rule():
    led = TrafficLedger()
    record_transfer(led, SERVER, 2, 7, "model")
    record_transfer(led, 2, 3, 5, "model")
    record_transfer(led, 3, SERVER, 11, "model")
    assert (led.bytes_up, led.bytes_down) == (11, 12)


@given(st.lists(st.tuples(st.integers(-1, 5), st.integers(-1, 5), st.integers(1, 10**6),
                          st.sampled_from(["model", "data"])), max_size=40))
def test_totals_equal_event_sums(events):
    led = TrafficLedger()
    for ev in events:
        record_transfer(led, *ev)
    assert led.total_bytes == sum(e[2] for e in events)
    assert [(e.src, e.dst, e.nbytes, e.kind) for e in led.events] == events
    by_kind = led.totals_by_kind()
    assert by_kind["model"] + by_kind["data"] == led.total_bytes


def test_rejects_empty_and_unknown_transfers():
    with pytest.raises(ValueError):
        record_transfer(TrafficLedger(), 0, 1, 0, "model")
    with pytest.raises(ValueError):
        record_transfer(TrafficLedger(), 0, 1, 5, "gradients")


def test_empty_run_takes_no_time():
    assert simulated_time(TrafficLedger(), CP, [], 10.0) == 0.0
    assert simulated_time(TrafficLedger(), CP, {}, 10.0) == 0.0


def test_parallel_phase_costs_its_slowest_node():
    t = simulated_time(TrafficLedger(), CP, [{0: 1.0, 1: 1.0, 2: 1.0, 3: 1.0}], 1.0)
    assert t == 3.0 * 1.0
    t = simulated_time(TrafficLedger(), CP, [{0: 0.5, 1: 2.0}], 1.0)
    assert t == 3.0 * 2.0


def test_sequential_phases_add():
    t = simulated_time(TrafficLedger(), CP, [{0: 1.0}, {1: 1.0}, {2: 0.5}], 1.0)
    assert t == 3.0 * 2.5


def test_transfer_term_in_units():
    led = record_transfer(TrafficLedger(), 0, SERVER, 250, "data")
    assert simulated_time(led, CP, [], 100.0) == 2.0 * 2.5


def test_centralized_run_recovers_numerator_scale():
    # A equal shards each one unit: K_n * A transfer + K_s * A compute
    train, test = generate_synthetic(4, 32, 3, seed=0, test_per_class=2)
    cfg = FederationConfig(flavor="centralized", agencies=4, rounds=1, local_steps=1,
                           batch_size=len(train), k_n=2.0, k_s=3.0)
    run = run_experiment(cfg, train, test)
    assert run.final.sim_time == pytest.approx(2.0 * 4 + 3.0 * 4, rel=1e-12)


def test_flavor1_round_charges_one_shard_of_compute():
    train, test = generate_synthetic(4, 32, 3, seed=0, test_per_class=2)
    cfg = FederationConfig(agencies=4, rounds=1, local_steps=1, batch_size=32,
                           k_n=0.0, k_s=1.0)
    run = run_experiment(cfg, train, test)
    assert run.final.sim_time == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("big_n", [0.0, 0.5, 4.0, 50.0])
def test_relay_time_ratio_matches_closed_form_with_one_agency(big_n):
    """A relay trains the agencies one after another, so the closed form holds with A=1."""
    train, test = generate_synthetic(5, 40, 7, seed=2, test_per_class=2)
    a, mr = 5, 0.1
    n, bpe = len(train), train.bytes_per_example()
    model_bytes = round(mr * n * bpe / a)   # a hops carry M_r of the data
    base = FederationConfig(agencies=a, k_n=big_n, model_bytes=model_bytes, batch_size=8)
    relay = run_experiment(replace(base, flavor="flavor2"), train, test)
    cen = run_experiment(replace(base, flavor="centralized", rounds=n // 8), train, test)
    measured = cen.final.sim_time / relay.final.sim_time
    assert measured == pytest.approx(time_ratio(CostParams(big_n, 1.0, 1, mr)), rel=1e-12)
