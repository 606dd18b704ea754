import numpy as np
import pytest

from mmmesh.errors import SimulationError
from mmmesh.radio import episode_radio
from mmmesh.simulation import (DEFAULT_WORKLOAD_TOTALS, TrafficMatrix, TrafficSampler,
                               apply_schedule, demand_vectors, gen_traffic, init_episode,
                               inject_continuous, is_terminal, load_traffic_csv,
                               predict_demand, predict_occupancies, save_traffic_csv,
                               write_step_log)
from mmmesh.topology import Node, Link, Topology, compute_routes, generate_topology

from conftest import no_interference, tiny_budget


def line3_episode(line3, line3_routes, counts, capacity=650):
    """Episode on the 3-node line with traffic given as {(src, dst): n}."""
    topo = Topology(line3.nodes, line3.links, capacity)
    n = topo.num_nodes
    demand = np.zeros((n, n), dtype=np.int64)
    for (s, d), c in counts.items():
        demand[s, d] = c
    budget = tiny_budget(topo.num_links)
    return init_episode(topo, compute_routes(topo), TrafficMatrix(demand),
                        no_interference(topo.num_links), seed=0, budget=budget)


def test_injection_placement(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 5, (2, 0): 3, (1, 2): 2})
    # link 0 is 0->1, link 2 is 1->2, link 3 is 2->1
    occ = st.occupancies()
    assert occ[0] == 5   # 0->2 packets start on 0->1
    assert occ[2] == 2   # 1->2 packets go straight out
    assert occ[3] == 3
    assert st.injected == 10 and st.in_system == 10 and st.dropped_total == 0


def test_injection_overflow_drops(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 700}, capacity=650)
    assert st.injected == 700
    assert st.in_system == 650
    assert st.dropped_injection == 50
    st.check_conservation()


def test_one_hop_per_slot(line3, line3_routes):
    # a 0->2 packet must take exactly 2 slots even with infinite budgets
    st = line3_episode(line3, line3_routes, {(0, 2): 4})
    full = np.array([1.0, 0.0, 0.0, 0.0])  # only link 0->1 active
    o1 = apply_schedule(st, full)
    assert o1.moved == 4 and o1.delivered == 0
    assert st.occupancies()[2] == 4  # waiting at node 1, not delivered
    o2 = apply_schedule(st, np.array([0.0, 0.0, 1.0, 0.0]))
    assert o2.delivered == 4
    assert is_terminal(st)


def test_arrival_overflow_hand_trace(line3, line3_routes):
    # 10 packets arrive at a next-hop buffer with 3 free slots:
    # 3 enqueue, 7 drop on arrival
    st = line3_episode(line3, line3_routes, {(0, 2): 10, (1, 2): 647}, capacity=650)
    assert st.occupancies()[2] == 647
    out = apply_schedule(st, np.array([1.0, 0.0, 0.0, 0.0]))
    assert out.moved == 10
    assert out.dropped == 7
    assert st.occupancies()[2] == 650
    assert st.dropped_arrival == 7
    st.check_conservation()


def test_fifo_departure_order(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(1, 2): 5})
    ids = [p.id for p in st.buffers[2].queue]
    # budget caps departures: N0=120 >> 5, so all leave in insertion order
    first_two = ids[:2]
    st.budget.n0 = np.full(4, 2, dtype=np.int64)  # shrink budget to 2/slot
    out = apply_schedule(st, np.array([0.0, 0.0, 1.0, 0.0]))
    assert out.delivered == 2
    assert [p.id for p in st.buffers[2].queue] == ids[2:]
    assert first_two == ids[:2]


def test_idle_slot_changes_nothing_but_the_clock(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 9})
    before = st.occupancies().copy()
    out = apply_schedule(st, np.zeros(4))
    assert out.moved == out.delivered == out.dropped == 0
    assert np.array_equal(st.occupancies(), before)
    assert st.slot == 1


def test_apply_schedule_shape_check(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 1})
    with pytest.raises(SimulationError, match="links"):
        apply_schedule(st, np.ones(3))


def test_conservation_random_episodes():
    # the criterion-2 invariant at small scale: every slot, exact
    topo = generate_topology("small-10", 13)
    routes = compute_routes(topo)
    rng = np.random.default_rng(13)
    for ep in range(25):
        level = float(rng.uniform(0, 1))
        kind = ("uniform", "few-to-many", "many-to-few")[ep % 3]
        traffic = gen_traffic(topo, kind, int(rng.integers(100, 3000)), rng)
        budget, im = episode_radio(topo, "synthetic", level, rng)
        st = init_episode(topo, routes, traffic, im, rng, budget=budget)
        for _ in range(60):
            if is_terminal(st):
                break
            apply_schedule(st, rng.uniform(0, 1, topo.num_links))
            st.check_conservation()  # raises on violation
        assert st.injected == st.delivered + st.dropped_total + st.in_system


def test_traffic_totals_and_diagonal():
    topo = generate_topology("medium-48", 3)
    for kind, totals in DEFAULT_WORKLOAD_TOTALS.items():
        tm = gen_traffic(topo, kind, totals["medium-48"], seed=5)
        assert tm.total == totals["medium-48"]
        assert np.all(np.diag(tm.demand) == 0)
        assert np.all(tm.demand >= 0)


def test_workload_shapes():
    topo = generate_topology("medium-48", 3)  # 19 nodes -> ceil(1.9) = 2 "few"
    rng = np.random.default_rng(8)
    ftm = TrafficSampler(topo, "few-to-many", rng)
    assert len(ftm.src_pool) == 2
    assert len(ftm.dst_pool) == 17
    assert set(ftm.src_pool).isdisjoint(ftm.dst_pool)
    mtf = TrafficSampler(topo, "many-to-few", rng)
    assert len(mtf.src_pool) == 17 and len(mtf.dst_pool) == 2
    srcs, dsts = ftm.sample(1000, rng)
    assert set(np.unique(srcs)) <= set(ftm.src_pool)
    assert set(np.unique(dsts)) <= set(ftm.dst_pool)
    tm = gen_traffic(topo, "few-to-many", 3088, seed=4)
    assert (tm.demand.sum(axis=1) > 0).sum() <= 2  # at most the few sources send


def test_uniform_sampler_never_self():
    topo = generate_topology("small-10", 0)
    rng = np.random.default_rng(1)
    s = TrafficSampler(topo, "uniform", rng)
    srcs, dsts = s.sample(5000, rng)
    assert np.all(srcs != dsts)
    # all nodes appear both ways eventually
    assert set(np.unique(srcs)) == set(range(topo.num_nodes))
    assert set(np.unique(dsts)) == set(range(topo.num_nodes))
    with pytest.raises(SimulationError):
        TrafficSampler(topo, "bogus", rng)


def test_gen_traffic_deterministic():
    topo = generate_topology("small-10", 0)
    a = gen_traffic(topo, "uniform", 2304, seed=42)
    b = gen_traffic(topo, "uniform", 2304, seed=42)
    c = gen_traffic(topo, "uniform", 2304, seed=43)
    assert np.array_equal(a.demand, b.demand)
    assert not np.array_equal(a.demand, c.demand)


def test_predict_occupancies(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 30, (0, 1): 10})
    st.budget.n0 = np.full(4, 25, dtype=np.int64)
    powers = np.array([1.0, 0.0, 0.0, 0.0])
    pred = predict_occupancies(st, powers)
    # 25 of the 40 queued on link 0 depart (FIFO head mixes both flows);
    # survivors bound for node 2 land on link 2
    heading_on = sum(1 for p in list(st.buffers[0].queue)[:25] if p.dst == 2)
    assert pred[0] == 15
    assert pred[2] == heading_on
    assert pred[1] == pred[3] == 0
    # prediction didn't mutate anything
    assert st.occupancies()[0] == 40
    d = predict_demand(st, powers)
    assert d[0][1] == 15
    assert d[1][2] == heading_on


def test_demand_vectors(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 5, (2, 0): 3})
    d = demand_vectors(st)
    assert d[0] == {1: 5}
    assert d[2] == {1: 3}
    assert d[1] == {0: 0, 2: 0}


def test_inject_continuous(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 5})
    sampler = TrafficSampler(st.topo, "uniform", np.random.default_rng(3))
    got = inject_continuous(st, 40, sampler=sampler)
    assert got == 40
    assert st.injected == 45
    assert inject_continuous(st, 0) == 0
    with pytest.raises(SimulationError):
        inject_continuous(st, -1)


def test_inject_continuous_overflow(line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 1): 645}, capacity=650)
    sampler = TrafficSampler(st.topo, "uniform", np.random.default_rng(3))
    before_drops = st.dropped_injection
    inject_continuous(st, 500, sampler=sampler)
    assert st.dropped_injection > before_drops  # some buffers overflowed
    st.check_conservation()


def test_traffic_csv_round_trip(tmp_path):
    topo = generate_topology("small-10", 2)
    tm = gen_traffic(topo, "many-to-few", 1800, seed=6)
    p = tmp_path / "traffic.csv"
    save_traffic_csv(tm, p)
    back = load_traffic_csv(p, topo.num_nodes)
    assert np.array_equal(back.demand, tm.demand)
    p.write_text("src,dst,count\n0,0,5\n")
    with pytest.raises(SimulationError, match="invalid"):
        load_traffic_csv(p, 4)
    p.write_text("wrong,header,here\n")
    with pytest.raises(SimulationError, match="header"):
        load_traffic_csv(p, 4)


def test_step_log(tmp_path, line3, line3_routes):
    st = line3_episode(line3, line3_routes, {(0, 2): 10})
    outs = [apply_schedule(st, np.array([1.0, 0.0, 1.0, 0.0])) for _ in range(3)]
    p = tmp_path / "steps.csv"
    write_step_log(outs, p)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "slot,P,M,D,delivered"
    assert len(lines) == 4
    assert lines[1].startswith("0,10,")


def test_relabeling_equivariance():
    """Swapping two parallel flows' labels must swap their stats: the engine
    treats links symmetrically when there is no interference coupling."""
    nodes = [Node(0, 0, 0), Node(1, 100, 0), Node(2, 0, 100), Node(3, 100, 100)]
    links = [Link(0, 0, 1), Link(1, 1, 0), Link(2, 2, 3), Link(3, 3, 2),
             Link(4, 1, 2), Link(5, 2, 1)]  # idle bridge keeps routing total
    topo = Topology(nodes, links)
    routes = compute_routes(topo)
    budget = tiny_budget(6)
    budget.n0 = np.full(6, 7, dtype=np.int64)

    def run(c01, c23):
        demand = np.zeros((4, 4), dtype=np.int64)
        demand[0, 1], demand[2, 3] = c01, c23
        st = init_episode(topo, routes, TrafficMatrix(demand), no_interference(6),
                          seed=0, budget=budget)
        outs = []
        while not is_terminal(st):
            outs.append(apply_schedule(st, np.ones(6)))
        return st, outs

    a, outs_a = run(20, 11)
    b, outs_b = run(11, 20)
    assert a.delivered == b.delivered == 31
    assert len(outs_a) == len(outs_b)
    assert [o.delivered for o in outs_a] == [o.delivered for o in outs_b]


def test_delay_steps_accounting(line3, line3_routes):
    # 0->2 has shortest distance 2; deliver after 3 slots -> 1 delay step each
    st = line3_episode(line3, line3_routes, {(0, 2): 4})
    apply_schedule(st, np.zeros(4))                      # idle slot
    apply_schedule(st, np.array([1.0, 0.0, 0.0, 0.0]))   # hop 1
    out = apply_schedule(st, np.array([0.0, 0.0, 1.0, 0.0]))  # hop 2, slot 3
    assert out.delivered == 4
    assert out.delay_steps == 4  # one extra slot each


def test_self_traffic_rejected(line3, line3_routes):
    demand = np.zeros((3, 3), dtype=np.int64)
    demand[1, 1] = 2
    with pytest.raises(SimulationError, match="self-traffic"):
        init_episode(line3, line3_routes, TrafficMatrix(demand),
                     no_interference(4), seed=0, budget=tiny_budget(4))
