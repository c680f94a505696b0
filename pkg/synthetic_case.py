import numpy as np

from grid_model import (
    CoordCase, DistributionBranch, DistributionBus, DistributionGenerator,
    DistributionSystem, InterfaceLink, TransmissionBus, TransmissionGenerator,
    TransmissionLine, DEFAULT_BASE_MVA
)


TEMPLATE_ID = 'FEEDER'
# capacity margin over total load
RESERVE = 1.25
BID_PRICE = 30.0


def _transmission(rng, n_buses, extra_lines):
    bus_ids = ["B%d" % (i + 1) for i in range(n_buses)]
    loads = np.round(rng.uniform(20.0, 100.0, n_buses), 1)

    # ring for connectivity, chords for meshing
    pairs = [(i, (i + 1) % n_buses) for i in range(n_buses)]
    if n_buses == 2:
        pairs = [(0, 1)]
    existing = {frozenset(p) for p in pairs}
    candidates = [(i, j) for i in range(n_buses) for j in range(i + 2, n_buses)
                  if frozenset((i, j)) not in existing]
    if candidates and extra_lines > 0:
        picks = rng.choice(len(candidates), size=min(extra_lines,
                                                      len(candidates)),
                           replace=False)
        pairs += [candidates[k] for k in sorted(picks)]
    lines = tuple(
        TransmissionLine(
            id="L%d" % (k + 1), from_bus=bus_ids[i], to_bus=bus_ids[j],
            reactance=float(np.round(rng.uniform(0.05, 0.2), 3)),
            flow_limit=250.0)
        for k, (i, j) in enumerate(pairs))

    gen_buses = list(range(0, n_buses, 2))
    p_max = np.round(rng.uniform(150.0, 250.0, len(gen_buses)), 1)
    capacity = float(p_max.sum())
    if capacity < RESERVE * loads.sum():
        loads = np.round(loads * capacity / (RESERVE * loads.sum()), 1)
    p_min = np.round(rng.uniform(10.0, 30.0, len(gen_buses)), 1)
    offers = np.round(rng.uniform(10.0, 40.0, len(gen_buses)), 2)
    generators = tuple(
        TransmissionGenerator(
            id="G%d" % (k + 1), bus=bus_ids[b], p_min=float(p_min[k]),
            p_max=float(p_max[k]), offer_price=float(offers[k]))
        for k, b in enumerate(gen_buses))

    buses = tuple(
        TransmissionBus(id=bus_ids[i], active_load=float(loads[i]),
                        load_bid_price=BID_PRICE)
        for i in range(n_buses))
    return buses, lines, generators


def template_feeder(rng, n_buses, max_bus_load):
    """Radial chain feeder whose local units can cover any replicated load.

    :param Generator rng: numpy random generator
    :param int n_buses: Buses including the root
    :param float max_bus_load: Largest transmission bus load a copy may
                               take over
    """
    ids = [str(i) for i in range(n_buses)]
    loads = np.round(rng.uniform(5.0, 15.0, n_buses - 1), 1)
    # local capacity must cover the scaled load of every bus
    factor = max(1.0, max_bus_load / float(loads.sum()))
    buses = [DistributionBus(id=ids[0], active_load=0.0, reactive_load=0.0,
                             v_sq_min=0.81, v_sq_max=1.21, is_root=True)]
    branches = []
    generators = []
    for k in range(1, n_buses):
        load = float(loads[k - 1])
        buses.append(DistributionBus(
            id=ids[k], active_load=load,
            reactive_load=float(np.round(0.2 * load, 2)),
            v_sq_min=0.81, v_sq_max=1.21))
        branches.append(DistributionBranch(
            id="%s-%s" % (ids[k - 1], ids[k]), sending_bus=ids[k],
            receiving_bus=ids[k - 1],
            resistance=float(np.round(rng.uniform(0.001, 0.005), 4)),
            reactance=float(np.round(rng.uniform(0.002, 0.01), 4)),
            conductance=0.0, susceptance=0.0, apparent_limit=500.0))
        cap = float(np.round(2.0 * load * factor, 1))
        generators.append(DistributionGenerator(
            id="DG%d" % k, bus=ids[k], p_min=0.0, p_max=cap,
            q_min=-cap, q_max=cap,
            incremental_cost=float(np.round(rng.uniform(4.0, 25.0), 2))))
    costs = [g.incremental_cost for g in generators]
    return DistributionSystem(
        id=TEMPLATE_ID, buses=tuple(buses), branches=tuple(branches),
        generators=tuple(generators), tariff=20.0, bid_price=min(costs),
        offer_price=max(costs))


def generate_case(seed=0, n_buses=12, feeder_buses=4, extra_lines=4,
                  base_mva=DEFAULT_BASE_MVA):
    """Seeded meshed transmission case with one template feeder.

    The feeder hangs off the first bus; the remaining buses are free hosts
    for replication studies.

    :param int seed: Random seed
    :param int n_buses: Transmission buses
    :param int feeder_buses: Feeder buses including the root
    :param int extra_lines: Chords added to the ring
    """
    if n_buses < 2 or feeder_buses < 2:
        raise ValueError("Synthetic cases need at least two buses per level")
    rng = np.random.default_rng(seed)
    buses, lines, generators = _transmission(rng, n_buses, extra_lines)
    feeder = template_feeder(rng, feeder_buses,
                             max(b.active_load for b in buses))
    host = buses[0].id
    buses = (TransmissionBus(id=host, active_load=buses[0].active_load,
                             load_bid_price=BID_PRICE,
                             hosts_dso=feeder.id),) + buses[1:]
    return CoordCase(
        buses=buses, lines=lines, generators=generators,
        distribution_systems=(feeder,),
        interfaces=(InterfaceLink(transmission_bus=host,
                                  distribution_system=feeder.id,
                                  exchange_limit=60.0),),
        base_mva=float(base_mva), per_unit=False)
