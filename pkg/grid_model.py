import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import networkx as nx
from jsonschema import Draft7Validator


CASE_SCHEMA_PATH = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), 'schemas', 'tdcoord-case.json'
)

DEFAULT_BASE_MVA = 100.0


class CaseError(Exception):
    """Base class for case document errors"""


class CaseParseError(CaseError):
    """Malformed case document or uniqueness violation"""


class CaseReferenceError(CaseError):
    """Dangling or missing cross-reference in a case document"""


class ReplicationError(CaseError):
    """DSO replication request cannot be applied"""


class PerUnitError(CaseError):
    """Invalid system base"""


@dataclass(frozen=True)
class TransmissionBus:
    id: str
    active_load: float
    load_bid_price: float
    hosts_dso: Optional[str] = None


@dataclass(frozen=True)
class TransmissionLine:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    flow_limit: float


@dataclass(frozen=True)
class TransmissionGenerator:
    id: str
    bus: str
    p_min: float
    p_max: float
    offer_price: float


@dataclass(frozen=True)
class DistributionBranch:
    id: str
    sending_bus: str
    receiving_bus: str
    resistance: float
    reactance: float
    conductance: float
    susceptance: float
    apparent_limit: float

    @property
    def lossless(self):
        return self.resistance == 0.0 and self.reactance == 0.0


@dataclass(frozen=True)
class DistributionBus:
    id: str
    active_load: float
    reactive_load: float
    v_sq_min: float
    v_sq_max: float
    is_root: bool = False


@dataclass(frozen=True)
class DistributionGenerator:
    id: str
    bus: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    incremental_cost: float


@dataclass(frozen=True)
class DistributionSystem:
    id: str
    buses: Tuple[DistributionBus, ...]
    branches: Tuple[DistributionBranch, ...]
    generators: Tuple[DistributionGenerator, ...]
    tariff: float
    bid_price: float
    offer_price: float

    @property
    def root(self):
        """Return the unique root bus, or None if the root is ambiguous."""
        roots = [b for b in self.buses if b.is_root]
        return roots[0] if len(roots) == 1 else None

    def upstream_branch(self, bus_id):
        """Branch whose sending bus is bus_id (child->parent orientation)."""
        for branch in self.branches:
            if branch.sending_bus == bus_id:
                return branch
        return None

    def total_active_load(self):
        return sum(b.active_load for b in self.buses)

    def graph(self):
        g = nx.MultiGraph()
        g.add_nodes_from(b.id for b in self.buses)
        for branch in self.branches:
            g.add_edge(branch.sending_bus, branch.receiving_bus, key=branch.id)
        return g


@dataclass(frozen=True)
class InterfaceLink:
    transmission_bus: str
    distribution_system: str
    exchange_limit: float


@dataclass(frozen=True)
class CoordCase:
    buses: Tuple[TransmissionBus, ...]
    lines: Tuple[TransmissionLine, ...]
    generators: Tuple[TransmissionGenerator, ...]
    distribution_systems: Tuple[DistributionSystem, ...]
    interfaces: Tuple[InterfaceLink, ...]
    base_mva: float = DEFAULT_BASE_MVA
    per_unit: bool = False

    def bus(self, bus_id):
        for bus in self.buses:
            if bus.id == bus_id:
                return bus
        raise KeyError(bus_id)

    def dso(self, dso_id):
        for ds in self.distribution_systems:
            if ds.id == dso_id:
                return ds
        raise KeyError(dso_id)

    def link_for(self, dso_id):
        for link in self.interfaces:
            if link.distribution_system == dso_id:
                return link
        return None

    def dso_ids(self):
        """DSO ids in the deterministic order used by every reduction."""
        return sorted(ds.id for ds in self.distribution_systems)

    def coupled_links(self):
        """Interface links that actually couple a DSO to the TSO.

        Links with a zero exchange limit are decoupled: the DSO balances on
        its own and the hosting transmission bus keeps a hard balance.
        Ordered by transmission bus position.
        """
        order = {bus.id: idx for idx, bus in enumerate(self.buses)}
        links = [link for link in self.interfaces if link.exchange_limit > 0.0]
        return sorted(links, key=lambda link: order[link.transmission_bus])

    def coupled_buses(self):
        return [link.transmission_bus for link in self.coupled_links()]

    @property
    def slack_bus(self):
        return self.buses[0].id

    def total_active_load(self):
        return (
            sum(bus.active_load for bus in self.buses) +
            sum(ds.total_active_load() for ds in self.distribution_systems)
        )

    def transmission_graph(self):
        g = nx.MultiGraph()
        g.add_nodes_from(bus.id for bus in self.buses)
        for line in self.lines:
            g.add_edge(line.from_bus, line.to_bus, key=line.id)
        return g


@dataclass(frozen=True)
class ValidationFinding:
    code: str
    subject: str
    args: Tuple = ()

    def message(self, translator):
        text = translator.tr("validation.%s" % self.code)
        try:
            return text % ((self.subject,) + tuple(self.args))
        except TypeError:
            return "%s: %s" % (self.subject, text)


@dataclass(frozen=True)
class ValidationReport:
    findings: Tuple[ValidationFinding, ...] = field(default_factory=tuple)

    @property
    def is_clean(self):
        return len(self.findings) == 0

    def codes(self):
        return [f.code for f in self.findings]

    def messages(self, translator):
        return [f.message(translator) for f in self.findings]

    def as_dict(self, translator):
        return {
            'valid': self.is_clean,
            'findings': [
                {
                    'code': f.code,
                    'subject': f.subject,
                    'message': f.message(translator)
                }
                for f in self.findings
            ]
        }


def load_case(text):
    """Parse a case document into a fully resolved CoordCase.

    :param str text: Case document (JSON)
    """
    try:
        doc = json.loads(text)
    except ValueError as e:
        raise CaseParseError("Malformed case document: %s" % e)

    with open(CASE_SCHEMA_PATH) as f:
        schema = json.load(f)
    errors = sorted(
        Draft7Validator(schema).iter_errors(doc), key=lambda e: list(e.path)
    )
    if errors:
        error = errors[0]
        path = "/".join(str(p) for p in error.path) or "<root>"
        raise CaseParseError("%s: %s" % (path, error.message))

    transmission = doc['transmission']
    buses = tuple(
        TransmissionBus(
            id=str(b['id']),
            active_load=float(b['active_load']),
            load_bid_price=float(b['load_bid_price']),
            hosts_dso=b.get('hosts_dso')
        )
        for b in transmission['buses']
    )
    lines = tuple(
        TransmissionLine(
            id=str(l['id']), from_bus=str(l['from_bus']),
            to_bus=str(l['to_bus']), reactance=float(l['reactance']),
            flow_limit=float(l['flow_limit'])
        )
        for l in transmission['lines']
    )
    generators = tuple(
        TransmissionGenerator(
            id=str(g['id']), bus=str(g['bus']), p_min=float(g['p_min']),
            p_max=float(g['p_max']), offer_price=float(g['offer_price'])
        )
        for g in transmission['generators']
    )
    systems = tuple(
        _parse_distribution_system(d) for d in doc['distribution_systems']
    )
    interfaces = tuple(
        InterfaceLink(
            transmission_bus=str(i['transmission_bus']),
            distribution_system=str(i['distribution_system']),
            exchange_limit=float(i['exchange_limit'])
        )
        for i in doc['interfaces']
    )

    _check_unique("transmission bus", [b.id for b in buses])
    _check_unique("transmission line", [l.id for l in lines])
    _check_unique("distribution system", [d.id for d in systems])
    _check_unique(
        "generator",
        [g.id for g in generators] +
        [g.id for d in systems for g in d.generators]
    )
    for ds in systems:
        _check_unique("bus of %s" % ds.id, [b.id for b in ds.buses])
        _check_unique("branch of %s" % ds.id, [b.id for b in ds.branches])

    case = CoordCase(
        buses=buses, lines=lines, generators=generators,
        distribution_systems=systems, interfaces=interfaces,
        base_mva=float(doc.get('base_mva', DEFAULT_BASE_MVA)),
        per_unit=bool(doc.get('per_unit', False))
    )
    _check_references(case)

    # derive hosted DSO per bus from interface links
    hosted = {i.transmission_bus: i.distribution_system for i in interfaces}
    buses = tuple(
        b if b.hosts_dso is not None or b.id not in hosted
        else replace(b, hosts_dso=hosted[b.id])
        for b in case.buses
    )
    systems = tuple(_orient_branches(ds) for ds in case.distribution_systems)
    return replace(case, buses=buses, distribution_systems=systems)


def _parse_distribution_system(d):
    buses = tuple(
        DistributionBus(
            id=str(b['id']), active_load=float(b['active_load']),
            reactive_load=float(b['reactive_load']),
            v_sq_min=float(b['v_sq_min']), v_sq_max=float(b['v_sq_max']),
            is_root=bool(b.get('is_root', False))
        )
        for b in d['buses']
    )
    branches = tuple(
        DistributionBranch(
            id=str(l['id']), sending_bus=str(l['sending_bus']),
            receiving_bus=str(l['receiving_bus']),
            resistance=float(l['resistance']), reactance=float(l['reactance']),
            conductance=float(l.get('conductance', 0.0)),
            susceptance=float(l.get('susceptance', 0.0)),
            apparent_limit=float(l['apparent_limit'])
        )
        for l in d['branches']
    )
    generators = tuple(
        DistributionGenerator(
            id=str(g['id']), bus=str(g['bus']), p_min=float(g['p_min']),
            p_max=float(g['p_max']), q_min=float(g['q_min']),
            q_max=float(g['q_max']),
            incremental_cost=float(g['incremental_cost'])
        )
        for g in d['generators']
    )
    costs = [g.incremental_cost for g in generators] or [0.0]
    # DSO bid/offer prices default to cheapest/most expensive unit cost
    return DistributionSystem(
        id=str(d['id']), buses=buses, branches=branches,
        generators=generators, tariff=float(d['tariff']),
        bid_price=float(d.get('bid_price', min(costs))),
        offer_price=float(d.get('offer_price', max(costs)))
    )


def _check_unique(kind, ids):
    seen = set()
    for ident in ids:
        if ident in seen:
            raise CaseParseError("Duplicated %s id '%s'" % (kind, ident))
        seen.add(ident)


def _check_references(case):
    if not case.buses:
        raise CaseReferenceError("Case has no transmission buses")
    bus_ids = {b.id for b in case.buses}
    dso_ids = {d.id for d in case.distribution_systems}
    for line in case.lines:
        for end in (line.from_bus, line.to_bus):
            if end not in bus_ids:
                raise CaseReferenceError(
                    "Line '%s' references unknown bus '%s'" % (line.id, end))
    for gen in case.generators:
        if gen.bus not in bus_ids:
            raise CaseReferenceError(
                "Generator '%s' references unknown bus '%s'" % (gen.id, gen.bus))
    for bus in case.buses:
        if bus.hosts_dso is not None and bus.hosts_dso not in dso_ids:
            raise CaseReferenceError(
                "Bus '%s' hosts unknown DSO '%s'" % (bus.id, bus.hosts_dso))
    for ds in case.distribution_systems:
        if not ds.buses:
            raise CaseReferenceError("DSO '%s' has no buses" % ds.id)
        local = {b.id for b in ds.buses}
        for branch in ds.branches:
            for end in (branch.sending_bus, branch.receiving_bus):
                if end not in local:
                    raise CaseReferenceError(
                        "Branch '%s' of DSO '%s' references unknown bus '%s'"
                        % (branch.id, ds.id, end))
        for gen in ds.generators:
            if gen.bus not in local:
                raise CaseReferenceError(
                    "Generator '%s' of DSO '%s' references unknown bus '%s'"
                    % (gen.id, ds.id, gen.bus))
    for link in case.interfaces:
        if link.transmission_bus not in bus_ids:
            raise CaseReferenceError(
                "Interface references unknown bus '%s'" % link.transmission_bus)
        if link.distribution_system not in dso_ids:
            raise CaseReferenceError(
                "Interface references unknown DSO '%s'"
                % link.distribution_system)


def _orient_branches(ds):
    """Reorient branches child->parent relative to the root.

    Non-radial systems are returned unchanged; validate() reports them.
    """
    root = ds.root
    graph = ds.graph()
    if root is None or not nx.is_tree(graph):
        return ds
    depth = nx.single_source_shortest_path_length(graph, root.id)
    branches = []
    for branch in ds.branches:
        if depth[branch.sending_bus] < depth[branch.receiving_bus]:
            branch = replace(
                branch, sending_bus=branch.receiving_bus,
                receiving_bus=branch.sending_bus
            )
        branches.append(branch)
    return replace(ds, branches=tuple(branches))


def render_case(case):
    """Serialize a CoordCase to its canonical case document.

    :param CoordCase case: Case
    """
    doc = {
        'base_mva': case.base_mva,
        'per_unit': case.per_unit,
        'transmission': {
            'buses': [_drop_none(vars(b)) for b in case.buses],
            'lines': [dict(vars(l)) for l in case.lines],
            'generators': [dict(vars(g)) for g in case.generators]
        },
        'distribution_systems': [
            {
                'id': ds.id,
                'tariff': ds.tariff,
                'bid_price': ds.bid_price,
                'offer_price': ds.offer_price,
                'buses': [dict(vars(b)) for b in ds.buses],
                'branches': [dict(vars(l)) for l in ds.branches],
                'generators': [dict(vars(g)) for g in ds.generators]
            }
            for ds in case.distribution_systems
        ],
        'interfaces': [dict(vars(i)) for i in case.interfaces]
    }
    return json.dumps(doc, indent=2)


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


def validate(case):
    """Check every case invariant and collect findings.

    Findings are data; an empty report means the case is valid.

    :param CoordCase case: Case
    """
    findings = []

    def finding(code, subject, *args):
        findings.append(ValidationFinding(code, str(subject), tuple(args)))

    if case.base_mva <= 0:
        finding('base_mva_not_positive', 'case', case.base_mva)

    # transmission system
    graph = case.transmission_graph()
    if len(case.buses) > 0 and not nx.is_connected(graph):
        finding('transmission_disconnected', 'transmission',
                nx.number_connected_components(graph))
    for bus in case.buses:
        if bus.active_load < 0:
            finding('negative_load', bus.id, bus.active_load)
        if bus.load_bid_price < 0:
            finding('negative_price', bus.id, bus.load_bid_price)
    for line in case.lines:
        if line.from_bus == line.to_bus:
            finding('line_self_loop', line.id)
        if line.reactance <= 0:
            finding('reactance_not_positive', line.id, line.reactance)
        if line.flow_limit <= 0:
            finding('limit_not_positive', line.id, line.flow_limit)
    for gen in case.generators:
        if gen.p_min < 0 or gen.p_min > gen.p_max:
            finding('generator_limits', gen.id, gen.p_min, gen.p_max)

    # interfaces
    links_per_dso = {}
    links_per_bus = {}
    for link in case.interfaces:
        links_per_dso.setdefault(link.distribution_system, []).append(link)
        links_per_bus.setdefault(link.transmission_bus, []).append(link)
        if link.exchange_limit < 0:
            finding('exchange_limit_negative', link.distribution_system,
                    link.exchange_limit)
    for bus_id, links in links_per_bus.items():
        if len(links) > 1:
            finding('bus_hosts_several_dsos', bus_id, len(links))
    for ds in case.distribution_systems:
        count = len(links_per_dso.get(ds.id, []))
        if count != 1:
            finding('dso_link_count', ds.id, count)
    for bus in case.buses:
        linked = [l.distribution_system for l in links_per_bus.get(bus.id, [])]
        if bus.hosts_dso is not None and bus.hosts_dso not in linked:
            finding('hosts_dso_mismatch', bus.id, bus.hosts_dso)

    # distribution systems
    for ds in case.distribution_systems:
        findings.extend(_validate_distribution_system(ds))

    return ValidationReport(tuple(findings))


def _validate_distribution_system(ds):
    findings = []

    def finding(code, subject, *args):
        findings.append(ValidationFinding(code, str(subject), tuple(args)))

    roots = [b for b in ds.buses if b.is_root]
    if len(roots) != 1:
        finding('root_count', ds.id, len(roots))
    graph = ds.graph()
    if len(ds.branches) != len(ds.buses) - 1:
        finding('not_radial', ds.id, len(ds.branches), len(ds.buses))
    if len(ds.buses) > 0 and not nx.is_connected(graph):
        finding('dso_disconnected', ds.id)
    for bus in ds.buses:
        if bus.v_sq_min <= 0 or bus.v_sq_min > bus.v_sq_max:
            finding('voltage_bounds', "%s/%s" % (ds.id, bus.id),
                    bus.v_sq_min, bus.v_sq_max)
        if bus.active_load < 0 or bus.reactive_load < 0:
            finding('negative_load', "%s/%s" % (ds.id, bus.id),
                    min(bus.active_load, bus.reactive_load))
    for branch in ds.branches:
        subject = "%s/%s" % (ds.id, branch.id)
        if branch.resistance < 0 or branch.reactance < 0:
            finding('impedance_negative', subject)
        if branch.apparent_limit <= 0:
            finding('limit_not_positive', subject, branch.apparent_limit)
        if branch.sending_bus == branch.receiving_bus:
            finding('line_self_loop', subject)
    for gen in ds.generators:
        if gen.p_min > gen.p_max:
            finding('generator_limits', gen.id, gen.p_min, gen.p_max)
        if gen.q_min > gen.q_max:
            finding('generator_limits', gen.id, gen.q_min, gen.q_max)
    if ds.tariff < 0:
        finding('negative_price', ds.id, ds.tariff)
    return findings


def replicate_dsos(case, template, host_buses):
    """Copy a template DSO onto transmission buses for scaling studies.

    Each host bus loses its direct load to a copy of the template; copied
    loads are scaled by a common factor so total system load is conserved.

    :param CoordCase case: Case
    :param str template: Template DSO ID
    :param list host_buses: Transmission bus IDs receiving a copy
    """
    try:
        source = case.dso(template)
    except KeyError:
        raise ReplicationError("Template DSO '%s' not found" % template)
    link = case.link_for(template)
    if link is None:
        raise ReplicationError("Template DSO '%s' has no interface" % template)
    host_buses = list(host_buses)
    if not host_buses:
        return case
    if len(set(host_buses)) != len(host_buses):
        raise ReplicationError("Host buses must be distinct")

    hosted = {l.transmission_bus for l in case.interfaces}
    removed_load = 0.0
    for bus_id in host_buses:
        try:
            bus = case.bus(bus_id)
        except KeyError:
            raise ReplicationError("Unknown host bus '%s'" % bus_id)
        if bus_id in hosted or bus.hosts_dso is not None:
            raise ReplicationError("Bus '%s' already hosts a DSO" % bus_id)
        removed_load += bus.active_load

    template_load = source.total_active_load()
    if template_load <= 0.0:
        if removed_load > 0.0:
            raise ReplicationError(
                "Template DSO '%s' has no load to scale" % template)
        factor = 1.0
    else:
        factor = removed_load / (len(host_buses) * template_load)

    copies = []
    links = []
    for bus_id in host_buses:
        copy_id = "%s@%s" % (template, bus_id)
        copies.append(replace(
            source,
            id=copy_id,
            buses=tuple(
                replace(b, active_load=b.active_load * factor,
                        reactive_load=b.reactive_load * factor)
                for b in source.buses
            ),
            generators=tuple(
                replace(g, id="%s@%s" % (g.id, bus_id))
                for g in source.generators
            )
        ))
        links.append(InterfaceLink(
            transmission_bus=bus_id, distribution_system=copy_id,
            exchange_limit=link.exchange_limit
        ))

    hosts = {bus_id: "%s@%s" % (template, bus_id) for bus_id in host_buses}
    buses = tuple(
        replace(b, active_load=0.0, hosts_dso=hosts[b.id])
        if b.id in hosts else b
        for b in case.buses
    )
    return replace(
        case, buses=buses,
        distribution_systems=case.distribution_systems + tuple(copies),
        interfaces=case.interfaces + tuple(links)
    )


def to_per_unit(case):
    """Divide all MW/MVAr/MVA quantities by the system base.

    Prices stay in currency/MW; already normalized cases are returned as is.

    :param CoordCase case: Case
    """
    if case.base_mva <= 0:
        raise PerUnitError("base_mva must be positive, got %s" % case.base_mva)
    if case.per_unit:
        return case
    return replace(_scale_case(case, 1.0 / case.base_mva), per_unit=True)


def from_per_unit(case):
    """Inverse of to_per_unit.

    :param CoordCase case: Case
    """
    if case.base_mva <= 0:
        raise PerUnitError("base_mva must be positive, got %s" % case.base_mva)
    if not case.per_unit:
        return case
    return replace(_scale_case(case, case.base_mva), per_unit=False)


def _scale_case(case, k):
    def scaled_system(ds):
        return replace(
            ds,
            buses=tuple(
                replace(b, active_load=b.active_load * k,
                        reactive_load=b.reactive_load * k)
                for b in ds.buses
            ),
            branches=tuple(
                replace(l, apparent_limit=l.apparent_limit * k)
                for l in ds.branches
            ),
            generators=tuple(
                replace(g, p_min=g.p_min * k, p_max=g.p_max * k,
                        q_min=g.q_min * k, q_max=g.q_max * k)
                for g in ds.generators
            )
        )

    return replace(
        case,
        buses=tuple(replace(b, active_load=b.active_load * k)
                    for b in case.buses),
        lines=tuple(replace(l, flow_limit=l.flow_limit * k)
                    for l in case.lines),
        generators=tuple(replace(g, p_min=g.p_min * k, p_max=g.p_max * k)
                         for g in case.generators),
        distribution_systems=tuple(
            scaled_system(ds) for ds in case.distribution_systems),
        interfaces=tuple(replace(i, exchange_limit=i.exchange_limit * k)
                         for i in case.interfaces)
    )
