import csv
import json
import os

from coordinator import ConvergenceTrace


FLOAT_FORMAT = '%.17g'
# columns excluded when comparing traces of repeated runs
WALL_CLOCK_COLUMNS = ('elapsed_s',)

SAVINGS_COLUMNS = (
    'n_dsos', 'tso_savings_pct', 'dso_savings_pct', 'cpu_seconds',
    'coordinated_tso_cost', 'coordinated_dso_cost',
    'uncoordinated_tso_cost', 'uncoordinated_dso_cost', 'hosts'
)


def _fmt(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, int):
        return str(value)
    return FLOAT_FORMAT % value


def run_directory(cfg):
    """Create and return the config-hash named directory of a run.

    :param RunConfig cfg: Run configuration
    """
    path = cfg.run_dir()
    os.makedirs(path, exist_ok=True)
    return path


def trace_columns(case):
    buses = case.coupled_buses()
    dsos = sorted(l.distribution_system for l in case.coupled_links())
    return (
        ['iter', 'surrogate_dual', 'lagrangian', 'direction_norm', 'gap',
         'stepsize', 'penalty'] +
        ['lambda_%s' % b for b in buses] +
        ['h_%s' % b for b in buses] +
        ['psi_buy_%s' % d for d in dsos] +
        ['psi_sell_%s' % d for d in dsos] +
        ['r_buy_%s' % d for d in dsos] +
        ['r_sell_%s' % d for d in dsos] +
        ['surrogate_unmet', 'elapsed_s']
    )


def trace_rows(trace, case):
    """One list of formatted cells per iteration record."""
    buses = case.coupled_buses()
    dsos = sorted(l.distribution_system for l in case.coupled_links())
    rows = []
    for rec in trace.records:
        rows.append(
            [_fmt(rec.k), _fmt(rec.surrogate_dual), _fmt(rec.lagrangian),
             _fmt(rec.direction_norm), _fmt(rec.gap), _fmt(rec.stepsize),
             _fmt(rec.penalty)] +
            [_fmt(rec.lambdas[b]) for b in buses] +
            [_fmt(rec.violations[b]) for b in buses] +
            [_fmt(rec.psi_buy[d]) for d in dsos] +
            [_fmt(rec.psi_sell[d]) for d in dsos] +
            [_fmt(rec.buy_residuals[d]) for d in dsos] +
            [_fmt(rec.sell_residuals[d]) for d in dsos] +
            [_fmt(bool(rec.surrogate_unmet)), _fmt(rec.elapsed)]
        )
    return rows


def write_trace(trace, case, path):
    """Write the convergence trace CSV.

    :param ConvergenceTrace trace: Coordination trace
    :param CoordCase case: Case the trace was computed on
    :param str path: Output file
    """
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(trace_columns(case))
        writer.writerows(trace_rows(trace, case))
    return path


def read_trace(path):
    """Read a trace CSV into a list of dicts with float values.

    Empty cells become None.
    """
    rows = []
    with open(path, newline='', encoding='utf-8') as f:
        for row in csv.DictReader(f):
            rows.append({
                key: (float(value) if value != '' else None)
                for key, value in row.items()
            })
    return rows


def masked_trace(path):
    """Trace file content without wall-clock columns."""
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        header = next(reader)
        keep = [i for i, name in enumerate(header)
                if name not in WALL_CLOCK_COLUMNS]
        lines = [[header[i] for i in keep]]
        lines += [[row[i] for i in keep] for row in reader]
    return lines


def format_solution(case, tso, dsos, prices, welfare, title, status=None):
    """Human readable dispatch summary in MW and currency/MW."""
    out = ["# %s" % title]
    if status is not None:
        out.append("status %s" % status)
    out.append("welfare %s" % (FLOAT_FORMAT % welfare))
    out.append("")
    out.append("[generators]")
    for gen in case.generators:
        out.append("%s commit=%d p=%s" % (
            gen.id, tso.commit[gen.id], FLOAT_FORMAT % tso.gen_p[gen.id]))
    out.append("")
    out.append("[lines]")
    for line in case.lines:
        out.append("%s flow=%s" % (line.id, FLOAT_FORMAT % tso.flow[line.id]))
    out.append("")
    out.append("[prices]")
    order = {bus.id: idx for idx, bus in enumerate(case.buses)}
    for bus_id in sorted(prices, key=order.get):
        out.append("%s lambda=%s" % (bus_id, FLOAT_FORMAT % prices[bus_id]))
    for dso_id in sorted(dsos):
        sol = dsos[dso_id]
        out.append("")
        out.append("[dso %s]" % dso_id)
        out.append("sell=%s buy=%s" % (FLOAT_FORMAT % sol.sell,
                                       FLOAT_FORMAT % sol.buy))
        for gen_id in sorted(sol.gen_p):
            out.append("%s p=%s q=%s" % (
                gen_id, FLOAT_FORMAT % sol.gen_p[gen_id],
                FLOAT_FORMAT % sol.gen_q[gen_id]))
    return "\n".join(out) + "\n"


def write_solution(result, case, path):
    """Write solution.out for a coordination trace or a reference solution.

    :param result: ConvergenceTrace or ReferenceSolution
    :param CoordCase case: Case
    :param str path: Output file
    """
    if isinstance(result, ConvergenceTrace):
        primal = result.final_primal
        if primal is None:
            text = "# %s coordination\nstatus %s\nno coupling-feasible " \
                "point restored\n" % (result.method, result.terminal_status)
        else:
            text = format_solution(
                case, primal['tso'], primal['dsos'], result.final_lambdas,
                primal['welfare'], "%s coordination" % result.method,
                result.terminal_status)
    else:
        text = format_solution(case, result.tso, result.dsos, result.lmps,
                               result.welfare, "monolithic solve")
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    return path


def write_savings(reports, path):
    """Write one savings row per DSO count.

    :param list reports: SavingsReport list
    :param str path: Output file
    """
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(SAVINGS_COLUMNS)
        for report in reports:
            writer.writerow([
                _fmt(report.n_dsos), _fmt(report.tso_savings_pct),
                _fmt(report.dso_savings_pct), _fmt(report.cpu_seconds),
                _fmt(report.coordinated_tso_cost),
                _fmt(report.coordinated_dso_cost),
                _fmt(report.uncoordinated_tso_cost),
                _fmt(report.uncoordinated_dso_cost),
                " ".join(report.hosts)
            ])
    return path


def relative_errors(rows, optimum, column='lagrangian'):
    """|value - optimum| / |optimum| per iteration of a read trace."""
    scale = abs(optimum) if optimum != 0.0 else 1.0
    return {
        int(row['iter']): abs(row[column] - optimum) / scale
        for row in rows if row.get(column) is not None
    }


def write_comparison(slr_rows, baseline_rows, optimum, path):
    """Relative dual errors of an SLR and a baseline trace side by side.

    Iterations missing from one trace are left empty.
    """
    slr = relative_errors(slr_rows, optimum)
    base = relative_errors(baseline_rows, optimum)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['iter', 'slr_rel_error', 'baseline_rel_error'])
        for k in sorted(set(slr) | set(base)):
            writer.writerow([k, _fmt(slr.get(k)), _fmt(base.get(k))])
    return path


def write_meta(cfg, path, **extra):
    """Resolved configuration plus run facts as JSON.

    :param RunConfig cfg: Run configuration
    :param str path: Output file
    """
    meta = cfg.as_dict()
    meta['config_hash'] = cfg.config_hash()
    meta.update(extra)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
