"""Report assembly and rendering (table, CSV, JSON).

A report is a plain dict::

    {"manifest": {...}, "summary": {...}, "sections": {name: {"columns": [...], "rows": [...]}}}

Human tables round to 6 significant digits; CSV and JSON keep full precision.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .ga import OpfResult
from .losses import LossReport, bus_generation, loss_report
from .network import Network
from .solver import LoadFlowSolution
from .strategies import ComparisonRow


def make_manifest(command: str, case_path: str, case_bytes: bytes, options: dict,
                  strategies: list[str] | None = None, ga_config: str | None = None) -> dict:
    return {
        "command": command,
        "case_path": str(case_path),
        "case_sha256": hashlib.sha256(case_bytes).hexdigest(),
        "options": options,
        "strategies": list(strategies or []),
        "ga_config": ga_config,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _section(columns, rows) -> dict:
    return {"columns": list(columns), "rows": [list(r) for r in rows]}


def _f(x) -> float:
    return float(x)


def solve_sections(network: Network, solution: LoadFlowSolution, losses: LossReport) -> dict:
    base = network.base_mva
    pg, qg = bus_generation(network, solution)
    buses = []
    for k, b in enumerate(network.buses):
        buses.append([b.id, b.kind.value, _f(solution.state.v_mag[k]),
                      _f(np.degrees(solution.state.v_ang[k])),
                      _f(pg[k] * base), _f(qg[k] * base),
                      _f(b.p_demand * base), _f(b.q_demand * base)])
    branches = []
    for f in losses.branch_flows:
        branches.append([f.index + 1, f.from_bus, f.to_bus,
                         _f(f.s_from.real * base), _f(f.s_from.imag * base),
                         _f(f.s_to.real * base), _f(f.s_to.imag * base),
                         _f(f.p_loss * base), _f(f.q_loss * base), _f(f.q_charging * base)])
    return {
        "buses": _section(["bus", "kind", "v_pu", "angle_deg", "p_gen_MW", "q_gen_MVAR",
                           "p_load_MW", "q_load_MVAR"], buses),
        "branches": _section(["branch", "from", "to", "p_from_MW", "q_from_MVAR", "p_to_MW",
                              "q_to_MVAR", "p_loss_MW", "q_loss_MVAR", "q_charging_MVAR"], branches),
    }


def solve_summary(solution: LoadFlowSolution, losses: LossReport) -> dict:
    return {
        "converged": bool(solution.converged),
        "iterations": int(solution.iterations),
        "final_mismatch_pu": _f(solution.mismatch_trace[-1]) if solution.mismatch_trace else 0.0,
        "P_loss_MW": _f(losses.total_p_loss),
        "Q_loss_MVAR": _f(losses.total_q_loss),
        "Q_charging_MVAR": _f(losses.total_q_charging),
        "Q_shunt_MVAR": _f(losses.total_q_shunt),
        "P_gen_MW": _f(losses.total_generation[0]),
        "Q_gen_MVAR": _f(losses.total_generation[1]),
        "P_load_MW": _f(losses.total_load[0]),
        "Q_load_MVAR": _f(losses.total_load[1]),
        "q_limit_switches": len(solution.q_limit_switches),
    }


def solve_report(network: Network, solution: LoadFlowSolution, losses: LossReport, manifest: dict) -> dict:
    return {"manifest": manifest, "summary": solve_summary(solution, losses),
            "sections": solve_sections(network, solution, losses)}


def comparison_report(rows: list[ComparisonRow], manifest: dict) -> dict:
    table = [[r.label, bool(r.converged), _f(r.p_loss_mw), _f(r.q_loss_mvar), _f(r.delta_p_mw),
              int(r.min_v_bus), _f(r.min_v)] for r in rows]
    return {
        "manifest": manifest,
        "summary": {"scenarios": len(rows), "all_converged": all(r.converged for r in rows)},
        "sections": {"comparison": _section(
            ["scenario", "converged", "P_loss_MW", "Q_loss_MVAR", "dP_vs_base_MW", "min_v_bus", "min_v_pu"],
            table)},
    }


def opf_report(results: list[OpfResult], nr_loss_mw: float, manifest: dict,
               control_names: list[str]) -> dict:
    losses = [r.best_loss_mw for r in results]
    mean = float(np.mean(losses))
    runs = [[k + 1, r.seed, _f(r.best_loss_mw), r.evaluations, r.history[-1].best_fitness]
            for k, r in enumerate(results)]
    runs.append(["average", "-", mean, sum(r.evaluations for r in results),
                 _f(np.mean([r.best_fitness for r in results]))])
    best = results[int(np.argmin(losses))]
    controls = [[name, _f(value)] for name, value in zip(control_names, best.best_controls)]
    history = []
    for k, r in enumerate(results):
        for g, h in enumerate(r.history):
            history.append([k + 1, g, _f(h.best_loss_mw), _f(h.best_fitness), _f(h.mean_fitness)])
    sections = {
        "runs": _section(["run", "seed", "best_loss_MW", "evaluations", "best_fitness"], runs),
        "best_controls": _section(["control", "value"], controls),
    }
    if best.solution is not None:
        detail = solve_sections(best.network, best.solution, loss_report(best.network, best.solution))
        sections.update({f"best_{name}": sec for name, sec in detail.items()})
    sections["history"] = _section(["run", "generation", "best_loss_MW", "best_fitness", "mean_fitness"],
                                   history)
    return {
        "manifest": manifest,
        "summary": {
            "runs": len(results),
            "mean_best_loss_MW": mean,
            "nr_loss_MW": _f(nr_loss_mw),
            "mean_reduction_pct": _f(100.0 * (nr_loss_mw - mean) / nr_loss_mw),
            "best_run": int(np.argmin(losses)) + 1,
        },
        "sections": sections,
    }


# -- rendering ----------------------------------------------------------------

def _sig(value) -> str:
    if isinstance(value, bool) or not isinstance(value, float):
        return str(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def _full(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_table(report: dict, skip: tuple[str, ...] = ()) -> str:
    out = []
    for name, sec in report["sections"].items():
        if name in skip:
            continue
        cells = [sec["columns"]] + [[_sig(v) for v in row] for row in sec["rows"]]
        widths = [max(len(str(r[c])) for r in cells) for c in range(len(sec["columns"]))]
        out.append(f"== {name} ==")
        for k, row in enumerate(cells):
            out.append("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))
            if k == 0:
                out.append("  ".join("-" * w for w in widths))
        out.append("")
    summary = report["summary"]
    out.append("== summary ==")
    out.append(" ".join(f"{k}={_sig(v)}" for k, v in summary.items()))
    out.append("# manifest " + json.dumps(report["manifest"], sort_keys=True))
    return "\n".join(out) + "\n"


def render_csv(report: dict) -> str:
    buf = io.StringIO()
    buf.write("# manifest " + json.dumps(report["manifest"], sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    buf.write("# section summary\n")
    writer.writerow(["key", "value"])
    for k, v in report["summary"].items():
        writer.writerow([k, _full(v)])
    for name, sec in report["sections"].items():
        buf.write(f"# section {name}\n")
        writer.writerow(sec["columns"])
        for row in sec["rows"]:
            writer.writerow([_full(v) for v in row])
    return buf.getvalue()


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def render_json(report: dict) -> str:
    return json.dumps(_json_safe(report), indent=2) + "\n"


def render(report: dict, fmt: str) -> str:
    if fmt == "table":
        return render_table(report, skip=("history",))
    if fmt == "csv":
        return render_csv(report)
    if fmt == "json":
        return render_json(report)
    raise ValueError(f"unknown format {fmt!r}")


def parse_csv(text: str) -> dict:
    """Read :func:`render_csv` output back into a report-shaped dict of strings."""
    manifest = {}
    sections: dict[str, list[list[str]]] = {}
    current = None
    lines = text.splitlines()
    for line in lines:
        if line.startswith("# manifest "):
            manifest = json.loads(line[len("# manifest "):])
        elif line.startswith("# section "):
            current = line[len("# section "):]
            sections[current] = []
        elif current is not None and line:
            sections[current].append(next(csv.reader([line])))
    summary = {row[0]: row[1] for row in sections.pop("summary", [])[1:]}
    return {
        "manifest": manifest,
        "summary": summary,
        "sections": {k: {"columns": v[0], "rows": v[1:]} for k, v in sections.items()},
    }


def history_csv(results: list[OpfResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run", "seed", "generation", "best_loss_MW", "best_fitness", "mean_fitness"])
    for k, r in enumerate(results):
        for g, h in enumerate(r.history):
            writer.writerow([k + 1, r.seed, g, repr(h.best_loss_mw), repr(h.best_fitness), repr(h.mean_fitness)])
    return buf.getvalue()
