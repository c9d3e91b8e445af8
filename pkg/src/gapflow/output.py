"""File outputs: trajectory CSV, event log, JSON reports, run manifests.

Everything written here is byte-reproducible for a fixed manifest: floats are
rendered with 17 significant digits (round-trip exact), JSON keys are sorted,
line endings are always "\\n", and nothing timestamp- or host-dependent is
embedded. The manifest deliberately omits the worker count, since results do
not depend on it.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .dynamics import TrajectorySegment
from .engine import CollapseEvent, TrajectorySamples
from .ensemble import EnsembleStats, OracleResult
from .model import ScenarioModel
from .version import __version__

MANIFEST_SCHEMA = "manifest/1"
MANIFEST_NAME = "manifest.json"


def fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def _write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def scenario_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# --- CSV --------------------------------------------------------------------

def _csv_rows(times, s, moduli, comp_ids, currents, current_ids) -> str:
    header = (["t", "s"]
              + [f"p_{cid}" for cid in comp_ids]
              + [f"J_{cid}" for cid in current_ids])
    lines = [",".join(header)]
    for i in range(len(times)):
        row = [fmt_float(times[i]), fmt_float(s[i])]
        row.extend(fmt_float(v) for v in moduli[i])
        row.extend(fmt_float(v) for v in currents[i])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(path, samples: TrajectorySamples):
    _write_text(path, _csv_rows(samples.times, samples.s, samples.moduli,
                                samples.component_ids, samples.currents,
                                samples.current_ids))


def write_segment_csv(path, seg: TrajectorySegment, model: ScenarioModel):
    moduli = seg.component_moduli(model)
    comp_ids = tuple(c.id for c in model.components)
    stacked = np.column_stack([moduli[cid] for cid in comp_ids]) if comp_ids \
        else np.empty((len(seg.times), 0))
    _write_text(path, _csv_rows(seg.times, seg.s, stacked, comp_ids,
                                seg.currents, seg.launch_ids))


def write_histogram_csv(path, stats: EnsembleStats, t_max: float, n_bins: int = 60):
    counts, edges = np.histogram(stats.hit_times, bins=n_bins, range=(0.0, t_max))
    lines = ["bin_left,bin_right,count"]
    for k in range(n_bins):
        lines.append(f"{fmt_float(edges[k])},{fmt_float(edges[k + 1])},{int(counts[k])}")
    _write_text(path, "\n".join(lines) + "\n")


def write_survival_csv(path, stats: EnsembleStats, oracle: OracleResult,
                       stride: int = 10):
    grid = oracle.times[::stride]
    if grid[-1] != oracle.times[-1]:
        grid = np.append(grid, oracle.times[-1])
    s_emp = stats.empirical_survival(grid)
    s_pred = oracle.survival_at(grid)
    lines = ["t,survival_empirical,survival_predicted"]
    for t, e, p in zip(grid, s_emp, s_pred):
        lines.append(f"{fmt_float(t)},{fmt_float(e)},{fmt_float(p)}")
    _write_text(path, "\n".join(lines) + "\n")


# --- JSON -------------------------------------------------------------------

def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_report_json(path, obj):
    _write_text(path, dump_json(obj))


def write_events_jsonl(path, events: list[CollapseEvent], trajectory_id: int = 0):
    lines = [json.dumps(ev.to_record(trajectory_id), sort_keys=True) for ev in events]
    _write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def ensemble_report(stats: EnsembleStats, oracle: OracleResult, comparison) -> dict:
    return {
        "stats": {
            "n": stats.n,
            "seed": stats.seed,
            "n_hits": stats.n_hits,
            "counts": {str(m): k for m, k in sorted(stats.counts.items())},
            "shares": {str(m): v for m, v in sorted(stats.shares.items())},
            "no_collapse_fraction": stats.no_collapse_fraction,
            "totals": stats.totals,
        },
        "oracle": {
            "integrals": {str(m): v for m, v in sorted(oracle.integrals.items())},
            "predicted_shares": {str(m): v for m, v in sorted(oracle.predicted_shares.items())},
            "survival_at_t_max": float(oracle.survival[-1]),
        },
        "comparison": comparison.to_dict(),
    }


# --- manifest -----------------------------------------------------------------

def build_manifest(command: str, scenario_path: str, scenario_sha256: str, *,
                   rules: str, suspended, gap_mode: str, dt: float, t_max: float,
                   seed: int, n: int = 1, sample_every: int = 1,
                   policy: str = "preserve_total") -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "tool": "gapflow",
        "tool_version": __version__,
        "command": command,
        "scenario": {"path": scenario_path, "sha256": scenario_sha256},
        "rules": rules,
        "suspended": sorted(suspended),
        "gap_mode": gap_mode,
        "dt": dt,
        "t_max": t_max,
        "seed": seed,
        "n": n,
        "sample_every": sample_every,
        "norm_policy": policy,
    }


def write_manifest(out_dir, manifest: dict) -> str:
    path = os.path.join(out_dir, MANIFEST_NAME)
    write_report_json(path, manifest)
    return path


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"unsupported manifest schema {doc.get('schema')!r}")
    return doc
