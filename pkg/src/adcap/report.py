"""Report assembly and output writers.

``report.json`` is a pure function of (feeder, scenario, config): no
timestamps, no wall-clock, key order sorted — two runs with the same seed
and a single worker produce byte-identical files.  Timings and narrative go
to ``report.md``; CDF grids go to per-class/per-method CSV files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import assessment, continuation, stochastic
from .powerflow import NetworkCase

_CLASS_ORDER = ("voltage", "thermal", "collapse", "overall")


@dataclass
class AdcReport:
    feeder_name: str
    config: assessment.AssessmentConfig
    dimension: int
    base_summary: dict
    deterministic: dict  # mean-input trace summary
    results: dict  # method -> MethodResult
    comparison: dict
    curve: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "feeder": self.feeder_name,
            "config": {
                "method": self.config.method,
                "mcs_samples": self.config.mcs_samples,
                "surrogate_samples": self.config.surrogate_samples,
                "sparse_terms": self.config.sparse_terms,
                "order": self.config.order,
                "seed": self.config.seed,
                "workers": self.config.workers,
            },
            "input_dimension": self.dimension,
            "base_case": self.base_summary,
            "deterministic_adc": self.deterministic,
            "methods": {name: r.to_dict() for name, r in sorted(self.results.items())},
            "comparison": self.comparison,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def to_markdown(self) -> str:
        lines = [f"# Delivery capability report: {self.feeder_name}", ""]
        lines.append(
            f"Random inputs: {self.dimension} | seed {self.config.seed} "
            f"| workers {self.config.workers}"
        )
        lines.append("")
        lines.append("## Base case")
        b = self.base_summary
        lines.append(
            f"- voltage range: {b['v_min_pu']:.4f} .. {b['v_max_pu']:.4f} pu "
            f"(limits {b['limit_low']:.2f}/{b['limit_high']:.2f})"
        )
        lines.append(f"- worst branch loading: {b['max_loading']:.3f}")
        lines.append("")
        lines.append("## Deterministic margins at mean inputs (MW)")
        d = self.deterministic
        lines.append("| class | lambda | ADC (MW) | binding |")
        lines.append("|---|---|---|---|")
        for cls in ("voltage", "thermal", "collapse"):
            lines.append(
                f"| {cls} | {d['lambdas'][cls]:.4f} | {d['adc_mw'][cls]:.4f} "
                f"| {d['binding'].get(cls) or '-'} |"
            )
        lines.append("")
        for name in sorted(self.results):
            r = self.results[name]
            lines.append(f"## {name.upper()} ({r.eval_count} deterministic solves)")
            if r.failures:
                flag = " — FLAGGED UNRELIABLE" if r.unreliable else ""
                lines.append(f"- failed traces: {r.failures}{flag}")
            lines.append(f"- overall rule: {r.overall_rule}")
            lines.append(f"- wall clock: {r.wall_clock_s:.1f} s")
            lines.append("")
            lines.append("| class | mean | variance | skewness | kurtosis | 95% CI |")
            lines.append("|---|---|---|---|---|---|")
            for cls in _CLASS_ORDER:
                if cls not in r.classes:
                    continue
                s = r.classes[cls].stats
                lines.append(
                    f"| {cls} | {s.mean:.6f} | {s.variance:.6e} | {s.skewness:.4f} "
                    f"| {s.kurtosis:.4f} | [{s.ci95[0]:.4f}, {s.ci95[1]:.4f}] |"
                )
            lines.append("")
        if self.comparison.get("pairs"):
            base = self.comparison["baseline"]
            lines.append(f"## Method comparison (baseline: {base.upper()})")
            lines.append(
                "| method | class | d(mean)/mean | d(var)/var | d(skew) | d(kurt) | KS | eval ratio |"
            )
            lines.append("|---|---|---|---|---|---|---|---|")
            for name, pair in sorted(self.comparison["pairs"].items()):
                for cls in _CLASS_ORDER:
                    if cls not in pair["classes"]:
                        continue
                    row = pair["classes"][cls]
                    lines.append(
                        f"| {name} | {cls} | {row['mean_rel_delta']:.2e} "
                        f"| {row['var_rel_delta']:.2e} | {row['skew_delta']:.3f} "
                        f"| {row['kurt_delta']:.3f} | {row['ks_distance']:.4f} "
                        f"| {pair['eval_ratio']:.3f} |"
                    )
            lines.append("")
        return "\n".join(lines) + "\n"


def _cdf_rows(samples: np.ndarray):
    s = np.sort(samples)
    m = len(s)
    p = (np.arange(1, m + 1)) / m
    return zip(s, p)


def write_outputs(report: AdcReport, out_dir) -> list:
    """Write report.json / report.md / cdf_<class>_<method>.csv (+ pv_curve.csv
    when a curve was collected); returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "report.json"
    p.write_text(report.to_json())
    written.append(p)

    p = out / "report.md"
    p.write_text(report.to_markdown())
    written.append(p)

    for name, res in sorted(report.results.items()):
        for cls in _CLASS_ORDER:
            if cls not in res.classes:
                continue
            p = out / f"cdf_{cls}_{name}.csv"
            with p.open("w", newline="") as fh:
                fh.write("adc_mw,cumulative_probability\n")
                for x, q in _cdf_rows(res.classes[cls].stats.samples):
                    fh.write(f"{x:.10g},{q:.6g}\n")
            written.append(p)

    if report.comparison.get("pairs"):
        p = out / "comparison.csv"
        with p.open("w", newline="") as fh:
            fh.write(
                "method,class,mean_rel_delta,var_rel_delta,skew_delta,kurt_delta,"
                "ks_distance,eval_ratio\n"
            )
            for name, pair in sorted(report.comparison["pairs"].items()):
                for cls in _CLASS_ORDER:
                    if cls not in pair["classes"]:
                        continue
                    row = pair["classes"][cls]
                    fh.write(
                        f"{name},{cls},{row['mean_rel_delta']:.10g},"
                        f"{row['var_rel_delta']:.10g},{row['skew_delta']:.10g},"
                        f"{row['kurt_delta']:.10g},{row['ks_distance']:.10g},"
                        f"{pair['eval_ratio']:.10g}\n"
                    )
        written.append(p)

    if report.curve:
        p = out / "pv_curve.csv"
        with p.open("w", newline="") as fh:
            fh.write("lambda,min_vm_pu,max_branch_loading\n")
            for pt in report.curve:
                fh.write(f"{pt.lam:.10g},{pt.min_vm:.10g},{pt.max_loading:.10g}\n")
        written.append(p)
    return written


def run_assessment(model, scenario: dict, config: assessment.AssessmentConfig) -> AdcReport:
    """Assemble the full report for a parsed feeder model and scenario dict."""
    case = NetworkCase(model)
    registry = stochastic.build_registry(model, scenario)
    ctx = (case, registry, config.continuation_options, config.solve_options)
    parallel_args = None
    if config.workers > 1:
        parallel_args = (json.dumps(model.to_document()), scenario)

    # base-case feasibility gate (shared by every method) and mean-input trace
    from .powerflow import branch_flows, solve

    base_state = solve(case, 0.0, None, config.solve_options)
    status = continuation.check_limits(case, base_state)
    bad = status.violated()
    if bad:
        from .errors import InfeasibleBaseCaseError

        desc = "; ".join(f"{k} at {el}" for k, el, _ in bad)
        raise InfeasibleBaseCaseError(
            f"base case violates operating limits: {desc}", violations=bad
        )
    mon = ~case.slack_mask
    flows = branch_flows(case, base_state)
    base_summary = {
        "v_min_pu": float(np.min(base_state.vm[mon])),
        "v_max_pu": float(np.max(base_state.vm[mon])),
        "limit_low": model.limits.v_min_pu,
        "limit_high": model.limits.v_max_pu,
        "max_loading": float(max(f.loading for f in flows)),
        "total_load_kw": model.total_load()[0],
        "total_load_kvar": model.total_load()[1],
    }

    mean_var = stochastic.assemble_variation(registry.mean_inputs(), registry)
    det = continuation.trace_adc(
        case,
        mean_var,
        config.continuation_options,
        config.solve_options,
        collect_curve=config.dump_trace,
    )
    deterministic = {
        "lambdas": {k: det.lambdas[k] for k in ("voltage", "thermal", "collapse")},
        "adc_mw": {k: det.adc_mw[k] for k in ("voltage", "thermal", "collapse")},
        "overall_mw": det.overall_mw,
        "binding_class": det.binding_class,
        "binding": {
            "voltage": None
            if det.binding_element["voltage"] is None
            else f"{det.binding_element['voltage'][1][0]}."
            f"{det.binding_element['voltage'][1][1]}:{det.binding_element['voltage'][0]}",
            "thermal": det.binding_element["thermal"],
        },
        "capped": det.capped,
    }

    results = {}
    for method in config.methods():
        if method == "mcs":
            results["mcs"] = assessment.run_mcs(ctx, config, parallel_args)
        elif method == "pce":
            results["pce"] = assessment.run_pce(ctx, config, False, parallel_args)
        else:
            results["spce"] = assessment.run_pce(ctx, config, True, parallel_args)

    return AdcReport(
        feeder_name=model.name,
        config=config,
        dimension=registry.dimension,
        base_summary=base_summary,
        deterministic=deterministic,
        results=results,
        comparison=assessment.compare(results),
        curve=det.curve if config.dump_trace else [],
    )
