"""End-to-end probabilistic delivery-capability assessment.

Pipeline per method:
  MCS   -- draw M_S input realizations, trace each, aggregate sample stats.
  PCE   -- K-row collocation design, one trace per row, full least-squares
           fit per response class, surrogate sampling for statistics.
  SPCE  -- M_C-row design (square on the selected columns), LARS selection,
           surrogate sampling as above.

All three ADC responses (voltage, thermal, collapse) come from the same
trace, are fitted independently, and an "overall" response is formed as the
per-realization minimum across classes (for surrogates: minimum of the class
surrogates evaluated on one shared standard-normal block).

Everything that lands in report.json is a pure function of (feeder, scenario,
config); wall-clock timings go to report.md only.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from . import chaos, continuation, powerflow, stochastic
from .errors import ConfigurationError, ConvergenceError, SingularJacobianError

_CLASSES = ("voltage", "thermal", "collapse")
_METHODS = ("mcs", "pce", "spce")

# seed-stream tags so the coordinator, surrogate sampling and any future
# stream draw from disjoint Philox substreams of one user seed
_STREAM_MCS = 0
_STREAM_PCE_SURROGATE = 1
_STREAM_SPCE_SURROGATE = 2


@dataclass
class AssessmentConfig:
    method: str = "all"  # mcs | pce | spce | all
    mcs_samples: int = 10000
    surrogate_samples: int = 10000
    sparse_terms: int | str = "auto"
    order: int = 2
    seed: int = 0
    workers: int = 1
    out_dir: Path | None = None
    dump_trace: bool = False
    continuation_options: continuation.ContinuationOptions = field(
        default_factory=continuation.ContinuationOptions
    )
    solve_options: powerflow.SolveOptions = field(default_factory=powerflow.SolveOptions)

    def __post_init__(self):
        if self.method not in _METHODS + ("all",):
            raise ConfigurationError(f"unknown method '{self.method}'")
        if self.mcs_samples < 1 or self.surrogate_samples < 1:
            raise ConfigurationError("sample counts must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def methods(self) -> list:
        return list(_METHODS) if self.method == "all" else [self.method]


@dataclass
class ClassStats:
    stats: chaos.SampleStats
    clip_fraction: float = 0.0
    analytic_mean: float | None = None
    analytic_variance: float | None = None

    def to_dict(self) -> dict:
        out = dict(self.stats.moments())
        out["count"] = self.stats.count
        out["clip_fraction"] = self.clip_fraction
        if self.analytic_mean is not None:
            out["analytic_mean"] = self.analytic_mean
            out["analytic_variance"] = self.analytic_variance
        return out


@dataclass
class MethodResult:
    method: str
    eval_count: int  # deterministic continuation traces performed
    classes: dict  # class name -> ClassStats
    binding_freq: dict  # class name -> {element: count}
    overall_rule: str
    failures: int = 0
    failure_reasons: list = field(default_factory=list)
    unreliable: bool = False
    diagnostics: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0  # report.md only, never serialized to json

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "eval_count": self.eval_count,
            "classes": {k: v.to_dict() for k, v in sorted(self.classes.items())},
            "binding_frequency": {
                k: dict(sorted(v.items())) for k, v in sorted(self.binding_freq.items())
            },
            "overall_rule": self.overall_rule,
            "failures": self.failures,
            "failure_reasons": self.failure_reasons[:20],
            "unreliable": self.unreliable,
            "diagnostics": self.diagnostics,
        }


# -- worker machinery ----------------------------------------------------------

_CTX = None


def _make_ctx(model_doc, scenario, copts, sopts):
    from .feeder import load_feeder

    model = load_feeder(model_doc)
    case = powerflow.NetworkCase(model)
    registry = stochastic.build_registry(model, scenario)
    return case, registry, copts, sopts


def _worker_init(model_doc, scenario, copts, sopts):
    global _CTX
    _CTX = _make_ctx(model_doc, scenario, copts, sopts)


def _trace_one(case, registry, copts, sopts, u):
    variation = stochastic.assemble_variation(u, registry)
    res = continuation.trace_adc(case, variation, copts, sopts)
    binding = {}
    for cls in ("voltage", "thermal"):
        el = res.binding_element.get(cls)
        if el is not None:
            binding[cls] = el if isinstance(el, str) else f"{el[1][0]}.{el[1][1]}:{el[0]}"
        else:
            binding[cls] = None
    return (
        res.adc_mw["voltage"],
        res.adc_mw["thermal"],
        res.adc_mw["collapse"],
        res.binding_class,
        binding["voltage"],
        binding["thermal"],
        res.capped,
    )


def _worker_trace(task):
    i, u = task
    case, registry, copts, sopts = _CTX
    try:
        return i, True, _trace_one(case, registry, copts, sopts, u), ""
    except (ConvergenceError, SingularJacobianError) as exc:
        return i, False, None, f"{type(exc).__name__}: {exc}"


def _run_traces(ctx, inputs, workers):
    """Trace every input in-process; results indexed by realization."""
    case, registry, copts, sopts = ctx
    results = [None] * len(inputs)
    for i, u in enumerate(inputs):
        try:
            results[i] = (True, _trace_one(case, registry, copts, sopts, u), "")
        except (ConvergenceError, SingularJacobianError) as exc:
            results[i] = (False, None, f"{type(exc).__name__}: {exc}")
    return results


def _run_traces_parallel(model_doc, scenario, copts, sopts, inputs, workers):
    results = [None] * len(inputs)
    tasks = list(enumerate(inputs))
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_worker_init,
        initargs=(model_doc, scenario, copts, sopts),
    ) as pool:
        for i, ok, payload, err in pool.map(_worker_trace, tasks, chunksize=chunk):
            results[i] = (ok, payload, err)
    return results


# -- aggregation helpers ---------------------------------------------------------

def _aggregate_samples(rows):
    """Build per-class MW sample arrays and binding tallies from trace rows."""
    ok_rows = [r for r in rows if r is not None]
    arr = np.array([[r[0], r[1], r[2]] for r in ok_rows], dtype=float)
    samples = {
        "voltage": arr[:, 0],
        "thermal": arr[:, 1],
        "collapse": arr[:, 2],
        "overall": arr.min(axis=1),
    }
    freq_overall: dict = {}
    freq_v: dict = {}
    freq_t: dict = {}
    for r in ok_rows:
        freq_overall[r[3]] = freq_overall.get(r[3], 0) + 1
        if r[4] is not None:
            freq_v[r[4]] = freq_v.get(r[4], 0) + 1
        if r[5] is not None:
            freq_t[r[5]] = freq_t.get(r[5], 0) + 1
    return samples, {"overall_class": freq_overall, "voltage": freq_v, "thermal": freq_t}


def run_mcs(ctx, config: AssessmentConfig, parallel_args=None) -> MethodResult:
    """Monte Carlo assessment: one continuation trace per input realization."""
    case, registry, copts, sopts = ctx
    t0 = time.perf_counter()
    inputs = stochastic.sample_inputs(
        registry.distributions(),
        config.mcs_samples,
        [config.seed, _STREAM_MCS],
    )
    if config.workers > 1 and parallel_args is not None:
        model_doc, scenario = parallel_args
        raw = _run_traces_parallel(
            model_doc, scenario, copts, sopts, inputs, config.workers
        )
    else:
        raw = _run_traces(ctx, inputs, 1)

    ok = [payload for okflag, payload, _ in raw if okflag]
    reasons = [err for okflag, _, err in raw if not okflag]
    if not ok:
        raise ConvergenceError("every Monte Carlo trace failed")
    samples, freq = _aggregate_samples(ok)
    classes = {k: ClassStats(chaos.sample_moments(v)) for k, v in samples.items()}
    failures = len(reasons)
    return MethodResult(
        method="mcs",
        eval_count=len(inputs),
        classes=classes,
        binding_freq=freq,
        overall_rule="per-realization minimum across classes",
        failures=failures,
        failure_reasons=reasons,
        unreliable=failures > 0.01 * len(inputs),
        diagnostics={"capped_traces": int(sum(1 for r in ok if r[6]))},
        wall_clock_s=time.perf_counter() - t0,
    )


def run_pce(ctx, config: AssessmentConfig, sparse: bool, parallel_args=None) -> MethodResult:
    """Collocation + chaos-expansion assessment (full or sparse)."""
    case, registry, copts, sopts = ctx
    t0 = time.perf_counter()
    n = registry.dimension
    pcfg = chaos.PceConfig(n, config.order)
    k_full = chaos.basis_size(n, config.order)

    if sparse:
        if isinstance(config.sparse_terms, int):
            n_rows = config.sparse_terms
            target = config.sparse_terms
        else:
            n_rows = k_full  # auto rule needs the full-rank design
            target = "auto"
    else:
        n_rows = k_full
        target = None

    design = chaos.collocation_design(pcfg, n_rows=n_rows)
    dists = registry.distributions()
    inputs = [chaos.quantile_transform(xi, dists) for xi in design.points]

    if config.workers > 1 and parallel_args is not None:
        model_doc, scenario = parallel_args
        raw = _run_traces_parallel(
            model_doc, scenario, copts, sopts, inputs, config.workers
        )
    else:
        raw = _run_traces(ctx, inputs, 1)
    bad = [(i, err) for i, (okflag, _, err) in enumerate(raw) if not okflag]
    if bad:
        i0, err0 = bad[0]
        raise ConvergenceError(
            f"design-point trace {i0} failed ({err0}); "
            "the expansion cannot be fitted from an incomplete design"
        )
    rows = [payload for _, payload, _ in raw]

    responses = {
        "voltage": np.array([r[0] for r in rows]),
        "thermal": np.array([r[1] for r in rows]),
        "collapse": np.array([r[2] for r in rows]),
    }
    models = {}
    for cls, y in responses.items():
        if sparse:
            models[cls] = chaos.fit_sparse(design, y, target)
        else:
            models[cls] = chaos.fit_full(design, y)

    stream = _STREAM_SPCE_SURROGATE if sparse else _STREAM_PCE_SURROGATE
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([config.seed, stream]))
    )
    xi = rng.standard_normal((config.surrogate_samples, n))
    classes = {}
    class_samples = {}
    for cls, model in models.items():
        st = chaos.surrogate_stats_at(model, xi, clip_at_zero=True)
        class_samples[cls] = st.stats.samples
        classes[cls] = ClassStats(
            st.stats, st.clip_fraction, st.analytic_mean, st.analytic_variance
        )
    overall = np.minimum(
        np.minimum(class_samples["voltage"], class_samples["thermal"]),
        class_samples["collapse"],
    )
    classes["overall"] = ClassStats(chaos.sample_moments(overall))

    # binding evidence from the design traces themselves
    _, freq = _aggregate_samples(rows)
    method = "spce" if sparse else "pce"
    diag = {
        "design_rows": design.rows,
        "basis_size": k_full,
        "terms": {cls: int(m.active.sum()) for cls, m in models.items()},
        "models": {cls: json.loads(m.to_json()) for cls, m in models.items()},
    }
    return MethodResult(
        method=method,
        eval_count=design.rows,
        classes=classes,
        binding_freq=freq,
        overall_rule="minimum of class surrogates on a shared sample block",
        diagnostics=diag,
        wall_clock_s=time.perf_counter() - t0,
    )


def compare(results: dict) -> dict:
    """Per-class moment deltas, KS distance and evaluation-count ratio of
    every method against the baseline (MCS when present)."""
    if not results:
        return {}
    baseline_name = "mcs" if "mcs" in results else sorted(results)[0]
    base = results[baseline_name]
    out = {"baseline": baseline_name, "pairs": {}}
    for name, res in sorted(results.items()):
        if name == baseline_name:
            continue
        rows = {}
        for cls in sorted(base.classes):
            if cls not in res.classes:
                continue
            b = base.classes[cls].stats
            o = res.classes[cls].stats
            ks = float(sstats.ks_2samp(b.samples, o.samples, method="asymp").statistic)
            rows[cls] = {
                "mean_rel_delta": abs(o.mean - b.mean) / abs(b.mean) if b.mean else 0.0,
                "var_rel_delta": abs(o.variance - b.variance) / b.variance
                if b.variance
                else 0.0,
                "skew_delta": abs(o.skewness - b.skewness),
                "kurt_delta": abs(o.kurtosis - b.kurtosis),
                "ks_distance": ks,
            }
        out["pairs"][name] = {
            "classes": rows,
            "eval_ratio": res.eval_count / base.eval_count if base.eval_count else 0.0,
        }
    return out
