"""Experiment configuration, suite runner and report files.

Every suite turns a configuration into a list of rows (one per metric and
degree), then writes ``report.json``, ``summary.csv``, ``margins.dat`` and
``margins.png`` into the output directory.  Rows are computed independently
and assembled in input order, so the files do not depend on ``jobs``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

from .errors import AccuracyError, DomainError, SpecError
from .fenchel import transform_grid
from .functionals import (
    compute_c_m,
    compute_t0,
    compute_V,
    comparison_bound_check,
    mixed_q,
    nu_margins,
    stirling_threshold,
    verify_main_bound,
)
from .metrics import (
    InvariantMetric,
    canonical,
    fubini_study,
    is_dominated,
    metric_from_spec,
    random_admissible,
)
from .norms import monomial_norm_canonical_closed_form
from .simplex import lattice_points
from .torsion import bound_polynomial, find_m0, todd_coefficients, torsion_variation_bound

__all__ = [
    "SUITES",
    "ExperimentConfig",
    "SuiteResult",
    "run_suite",
    "oracle_dump",
    "parse_m",
    "write_outputs",
]

SUITES = ("fenchel", "vfun", "cm", "nu", "main-bound", "berman", "qbounds", "torsion")

EXIT_OK = 0
EXIT_MARGIN = 1
EXIT_CONFIG = 2
EXIT_ACCURACY = 3


def parse_m(text) -> list[int]:
    """``"3"``, ``"2-5"`` or ``"2,3,5"`` to a list of degrees."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise SpecError(f"cannot parse degree list {text!r}")
    return out


@dataclass
class ExperimentConfig:
    """Everything a suite run depends on.

    ``resolution`` is the number of quadrature nodes per direction and
    panel; ``seeds`` counts generated metrics starting at ``seed_start``.
    """

    suite: str
    n: int = 1
    m: list[int] = field(default_factory=lambda: [2])
    seeds: int = 0
    seed_start: int = 0
    complexity: int = 2
    resolution: int = 31
    tol: float = 1e-9
    jobs: int = 1
    specs: list[dict[str, Any]] = field(default_factory=list)
    exponent_set: str = "displayed"
    volume: str = "canonical"
    rng: str = "philox"

    def __post_init__(self):
        self.m = parse_m(self.m)
        self.validate()

    def validate(self):
        if self.suite not in SUITES:
            raise SpecError(f"unknown suite {self.suite!r}; choose from {', '.join(SUITES)}")
        if self.n < 1:
            raise SpecError("n must be >= 1")
        if self.resolution < 5:
            raise SpecError("resolution must be >= 5")
        if not self.tol > 0:
            raise SpecError("tolerance must be positive")
        if self.seeds < 0 or self.jobs < 1:
            raise SpecError("seeds must be >= 0 and jobs >= 1")
        if self.exponent_set not in ("displayed", "geometric"):
            raise SpecError("exponent set must be displayed or geometric")
        if self.volume not in ("canonical", "fubini_study"):
            raise SpecError("volume must be canonical or fubini_study")
        if self.rng != "philox":
            raise SpecError("only the philox generator is supported")
        for d in self.specs:
            metric_from_spec(d)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise SpecError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("jobs")
        return d


@dataclass
class SuiteResult:
    config: ExperimentConfig
    rows: list[dict[str, Any]]
    extra: dict[str, Any]
    exit_code: int


# --------------------------------------------------------------------------
# metric sources
# --------------------------------------------------------------------------

def _metric_jobs(cfg: ExperimentConfig, below: str = "canonical") -> list[tuple[str, Any]]:
    if cfg.specs:
        return [("spec", d) for d in cfg.specs]
    if cfg.seeds:
        return [("seed", s) for s in range(cfg.seed_start, cfg.seed_start + cfg.seeds)]
    if below == "fubini_study":
        return [("named", "fubini_study")]
    return [("named", "canonical"), ("named", "fubini_study")]


def _make_metric(cfg: ExperimentConfig, source, below="canonical") -> tuple[InvariantMetric, int | None]:
    kind, arg = source
    if kind == "spec":
        return metric_from_spec(arg), None
    if kind == "seed":
        return random_admissible(arg, cfg.n, cfg.complexity, below=below), arg
    return (canonical(cfg.n) if arg == "canonical" else fubini_study(cfg.n)), None


_AUTO = object()


def _row(h, seed, m, value, bound=None, margin=_AUTO, status="ok", **extra) -> dict[str, Any]:
    # margin defaults to bound - value; pass None explicitly for informational rows
    if margin is _AUTO:
        margin = None if bound is None else bound - value
    return {"seed": seed, "n": h.n if h is not None else None, "m": m,
            "metric": h.digest() if h is not None else None, "kind": h.kind if h is not None else None,
            "value": value, "bound": bound, "margin": margin, "status": status, "extra": extra}


# --------------------------------------------------------------------------
# per-task workers (top level so they pickle)
# --------------------------------------------------------------------------

def _task_fenchel(cfg, source, m):
    h, seed = _make_metric(cfg, source)
    grid = transform_grid(h, 16 * m, cfg.tol, degree=m, order=cfg.resolution)
    dominated, _ = is_dominated(h, canonical(h.n))
    low = float(grid.values.min())
    return _row(h, seed, m, grid.integral, margin=low if dominated else None,
                status="ok" if dominated else "not-dominated", grid_M=grid.M,
                integral_error=grid.integral_error, concavity_defect=grid.concavity_defect(),
                min_value=low, unconverged=int((grid.flags == 2).sum()))


def _task_vfun(cfg, source, m):
    h, seed = _make_metric(cfg, source)
    r = compute_V(h, m, cfg.resolution)
    return _row(h, seed, m, r.value, **r.breakdown)


def _task_nu(cfg, source, m):
    h, seed = _make_metric(cfg, source)
    margins = nu_margins(h, m, cfg.resolution)
    worst = min(margins, key=margins.get)
    return _row(h, seed, m, margins[worst], margin=margins[worst],
                nu_margins={" ".join(map(str, k)): v for k, v in margins.items()}, argmin_nu=list(worst))


def _task_main(cfg, source, m):
    h, seed = _make_metric(cfg, source)
    r = verify_main_bound(h, m, cfg.resolution, seed=seed)
    margin = min(r.margin, r.breakdown["min_nu_margin"]) if r.status == "ok" else None
    return _row(h, seed, m, r.value, r.bound, margin, r.status, bound_margin=r.margin,
                min_nu_margin=r.breakdown["min_nu_margin"], argmin_nu=r.breakdown["argmin_nu"])


def _task_berman(cfg, source, m):
    h, seed = _make_metric(cfg, source)
    t0 = 1.0 if h.n == 1 else compute_t0(h.n, cfg.exponent_set)[0]
    vol = "fubini_study" if cfg.volume == "fubini_study" else "canonical"
    r = comparison_bound_check(h, m, cfg.resolution, cfg.exponent_set, vol, t0, seed)
    margin = r.margin if r.status == "ok" else None
    return _row(h, seed, m, r.value, r.bound, margin, r.status, t0=t0, **r.breakdown)


def _task_qbounds(cfg, source, m):
    h, seed = _make_metric(cfg, source, below="fubini_study")
    q = mixed_q(h, fubini_study(h.n))
    margins = q.bound_margins(h.n)
    margin = min(margins + [1e-3 - q.holdout_rel_error])
    return _row(h, seed, None, q.q, margin=margin, q_k=q.coefficients, G=q.G, bound_margins=margins,
                holdout_rel_error=q.holdout_rel_error)


def _task_torsion(cfg, source, m):
    h, seed = _make_metric(cfg, source, below="fubini_study")
    r = torsion_variation_bound(h, m)
    margin = min(r.margin, -r.bound) if r.breakdown["regime"] == "m >= m0" else None
    return _row(h, seed, m, r.value, r.bound, margin, r.status, **r.breakdown)


_TASKS: dict[str, Callable] = {
    "fenchel": _task_fenchel,
    "vfun": _task_vfun,
    "nu": _task_nu,
    "main-bound": _task_main,
    "berman": _task_berman,
    "qbounds": _task_qbounds,
    "torsion": _task_torsion,
}


def _safe(task, cfg, source, m):
    try:
        return task(cfg, source, m)
    except AccuracyError as exc:
        return {"seed": source[1] if source[0] == "seed" else None, "n": cfg.n, "m": m, "metric": None,
                "kind": None, "value": exc.estimate, "bound": None, "margin": None,
                "status": "accuracy-error", "extra": {"message": str(exc), "error": exc.error}}


def _task_list(cfg: ExperimentConfig):
    below = "fubini_study" if cfg.suite in ("qbounds", "torsion") else "canonical"
    sources = _metric_jobs(cfg, below)
    if cfg.suite == "qbounds":
        return [(s, None) for s in sources]
    if cfg.suite == "berman":
        ms = cfg.m if cfg.m != [2] else [stirling_threshold(cfg.n)]
        return [(s, m) for s in sources for m in ms]
    if cfg.suite == "torsion":
        m0, _ = find_m0(cfg.n)
        ms = cfg.m if cfg.m != [2] else list(range(m0, m0 + 4))
        return [(s, m) for s in sources for m in ms]
    return [(s, m) for s in sources for m in cfg.m]


def run_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Compute every row of a suite; the exit code follows the margin contract."""
    extra: dict[str, Any] = {}
    if cfg.suite == "cm":
        rows = []
        for m in cfg.m:
            r = compute_c_m(cfg.n, m, cfg.resolution)
            rows.append(_row(None, None, m, r.value, **r.breakdown))
            rows[-1]["n"] = cfg.n
    else:
        if cfg.suite == "torsion":
            m0, cert = find_m0(cfg.n)
            extra = {"todd": todd_coefficients(max(cfg.n, 4)).to_dict(),
                     "bound_polynomial": bound_polynomial(cfg.n).to_dict(), "m0": m0,
                     "certificate": cert.to_dict()}
        if cfg.suite == "berman":
            extra = {"stirling_threshold": stirling_threshold(cfg.n),
                     "t0": compute_t0(cfg.n, cfg.exponent_set)[0]}
        task = _TASKS[cfg.suite]
        work = _task_list(cfg)
        if cfg.jobs > 1 and len(work) > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                rows = list(pool.map(_safe, [task] * len(work), [cfg] * len(work),
                                     [w[0] for w in work], [w[1] for w in work]))
        else:
            rows = [_safe(task, cfg, s, m) for s, m in work]
    code = EXIT_OK
    if any(r["status"] == "accuracy-error" for r in rows):
        code = EXIT_ACCURACY
    elif any(r["margin"] is not None and r["margin"] < -cfg.tol for r in rows):
        code = EXIT_MARGIN
    return SuiteResult(cfg, rows, extra, code)


def oracle_dump(n: int, m: int) -> dict[tuple[int, ...], Fraction]:
    """Closed-form canonical norms of every monomial in ``P_m``."""
    if not (1 <= n <= 3 and 0 <= m <= 6):
        raise DomainError("oracle tables cover n <= 3 and m <= 6")
    return {nu: monomial_norm_canonical_closed_form(n, m, nu) for nu in lattice_points(n, m)}


# --------------------------------------------------------------------------
# output files
# --------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_json(result: SuiteResult) -> str:
    doc = {"suite": result.config.suite, "config": result.config.to_dict(), "exit_code": result.exit_code,
           "extra": result.extra, "rows": result.rows}
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def summary_csv(result: SuiteResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "seed", "n", "m", "metric", "value", "bound", "margin", "min_nu_margin", "status"])
    for i, r in enumerate(result.rows):
        cells = [i, r["seed"], r["n"], r["m"], r["metric"], r["value"], r["bound"], r["margin"],
                 r["extra"].get("min_nu_margin"), r["status"]]
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in cells])
    return buf.getvalue()


def margins_dat(result: SuiteResult) -> str:
    lines = [f"# suite {result.config.suite}", "# index seed m y"]
    key = "margin" if any(r["margin"] is not None for r in result.rows) else "value"
    lines[1] += f"   (y = {key})"
    for i, r in enumerate(result.rows):
        y = r[key]
        seed = -1 if r["seed"] is None else r["seed"]
        m = -1 if r["m"] is None else r["m"]
        lines.append(f"{i} {seed} {m} {'nan' if y is None else repr(float(y))}")
    return "\n".join(lines) + "\n"


def plot_margins(result: SuiteResult, path: Path):
    """Scatter of the margin (or value) per row, tolerance band marked."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    key = "margin" if any(r["margin"] is not None for r in result.rows) else "value"
    pts = [(i, r[key]) for i, r in enumerate(result.rows) if r[key] is not None]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if pts:
        xs, ys = zip(*pts)
        ax.plot(xs, ys, "o", ms=3)
    if key == "margin":
        ax.axhline(0.0, color="k", lw=0.8)
        ax.axhline(-result.config.tol, color="r", lw=0.8, ls="--")
    ax.set_xlabel("row")
    ax.set_ylabel(key)
    ax.set_title(f"{result.config.suite} (n={result.config.n})")
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    _atomic_write(path, buf.getvalue())


def write_outputs(result: SuiteResult, out: str | Path, plot: bool = True) -> list[Path]:
    out = Path(out)
    files = {"report.json": report_json(result), "summary.csv": summary_csv(result),
             "margins.dat": margins_dat(result)}
    paths = []
    for name, text in files.items():
        _atomic_write(out / name, text.encode())
        paths.append(out / name)
    if plot:
        plot_margins(result, out / "margins.png")
        paths.append(out / "margins.png")
    return paths
