"""Monte Carlo measurement of ``E_N``, the expected Kolmogorov distance between
empirical spacing distributions and the limit law, with log-log fits and
CSV/JSON/SVG output.

Trial ``t`` at size ``n`` samples with stream ``(n, t)`` under the config's
master seed, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .eigensolver import spectrum_of
from .limits import LimitLaw, limit_law
from .sampler import EnsembleSpec, sample
from .spacings import EmptyWindowError, WindowSpec, kolmogorov_distance, spacing_measure

CONFIG_SCHEMA = "rmt-experiment/1"
RESULT_SCHEMA = "rmt-result/1"
MAX_FAILURE_FRACTION = 0.01

# intervals used for the unfolded measurements
STANDARD_INTERVALS = ((-0.1, 0.1), (-0.5, 0.5), (-0.75, 0.75), (0.4, 0.6), (0.7, 0.9))


class ExperimentError(RuntimeError):
    pass


def worker_count(workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("RMT_WORKERS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep over matrix sizes.

    ``window`` is ``{"mode": "unfolded", "interval": [lo, hi]}`` or
    ``{"mode": "local-linear", "center": a, "length": L}`` (``L`` null means
    ``N**-1/2``). ``law_mode`` is ``exact`` (beta in {1, 2, 4}) or ``surmise``.
    """

    ensemble: EnsembleSpec
    n_values: tuple
    trials: int
    window: dict = field(default_factory=lambda: {"mode": "unfolded", "interval": [-0.1, 0.1]})
    law_mode: str = "exact"
    s_max: float = 6.0
    master_seed: int = 0
    normalisation: Optional[str] = None
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ValueError("n_values must be strictly increasing")
        if self.trials < 2:
            raise ValueError("trials must be at least 2")
        if self.law_mode not in ("exact", "surmise"):
            raise ValueError("law_mode must be 'exact' or 'surmise'")
        if self.window.get("mode") not in ("unfolded", "local-linear"):
            raise ValueError("window mode must be 'unfolded' or 'local-linear'")
        if self.n_values:
            self.window_for(self.n_values[0])

    def window_for(self, n: int) -> WindowSpec:
        w = self.window
        if w["mode"] == "unfolded":
            lo, hi = w["interval"]
            return WindowSpec.unfolded(float(lo), float(hi))
        return WindowSpec.local(n, float(w.get("center", 0.0)), w.get("length"))

    def to_dict(self) -> dict:
        return {
            "schema": CONFIG_SCHEMA,
            "ensemble": self.ensemble.to_dict(),
            "n_values": list(self.n_values),
            "trials": self.trials,
            "window": self.window,
            "law_mode": self.law_mode,
            "s_max": self.s_max,
            "master_seed": self.master_seed,
            "normalisation": self.normalisation,
            "outputs": self.outputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        schema = d.get("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ValueError(f"unsupported config schema {schema!r}")
        ens = dict(d["ensemble"])
        ens.setdefault("n", 1)
        return cls(
            ensemble=EnsembleSpec.from_dict(ens),
            n_values=tuple(d["n_values"]),
            trials=int(d["trials"]),
            window=d.get("window", {"mode": "unfolded", "interval": [-0.1, 0.1]}),
            law_mode=d.get("law_mode", "exact"),
            s_max=float(d.get("s_max", 6.0)),
            master_seed=int(d.get("master_seed", 0)),
            normalisation=d.get("normalisation"),
            outputs=d.get("outputs", {}),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ExperimentResult:
    records: list
    fit: Optional[dict]
    provenance: dict
    config: Optional[dict] = None

    @property
    def n(self) -> np.ndarray:
        return np.array([r["n"] for r in self.records], dtype=float)

    @property
    def e_n(self) -> np.ndarray:
        return np.array([r["E_N"] for r in self.records], dtype=float)

    def to_dict(self) -> dict:
        return {"schema": RESULT_SCHEMA, "records": self.records, "fit": self.fit,
                "provenance": self.provenance, "config": self.config}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(d["records"], d.get("fit"), d.get("provenance", {}), d.get("config"))


def law_for(config: ExperimentConfig) -> LimitLaw:
    beta = config.ensemble.beta
    if config.law_mode == "exact" and beta in (1, 2, 4):
        return limit_law(beta, config.s_max, "exact")
    return limit_law(beta, config.s_max, "surmise")


def _trial(config: ExperimentConfig, spec: EnsembleSpec, window: WindowSpec, law, n: int, t: int):
    try:
        spectrum = spectrum_of(sample(spec, stream=(n, t)))
        return kolmogorov_distance(spacing_measure(spectrum, window, config.normalisation), law)
    except EmptyWindowError:
        return None


def _mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    m = len(values)
    mean = math.fsum(values) / m
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1) if m > 1 else 0.0
    return mean, math.sqrt(var / m)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None,
                   law: Optional[LimitLaw] = None, statistic=None) -> ExperimentResult:
    """Estimate ``E_N`` with its standard error for every ``n`` in the sweep.

    ``statistic`` (optional) replaces the Kolmogorov distance; it receives the
    spacing measure and the law.
    """
    law = law if law is not None else law_for(config)
    spec0 = config.ensemble.with_seed(config.master_seed)
    records = []
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        for n in config.n_values:
            spec = spec0.with_n(n)
            window = config.window_for(n)
            if statistic is None:
                values = list(pool.map(lambda t: _trial(config, spec, window, law, n, t), range(config.trials)))
            else:
                values = list(pool.map(lambda t: _stat_trial(config, spec, window, law, n, t, statistic),
                                       range(config.trials)))
            ok = [v for v in values if v is not None]
            failures = len(values) - len(ok)
            if failures > MAX_FAILURE_FRACTION * config.trials:
                raise ExperimentError(f"n={n}: {failures} of {config.trials} trials failed (empty window)")
            if len(ok) < 2:
                raise ExperimentError(f"n={n}: fewer than two successful trials")
            mean, se = _mean_stderr(ok)
            records.append({"n": n, "E_N": mean, "stderr": se, "trials": len(ok), "failures": failures})
    provenance = {"config_hash": config.digest(), "code_version": __version__, "law_method": law.method}
    result = ExperimentResult(records, None, provenance, config.to_dict())
    if len(records) >= 3:
        a, b, res = fit_loglog(result)
        result.fit = {"a": a, "b": b, "residual": res}
    return result


def _stat_trial(config, spec, window, law, n, t, statistic):
    try:
        spectrum = spectrum_of(sample(spec, stream=(n, t)))
        return statistic(spacing_measure(spectrum, window, config.normalisation), law)
    except EmptyWindowError:
        return None


def fit_loglog(result) -> tuple[float, float, float]:
    """Least squares ``-log E_N = a log N + b``; returns ``(a, b, residual norm)``.

    Accepts an :class:`ExperimentResult` or a pair ``(n_values, e_values)``.
    """
    if isinstance(result, ExperimentResult):
        n, e = result.n, result.e_n
    else:
        n, e = (np.asarray(v, dtype=float) for v in result)
    if len(n) < 3:
        raise ValueError("need at least three sweep points")
    if np.any(e <= 0):
        raise ValueError("E_N must be positive to take logarithms")
    x = np.log(n)
    y = -np.log(e)
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    res = float(np.linalg.norm(design @ coef - y))
    return float(coef[0]), float(coef[1]), res


def _svg(result: ExperimentResult) -> str:
    width, height, pad = 480, 360, 48
    x = np.log(result.n) if result.records else np.array([])
    y = -np.log(result.e_n) if result.records else np.array([])
    if len(x):
        x0, x1 = float(x.min()), float(x.max())
        y0, y1 = float(y.min()), float(y.max())
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    x0, x1 = (x0 - 0.5, x1 + 0.5) if x1 - x0 < 1e-9 else (x0 - 0.05 * (x1 - x0), x1 + 0.05 * (x1 - x0))
    y0, y1 = (y0 - 0.5, y1 + 0.5) if y1 - y0 < 1e-9 else (y0 - 0.1 * (y1 - y0), y1 + 0.1 * (y1 - y0))

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<path d="M {pad} {pad} V {height - pad} H {width - pad}" fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">{escape("log N")}</text>',
        f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" text-anchor="middle">'
        f'{escape("-log E_N")}</text>',
    ]
    if result.fit is not None:
        a, b = result.fit["a"], result.fit["b"]
        parts.append(f'<line x1="{px(x0):.3f}" y1="{py(a * x0 + b):.3f}" x2="{px(x1):.3f}" y2="{py(a * x1 + b):.3f}" '
                     f'stroke="crimson"/>')
        parts.append(f'<text x="{pad + 8}" y="{pad + 14}">{escape(f"y = {a:.4f} x + {b:.4f}")}</text>')
    for xi, yi in zip(x, y):
        parts.append(f'<circle cx="{px(xi):.3f}" cy="{py(yi):.3f}" r="3" fill="navy"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_outputs(result: ExperimentResult, paths: dict) -> dict:
    """Write any of ``csv``, ``json``, ``svg`` named in ``paths``; returns what was written."""
    written = {}
    for kind, path in paths.items():
        if path is None:
            continue
        path = Path(path)
        try:
            if kind == "csv":
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["n", "E_N", "stderr"])
                    for r in result.records:
                        w.writerow([r["n"], repr(float(r["E_N"])), repr(float(r["stderr"]))])
            elif kind == "json":
                with open(path, "w") as fh:
                    json.dump(result.to_dict(), fh, indent=2)
            elif kind == "svg":
                path.write_text(_svg(result))
            else:
                raise ValueError(f"unknown output kind {kind!r}")
        except OSError as exc:
            raise OSError(f"could not write {kind} output to {path}: {exc}") from exc
        written[kind] = str(path)
    return written


def read_results_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["n"]) for r in rows]), np.array([float(r["E_N"]) for r in rows]))


def _moments(values: np.ndarray) -> dict:
    m = len(values)
    mean = math.fsum(values) / m
    c = values - mean
    var = float(np.mean(c * c))
    out = {"mean": mean, "variance": float(np.var(values, ddof=1)) if m > 1 else 0.0,
           "skewness": None, "excess_kurtosis": None, "degenerate": var == 0.0}
    if var > 0:
        out["skewness"] = float(np.mean(c**3) / var**1.5)
        out["excess_kurtosis"] = float(np.mean(c**4) / var**2 - 3.0)
    return out


def clt_probe(config: ExperimentConfig, s_values: Sequence[float], workers: Optional[int] = None) -> dict:
    """Moments of ``xi_N = int_0^s sigma_N - mean`` across trials, per ``n`` and ``s``.

    Diagnostic only. Also reports the log-log slope of the variance in ``n``.
    """
    if config.trials < 100:
        raise ValueError("clt_probe needs at least 100 trials")
    spec0 = config.ensemble.with_seed(config.master_seed)
    per_n = []
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        for n in config.n_values:
            spec = spec0.with_n(n)
            window = config.window_for(n)

            def masses(t):
                try:
                    m = spacing_measure(spectrum_of(sample(spec, stream=(n, t))), window, config.normalisation)
                except EmptyWindowError:
                    return None
                return [m.mass_below(s) for s in s_values]

            rows = [r for r in pool.map(masses, range(config.trials)) if r is not None]
            arr = np.array(rows, dtype=float)
            per_n.append({"n": n, "trials": len(rows),
                          "by_s": {repr(float(s)): _moments(arr[:, i]) for i, s in enumerate(s_values)}})
    scaling = {}
    if len(per_n) >= 2:
        logn = np.log([p["n"] for p in per_n])
        for s in s_values:
            key = repr(float(s))
            v = np.array([p["by_s"][key]["variance"] for p in per_n])
            scaling[key] = float(np.polyfit(logn, np.log(v), 1)[0]) if np.all(v > 0) else None
    return {"per_n": per_n, "variance_slope": scaling}


def moments_of(values) -> dict:
    """Mean, variance, skewness and excess kurtosis (``None`` when undefined)."""
    return _moments(np.asarray(values, dtype=float))
