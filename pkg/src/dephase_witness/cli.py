"""Command-line entry point: figure tables, Werner scans and MC-vs-analytic validation.

Every subcommand writes a CSV whose first line is a ``#`` comment carrying
the seed and a hash of the effective configuration. Worker count is not part
of the hash; output is byte-identical for any number of workers.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import (
    bell_state,
    expectation,
    optimal_settings,
    ppt_is_entangled,
    random_density_matrix,
    random_separable_state,
    werner_state,
)
from .analytic import (
    B0,
    CHI_STAR,
    gaussian_attenuation_quadrature,
    gaussian_phi_expectation,
    rtn_characteristic,
    rtn_chsh_expectation,
    tune_ou,
)
from .criteria import (
    PHI,
    PSI,
    gaussian_chsh_like,
    mc_chsh_like,
    non_gaussianity_verdict,
    separability_verdict,
    standard_chsh_verdict,
)
from .montecarlo import McEstimate, McOperator, resolve_filters, simulate_phases
from .noise import INDEPENDENT, PERFECT, Independent, OuParams, Perfect, RtnParams, SharedFraction
from .pulses import OFF_IDEAL, On

log = logging.getLogger("dephase_witness")

COMMANDS = ("fig2", "fig3", "werner", "validate")

DEFAULTS = {
    "seed": 20190611,
    "trajectories": 100_000,
    "fig2": {"chi_min": 0.0, "chi_max": 3.0, "chi_step": 0.01, "tau_c": 1.0, "n": 2, "omega_p": math.pi},
    "fig3": {
        "v_over_gamma": [0.5, 1.0, 2.0, 4.0],
        "n": [2, 4],
        "gamma": 1.0,
        "omega_min": 0.5,
        "omega_max": 40.0,
        "omega_points": 200,
    },
    "werner": {
        "p_step": 0.001,
        "method": "mc",
        "noise": {"kind": "ou", "chi": CHI_STAR, "tau_c": 1.0},
        "correlation": "perfect",
        "on": {"n": 2, "omega_p": math.pi},
    },
    "validate": {
        "suites": ["gaussian", "rtn", "bounds"],
        "gaussian": {"sigma": 1.0, "tau_c": 1.0, "n": [2, 4], "omega_p": [math.pi, 3 * math.pi]},
        "rtn": {"v_over_gamma": [0.5, 1.0, 2.0, 4.0], "n": [2, 4], "omega_p": [1.0, 3.0, 10.0], "gamma": 1.0},
        "bounds": {"states": 1000, "trajectories": 20_000},
    },
}


@dataclass
class RunConfig:
    command: str
    seed: int
    trajectories: int
    workers: int = 1
    out: Path | None = None
    emit_plot: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trajectories < 0:
            raise ValueError("trajectory count must be non-negative")
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")

    def digest(self) -> str:
        blob = json.dumps(
            {"command": self.command, "seed": self.seed, "trajectories": self.trajectories, "params": self.params},
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(command: str, path: str | None = None, **flags) -> RunConfig:
    """Defaults, then the JSON file, then command-line flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg = _merge(cfg, json.load(fh))
    for key in ("seed", "trajectories"):
        if flags.get(key) is not None:
            cfg[key] = flags[key]
    return RunConfig(
        command=command,
        seed=int(cfg["seed"]),
        trajectories=int(cfg["trajectories"]),
        workers=int(flags.get("workers") or cfg.get("workers", 1)),
        out=Path(flags["out"]) if flags.get("out") else None,
        emit_plot=bool(flags.get("emit_plot")),
        params=cfg[command],
    )


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.9g}"


def render_csv(cfg: RunConfig, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(
        f"# dephase-witness {__version__} {cfg.command} seed={cfg.seed} "
        f"trajectories={cfg.trajectories} config_sha256={cfg.digest()}\n"
    )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _sub_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 12)


def noise_from_config(spec: dict, on: On):
    kind = spec.get("kind", "ou")
    if kind == "ou":
        if "chi" in spec:
            return tune_ou(float(spec["chi"]), float(spec.get("tau_c", 1.0)), on)
        return OuParams(float(spec["sigma"]), float(spec.get("tau_c", 1.0)))
    if kind == "rtn":
        return RtnParams(float(spec["v"]), float(spec["gamma"]))
    raise ValueError(f"unknown noise kind {kind!r}")


def correlation_from_config(spec):
    if spec == "perfect":
        return PERFECT
    if spec == "independent":
        return INDEPENDENT
    if isinstance(spec, dict) and "shared" in spec:
        return SharedFraction(float(spec["shared"]))
    raise ValueError(f"unknown correlation model {spec!r}")


def _corr_label(corr) -> str:
    if isinstance(corr, Perfect):
        return "perfect"
    if isinstance(corr, Independent):
        return "independent"
    return f"shared{corr.c:g}"


# subcommands

def cmd_fig2(cfg: RunConfig):
    """Gaussian Phi+ value versus attenuation, analytic and trajectory-averaged."""
    p = cfg.params
    if "chi_values" in p:
        chis = np.asarray(p["chi_values"], dtype=float)
    else:
        chis = _grid(p["chi_min"], p["chi_max"], p["chi_step"])
    if chis.min() < 0 or chis.max() > 3.0 + 1e-12:
        raise ValueError("fig2 attenuation grid must lie within [0, 3]")
    on = On(float(p["omega_p"]), int(p["n"]))
    analytic = gaussian_phi_expectation(chis)
    mc_values = mc_errors = [None] * len(chis)
    if cfg.trajectories:
        # one unit-strength ensemble; phases scale with sqrt(chi)
        unit = OuParams(1.0, float(p["tau_c"]))
        (f,), _ = resolve_filters([on], unit)
        unit_chi = gaussian_attenuation_quadrature(f, f, unit, "A")
        alphas, _ = simulate_phases(unit, PERFECT, [on], [OFF_IDEAL], cfg.trajectories, cfg.seed, cfg.workers)
        alpha = alphas[0]
        mc_values, mc_errors = [], []
        for chi in chis:
            a = alpha * math.sqrt(chi / unit_chi)
            est = McEstimate.from_samples(1.0 + 2.0 * np.cos(a) - np.cos(2.0 * a), cfg.seed)
            mc_values.append(est.value)
            mc_errors.append(est.std_error)
    rows = [
        (chi, val, mv, me, bool(val > 2.0))
        for chi, val, mv, me in zip(chis, analytic, mc_values, mc_errors)
    ]
    return ["chi", "value_analytic", "value_mc", "mc_stderr", "entangled_flag"], rows


def cmd_fig3(cfg: RunConfig):
    """Perfectly correlated RTN: Phi+ value versus filter frequency."""
    p = cfg.params
    gamma = float(p["gamma"])
    omegas = gamma * np.geomspace(p["omega_min"], p["omega_max"], int(p["omega_points"]))
    if np.any(omegas <= 0):
        raise ValueError("filter frequencies must be positive")
    rows = []
    for ratio in p["v_over_gamma"]:
        for n in p["n"]:
            for w in omegas:
                value = rtn_chsh_expectation(ratio * gamma, int(n), gamma, math.pi / w)
                rows.append((float(ratio), int(n), w, value, non_gaussianity_verdict(value).positive))
    return ["v_over_gamma", "n", "omega_p", "value", "nongaussian_flag"], rows


def werner_operator(cfg: RunConfig):
    p = cfg.params
    on = On(float(p["on"]["omega_p"]), int(p["on"]["n"]))
    noise = noise_from_config(p["noise"], on)
    corr = correlation_from_config(p["correlation"])
    if p["method"] == "analytic":
        if not isinstance(noise, OuParams):
            raise ValueError("analytic Werner scan is available for Gaussian noise only")
        return gaussian_chsh_like(PSI, noise, corr, on), None
    if p["method"] == "mc":
        if cfg.trajectories < 1:
            raise ValueError("Monte Carlo Werner scan needs trajectories")
        return None, mc_chsh_like(PSI, noise, corr, on, cfg.trajectories, cfg.seed, workers=cfg.workers)
    raise ValueError(f"unknown method {p['method']!r}")


def cmd_werner(cfg: RunConfig):
    """Werner family scanned against the PPT, standard CHSH and averaged criteria."""
    ps = _grid(0.0, 1.0, float(cfg.params["p_step"]))
    exact, mc_op = werner_operator(cfg)
    states = [werner_state(p) for p in ps]
    if mc_op is not None:
        estimates = mc_op.expectations(states)
    else:
        estimates = [expectation(exact, rho) for rho in states]
    settings = optimal_settings("psi-")
    rows = []
    for p, rho, est in zip(ps, states, estimates):
        value = est.value if isinstance(est, McEstimate) else est
        se = est.std_error if isinstance(est, McEstimate) else 0.0
        rows.append((
            p,
            ppt_is_entangled(rho),
            standard_chsh_verdict(rho, settings).positive,
            separability_verdict(est).positive,
            abs(value),
            se,
        ))
    return ["p", "ppt_entangled", "chsh_positive", "avg_criterion_positive", "B_value", "B_stderr"], rows


def _suite_gaussian(cfg: RunConfig):
    g = cfg.params["gaussian"]
    noise = OuParams(float(g["sigma"]), float(g["tau_c"]))
    phi = bell_state("phi+")
    rows = []
    k = 0
    for corr in (PERFECT, SharedFraction(0.5), INDEPENDENT):
        for n in g["n"]:
            for w in g["omega_p"]:
                on = On(float(w), int(n))
                analytic = expectation(gaussian_chsh_like(PHI, noise, corr, on), phi)
                op = mc_chsh_like(PHI, noise, corr, on, cfg.trajectories, _sub_seed(cfg.seed, 1, k), workers=cfg.workers)
                est = op.expectation(phi)
                ok = abs(est.value - analytic) <= 3.0 * est.std_error
                rows.append((f"gaussian/{_corr_label(corr)}/n={n}/omega_p={w:.6g}", est.value, analytic, est.std_error, ok))
                k += 1
    return rows


def _suite_rtn(cfg: RunConfig):
    r = cfg.params["rtn"]
    gamma = float(r["gamma"])
    rows = []
    k = 0
    for ratio in r["v_over_gamma"]:
        for n in r["n"]:
            for w in r["omega_p"]:
                noise = RtnParams(ratio * gamma, gamma)
                on = On(float(w) * gamma, int(n))
                alphas, _ = simulate_phases(noise, PERFECT, [on], [OFF_IDEAL], cfg.trajectories,
                                            _sub_seed(cfg.seed, 2, k), cfg.workers)
                est = McEstimate.from_samples(np.cos(alphas[0]), cfg.seed)
                analytic = rtn_characteristic(noise.v, on.n, gamma, on.tau_p)
                ok = abs(est.value - analytic) <= 3.0 * est.std_error
                rows.append((f"rtn/v_over_gamma={ratio:g}/n={n}/omega_p={w:g}", est.value, analytic, est.std_error, ok))
                k += 1
    return rows


def bound_configurations():
    """Correlated noise configurations used for the separable-state bound."""
    on_gauss = On(math.pi, 2)
    on_rtn = On(1.5, 2)
    return [
        ("ou_perfect_chistar", tune_ou(CHI_STAR, 1.0, on_gauss), PERFECT, on_gauss),
        ("rtn_perfect", RtnParams(0.5, 1.0), PERFECT, on_rtn),
        ("ou_shared0.5", OuParams(1.5, 1.0), SharedFraction(0.5), on_gauss),
    ]


def uncorrelated_configurations():
    on = On(math.pi, 2)
    return [
        ("ou_independent", tune_ou(CHI_STAR, 1.0, on), INDEPENDENT, on),
        ("rtn_independent", RtnParams(0.5, 1.0), INDEPENDENT, On(1.5, 2)),
    ]


def random_test_states(rng: np.random.Generator, count: int):
    """Bell states followed by a mix of pure and mixed random states."""
    states = [bell_state(k) for k in ("phi+", "phi-", "psi+", "psi-")]
    while len(states) < count:
        states.append(random_density_matrix(rng, rank=int(rng.integers(1, 5))))
    return states[:count]


def _bound_rows(label, op: McOperator, states):
    ests = op.expectations(states)
    verdicts = [separability_verdict(e).positive for e in ests]
    worst = max(ests, key=lambda e: abs(e.value))
    ok = not any(verdicts) and abs(worst.value) <= 2.0 + 3.0 * worst.std_error
    return (label, abs(worst.value), 2.0, worst.std_error, ok)


def _suite_bounds(cfg: RunConfig):
    b = cfg.params["bounds"]
    count = int(b["states"])
    n_traj = int(b.get("trajectories") or cfg.trajectories)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(3,)))
    separable = [random_separable_state(rng, int(rng.integers(1, 5))) for _ in range(count)]
    rows = []
    k = 0
    for label, noise, corr, on in bound_configurations():
        for kind in (PHI, PSI):
            op = mc_chsh_like(kind, noise, corr, on, n_traj, _sub_seed(cfg.seed, 3, k), workers=cfg.workers)
            rows.append(_bound_rows(f"bounds/separable/{label}/{kind}", op, separable))
            k += 1
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(4,)))
    anything = random_test_states(rng, count)
    for label, noise, corr, on in uncorrelated_configurations():
        for kind in (PHI, PSI):
            op = mc_chsh_like(kind, noise, corr, on, n_traj, _sub_seed(cfg.seed, 4, k), workers=cfg.workers)
            rows.append(_bound_rows(f"bounds/uncorrelated/{label}/{kind}", op, anything))
            k += 1
    return rows


SUITES = {"gaussian": _suite_gaussian, "rtn": _suite_rtn, "bounds": _suite_bounds}


def cmd_validate(cfg: RunConfig):
    """Run the requested validation suites; one row per check."""
    if cfg.trajectories < 2:
        raise ValueError("validation needs Monte Carlo trajectories")
    rows = []
    for suite in cfg.params["suites"]:
        if suite not in SUITES:
            raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
        log.info("running %s suite", suite)
        rows.extend(SUITES[suite](cfg))
    return ["name", "mc_value", "analytic_value", "stderr", "pass"], rows


RUNNERS = {"fig2": cmd_fig2, "fig3": cmd_fig3, "werner": cmd_werner, "validate": cmd_validate}

PLOT_TEMPLATE = '''"""Plot {csv_name} (generated by dephase-witness {command})."""
import csv

import matplotlib.pyplot as plt

with open({csv_path!r}, encoding="utf-8") as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))

x_col, y_cols = {x_col!r}, {y_cols!r}
fig, ax = plt.subplots()
for y in y_cols:
    pts = [(float(r[x_col]), float(r[y])) for r in rows if r[y] not in ("", "true", "false")]
    if pts:
        ax.plot(*zip(*pts), label=y)
ax.axhline({threshold!r}, ls="--", color="red")
ax.set_xlabel(x_col)
ax.legend()
fig.savefig({png_path!r}, dpi=150)
'''

PLOT_COLUMNS = {
    "fig2": ("chi", ["value_analytic", "value_mc"], 2.0),
    "fig3": ("omega_p", ["value"], B0),
    "werner": ("p", ["B_value"], 2.0),
    "validate": ("mc_value", ["analytic_value"], 0.0),
}


def emit_plot_script(cfg: RunConfig, csv_path: Path) -> Path:
    x_col, y_cols, threshold = PLOT_COLUMNS[cfg.command]
    script = csv_path.with_name(csv_path.stem + "_plot.py")
    script.write_text(
        PLOT_TEMPLATE.format(
            csv_name=csv_path.name,
            command=cfg.command,
            csv_path=str(csv_path),
            x_col=x_col,
            y_cols=y_cols,
            threshold=threshold,
            png_path=str(csv_path.with_suffix(".png")),
        ),
        encoding="utf-8",
    )
    return script


def run(cfg: RunConfig) -> tuple[str, int]:
    """Execute a subcommand; returns the CSV text and the exit status."""
    columns, rows = RUNNERS[cfg.command](cfg)
    status = 0
    if cfg.command == "validate" and not all(r[-1] for r in rows):
        status = 1
    return render_csv(cfg, columns, rows), status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dephase-witness",
        description="Noise-activated CHSH-like entanglement and non-Gaussianity criteria.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON file overriding the built-in defaults")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--trajectories", type=int, help="Monte Carlo trajectories per estimate")
    parser.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--out", help="output CSV path (default: stdout)")
    parser.add_argument("--emit-plot", action="store_true", help="also write a matplotlib script next to the CSV")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    cfg = load_config(
        args.command,
        args.config,
        seed=args.seed,
        trajectories=args.trajectories,
        workers=args.workers,
        out=args.out,
        emit_plot=args.emit_plot,
    )
    text, status = run(cfg)
    if cfg.out is None:
        sys.stdout.write(text)
        if cfg.emit_plot:
            log.warning("--emit-plot needs --out; no plot script written")
    else:
        cfg.out.parent.mkdir(parents=True, exist_ok=True)
        cfg.out.write_text(text, encoding="utf-8")
        if cfg.emit_plot:
            log.info("wrote %s", emit_plot_script(cfg, cfg.out))
    if status:
        failed = sum(1 for line in text.splitlines() if line.endswith(",false"))
        log.warning("%d validation check(s) failed", failed)
    return status


if __name__ == "__main__":
    sys.exit(main())
