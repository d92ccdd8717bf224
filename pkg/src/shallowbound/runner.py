"""One analysis run: coefficients, pole, verdict, optional oracle cross-check."""
from __future__ import annotations

from dataclasses import dataclass

from .config import ScenarioConfig, build_operator
from .grid import Grid, build_grid
from .oracle import ComparisonReport, OracleSpectrum, auto_config, cross_check
from .perturbation import PerturbationOp
from .pole import AsymptoticCoeffs, Decision, decide, find_pole, m_coeffs

__all__ = ["RunResult", "run_case", "oracle_config_for"]


@dataclass(frozen=True, eq=False)
class RunResult:
    eps: float
    op: PerturbationOp
    grid: Grid
    coeffs: AsymptoticCoeffs
    decision: Decision
    comparison: ComparisonReport | None = None
    spectrum: OracleSpectrum | None = None


def oracle_config_for(cfg: ScenarioConfig, op, decision: Decision):
    over = dict(cfg.oracle_overrides)
    step = over.pop("step", None)
    half = over.pop("half_width", None)
    config = auto_config(op, decision.pole.k, step=step, **over)
    if half is not None:
        from dataclasses import replace
        config = replace(config, half_width=half)
    return config


def run_case(cfg: ScenarioConfig, eps: float, *, panels: int | None = None,
             oracle: bool | None = None) -> RunResult:
    """Analyze ``cfg`` at one ``eps``.

    Raises the numerical errors of the pole engine (``NearSingular``,
    ``NoConvergence``) unchanged.
    """
    op = build_operator(cfg, eps)
    grid = build_grid(cfg.interval, panels or cfg.panels)
    coeffs = m_coeffs(op, grid)
    pole = find_pole(eps, op, grid, root_tol=cfg.root_tol, coeffs=coeffs)
    decision = decide(eps, op, grid, root_tol=cfg.root_tol, pole=pole, coeffs=coeffs)
    use_oracle = cfg.oracle if oracle is None else oracle
    if not use_oracle:
        return RunResult(eps, op, grid, coeffs, decision)
    config = oracle_config_for(cfg, op, decision)
    report, spectrum = cross_check(op, eps, decision, grid, config=config)
    return RunResult(eps, op, grid, coeffs, decision, report, spectrum)
