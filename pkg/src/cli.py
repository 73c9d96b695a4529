"""
Command-line entry point: theory curves, simulations, cross-validation limits, figure
reproduction and the self-test.
"""

import logging
from pathlib import Path
from typing import Annotated

import numpy as np
import typer
from joblib import Parallel, delayed
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .core.theory import (
    CountingModel,
    CurveModel,
    LassoCoefModel,
    LassoMaxModel,
    LcdModel,
    power_at_level,
)
from .core.tuning import cv_amp
from .sim.experiment import (
    ExperimentConfig,
    run_experiment,
    summarise,
    theory_lambda,
    threads_from_env,
    trial_cv_lambda,
)
from .sim.export import write_curves_csv, write_frame, write_selections, write_trial_paths
from .sim.figures import FIGURES, reproduce as reproduce_figure
from .sim.selftest import run_selftest
from .utils.constants import CV_FOLDS, LambdaRule, Message, Statistic
from .utils.errors import ConfigError, LassoKnockoffsError

app = typer.Typer(
    name="lassoko",
    help="Asymptotic and simulated FDP / TPP of the Lasso and knockoff selection rules",
    add_completion=False,
    rich_markup_mode="rich",
)

console = Console()
logger = logging.getLogger(__name__)

ConfigArgument = Annotated[
    Path, typer.Argument(help="Experiment config file", exists=True, dir_okay=False)
]
OutOption = Annotated[Path, typer.Option("--out", "-o", help="Output directory")]
JobsOption = Annotated[
    int | None, typer.Option("--jobs", "-j", help="Workers; LASSOKO_THREADS when omitted")
]


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False,
):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _fail(exc: LassoKnockoffsError) -> typer.Exit:
    console.print(f"[bold red]{exc}[/bold red]")
    return typer.Exit(code=exc.exit_code)


def _require_lcd(config: ExperimentConfig) -> None:
    if config.statistic != Statistic.LCD:
        raise ConfigError("the cross-validation limit is defined for statistic = lcd")


def theory_lambda_of(config: ExperimentConfig) -> float:
    """Penalty the theory curve is drawn at: the fixed value, lambda_cv or lambda*."""
    match config.lambda_spec.rule:
        case LambdaRule.FIXED:
            return config.lambda_spec.value
        case LambdaRule.CV:
            _require_lcd(config)
            folds = config.lambda_spec.folds
            limit = cv_amp(config.prior, config.delta, config.sigma, folds, config.settings)
            return limit.lambda_cv
        case _:
            return theory_lambda(config)


def theory_model(config: ExperimentConfig) -> CurveModel:
    prior, delta, sigma, settings = config.prior, config.delta, config.sigma, config.settings
    if config.statistic == Statistic.LASSO_MAX:
        return LassoMaxModel(prior, delta, sigma, settings)

    lam = theory_lambda_of(config)
    match config.statistic:
        case Statistic.LCD:
            return LcdModel(prior, delta, sigma, lam, settings)
        case Statistic.COUNTING_COEF:
            return CountingModel(prior, delta, sigma, lam, config.counting_ratio, settings)
        case _:
            return LassoCoefModel(prior, delta, sigma, lam, settings)


@app.command()
def predict(config_file: ConfigArgument, out: OutOption = Path("results")):
    """Theory tradeoff curve of the configured statistic and its power at every q."""
    try:
        config = ExperimentConfig.from_file(config_file)
        model = theory_model(config)
        path = write_curves_csv([model.curve()], out / "theory_curve.csv")
        powers = [power_at_level(model, q, use_hat=model.has_estimate) for q in config.q_levels]
    except LassoKnockoffsError as exc:
        raise _fail(exc) from exc

    table = Table(title=f"[bold cyan]{config.statistic}[/bold cyan]", box=box.ROUNDED)
    table.add_column("q", style="cyan")
    table.add_column("limiting tpp", style="white")
    for q, power in zip(config.q_levels, powers):
        table.add_row(f"{q:g}", f"{power:.4f}")
    console.print(table)
    if model.lam is not None:
        console.print(f"[dim]lambda = {model.lam:.6g}[/dim]")
    console.print(f"[dim]curve written to {path}[/dim]")


@app.command()
def simulate(
    config_file: ConfigArgument, out: OutOption = Path("results"), jobs: JobsOption = None
):
    """Run the configured trials and write paths, selections and the per-q summary."""
    try:
        config = ExperimentConfig.from_file(config_file)
        records = run_experiment(config, jobs)
    except LassoKnockoffsError as exc:
        raise _fail(exc) from exc

    write_trial_paths(records, out / "trial_paths.csv")
    write_selections(records, out / "selections.csv")
    summary = summarise(records)
    write_frame(summary, out / "summary.csv")

    table = Table(title="[bold cyan]Summary[/bold cyan]", box=box.ROUNDED)
    for column in ("q", "trials", "mean_fdp", "se_fdp", "mean_tpp"):
        table.add_column(column, style="cyan" if column == "q" else "white")
    for row in summary.itertuples(index=False):
        table.add_row(
            f"{row.q:g}",
            str(row.trials),
            f"{row.mean_fdp:.4f}",
            f"{row.se_fdp:.4f}",
            f"{row.mean_tpp:.4f}",
        )
    console.print(table)


@app.command()
def cv(config_file: ConfigArgument, jobs: JobsOption = None):
    """Compare the cross-validated penalty of every trial with its limit lambda_cv."""
    try:
        config = ExperimentConfig.from_file(config_file)
        _require_lcd(config)
        folds = config.lambda_spec.folds or CV_FOLDS
        limit = cv_amp(config.prior, config.delta, config.sigma, folds, config.settings)
        n_jobs = threads_from_env() if jobs is None else jobs
        estimates = Parallel(n_jobs=n_jobs)(
            delayed(trial_cv_lambda)(config, trial_id) for trial_id in range(config.trials)
        )
    except LassoKnockoffsError as exc:
        raise _fail(exc) from exc

    mean = float(np.mean(estimates))
    table = Table(title=f"[bold cyan]{folds}-fold cross-validation[/bold cyan]", box=box.ROUNDED)
    table.add_column("quantity", style="cyan")
    table.add_column("value", style="white")
    table.add_row("lambda_cv (limit)", f"{limit.lambda_cv:.6g}")
    table.add_row("tau_cv", f"{limit.tau_cv:.6g}")
    table.add_row(f"mean over {len(estimates)} trials", f"{mean:.6g}")
    table.add_row("relative gap", f"{abs(mean - limit.lambda_cv) / limit.lambda_cv:.3%}")
    console.print(table)


@app.command()
def reproduce(
    figure_id: Annotated[str, typer.Argument(help=f"One of {', '.join(FIGURES)}")],
    out: OutOption = Path("results"),
    full_size: Annotated[
        bool, typer.Option("--full-size", help="Full reference dimensions and trial counts")
    ] = False,
    trials: Annotated[int | None, typer.Option("--trials", help="Trial count override")] = None,
    jobs: JobsOption = None,
):
    """Write the CSV files of one figure."""
    try:
        paths = reproduce_figure(figure_id, out, full_size=full_size, trials=trials, n_jobs=jobs)
    except LassoKnockoffsError as exc:
        raise _fail(exc) from exc
    for path in paths:
        console.print(f"[green]wrote[/green] {path}")


@app.command()
def selftest():
    """Run the invariant checks."""
    results = run_selftest()
    table = Table(title="[bold cyan]Self-test[/bold cyan]", box=box.ROUNDED)
    table.add_column("check", style="cyan")
    table.add_column("result")
    table.add_column("detail", style="dim white")
    for result in results:
        mark = "[green]pass[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, mark, result.detail)
    console.print(table)

    failed = sum(not result.passed for result in results)
    if failed:
        console.print(f"[bold red]{failed} check(s) failed[/bold red]")
        raise typer.Exit(code=1)
    console.print(f"[bold green]{Message.SUCCESS}[/bold green]")


if __name__ == "__main__":
    app()
