"""Command line front-end.

Exit status: 0 ok, 1 input error, 2 automaton not observable,
3 inadmissible plant-symbol sequence, 4 numeric failure.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click

from . import io
from .abstraction import check_observability, extract, reconstruct, simulate_closed_loop
from .errors import DesPlantError, InputError

EXIT_OK, EXIT_INPUT, EXIT_UNOBSERVABLE, EXIT_INADMISSIBLE, EXIT_NUMERIC = 0, 1, 2, 3, 4
_ERROR_LABELS = {
    EXIT_UNOBSERVABLE: "not observable",
    EXIT_INADMISSIBLE: "inadmissible sequence",
    EXIT_NUMERIC: "numeric failure",
}

_CONFIG_OPTIONS = [
    click.option("--seed", type=int, default=None, help="Sampler seed."),
    click.option("--dt", type=float, default=None, help="Integrator step."),
    click.option("--horizon", type=float, default=None, help="Give up on a control after this long without an event."),
    click.option("--samples", type=int, default=None, help="Initial states per cell."),
    click.option("--eps-t", "eps_t", type=float, default=None, help="Event-time tolerance."),
    click.option("--eps-h", "eps_h", type=float, default=None, help="Kernel tolerance on |h_i|."),
]


def config_options(func):
    for option in reversed(_CONFIG_OPTIONS):
        func = option(func)
    return func


def _overrides(ctx, **given):
    merged = dict(ctx.obj or {})
    merged.update({k: v for k, v in given.items() if v is not None})
    return merged


def _split(text: str, what: str) -> list[str]:
    items = [s.strip() for s in text.split(",")] if text.strip() else []
    if any(not s for s in items):
        raise click.UsageError(f"empty entry in {what} list: {text!r}")
    return items


def _vector(text: str) -> list[float]:
    try:
        return [float(v) for v in _split(text, "--x0")]
    except ValueError:
        raise click.UsageError(f"--x0 must be comma-separated reals, got {text!r}") from None


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@config_options
@click.pass_context
def cli(ctx, **options):
    """Discrete-event abstraction of continuous plants over hypersurface partitions."""
    ctx.obj = {k: v for k, v in options.items() if v is not None}


@cli.command("extract")
@click.argument("system")
@config_options
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Automaton file to write [default: <system>.automaton.json].")
@click.pass_context
def cmd_extract(ctx, system, out, **options):
    """Build the DES-plant automaton of SYSTEM (a path or bundled name)."""
    plant, file_config = io.load_system(system)
    cfg = io.make_config(file_config, _overrides(ctx, **options))
    automaton = extract(plant, cfg)
    out = Path(out or f"{plant.name or Path(system).stem}.automaton.json")
    io.save_automaton(automaton, out)
    report = check_observability(automaton)
    meta = automaton.metadata
    click.echo(f"states: {len(automaton.states)} ({' '.join(s.symbol for s in automaton.states)})")
    for s in automaton.states:
        click.echo(f"  {s.symbol} {io.format_signs(s.signs)}")
    click.echo(f"transitions: {len(automaton.transitions)}")
    click.echo(f"observable: {'yes' if report.observable else 'no'}")
    for src, z, targets in report.witnesses:
        click.echo(f"  witness: {src} --{z}--> {{{', '.join(targets)}}}")
    click.echo(f"simultaneous events: {meta['simultaneous_events']}")
    no_event = ", ".join(f"{p}/{r}" for p, r in meta["no_event"]) or "none"
    click.echo(f"no-event pairs: {no_event}")
    if meta["divergent"]:
        click.echo(f"divergent pairs: {', '.join(f'{p}/{r}' for p, r in meta['divergent'])}")
    click.echo(f"wrote {out}")
    return EXIT_OK


@cli.command("simulate")
@click.argument("system")
@click.option("--x0", "x0", required=True, help="Initial state, comma-separated.")
@click.option("--controls", required=True, help="Control symbols, comma-separated, e.g. r3,r1.")
@click.option("--automaton", type=click.Path(dir_okay=False, exists=True), default=None,
              help="Take state symbols from this automaton file.")
@config_options
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Trace file to write [default: <system>.trace.json].")
@click.pass_context
def cmd_simulate(ctx, system, x0, controls, automaton, out, **options):
    """Run SYSTEM closed loop from X0 under a control-symbol sequence."""
    x = _vector(x0)
    w_r = _split(controls, "--controls")
    if not w_r:
        raise click.UsageError("--controls must name at least one control symbol")
    plant, file_config = io.load_system(system)
    cfg = io.make_config(file_config, _overrides(ctx, **options))
    registry = io.load_automaton(automaton).registry() if automaton else None
    trace = simulate_closed_loop(plant, x, w_r, cfg, registry)
    out = Path(out or f"{plant.name or Path(system).stem}.trace.json")
    io.save_trace(trace, out)
    click.echo(" ".join(trace.states))
    click.echo(" ".join(trace.symbols))
    click.echo(f"termination: {trace.termination} at t={trace.final_time:.9g}", err=True)
    click.echo(f"wrote {out}", err=True)
    return EXIT_OK


@cli.command("check-observability")
@click.argument("automaton", type=click.Path(dir_okay=False))
def cmd_check(automaton):
    """Report whether each (state, plant-symbol) pair determines the next state."""
    a = io.load_automaton(automaton)
    report = check_observability(a)
    click.echo(f"observable: {'yes' if report.observable else 'no'}")
    for src, z, targets in report.witnesses:
        click.echo(f"witness: {src} --{z}--> {{{', '.join(targets)}}}")
    return EXIT_OK if report.observable else EXIT_UNOBSERVABLE


@cli.command("reconstruct")
@click.argument("automaton", type=click.Path(dir_okay=False))
@click.option("--initial", required=True, help="Initial state symbol, e.g. p2.")
@click.option("--symbols", required=True, help="Plant-symbols, comma-separated, e.g. z1+,z2-.")
def cmd_reconstruct(automaton, initial, symbols):
    """Recover the state sequence that emitted a plant-symbol sequence."""
    a = io.load_automaton(automaton)
    w_z = _split(symbols, "--symbols")
    click.echo(" ".join(reconstruct(a, initial, w_z)))
    return EXIT_OK


@cli.command("export-dot")
@click.argument("automaton", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write here instead of stdout.")
def cmd_export_dot(automaton, out):
    """Print the automaton as a Graphviz digraph."""
    text = io.to_dot(io.load_automaton(automaton))
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="desplant", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INPUT
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except DesPlantError as exc:
        label = _ERROR_LABELS.get(exc.exit_code, "error")
        click.echo(f"{label}: {exc}", err=True)
        return exc.exit_code
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
