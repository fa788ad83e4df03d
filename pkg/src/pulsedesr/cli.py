"""Command-line interface.

Exit codes: 0 success, 1 bad configuration or arguments, 2 a fit did not
converge (its partial result is still written), 3 file input/output failure.
Diagnostics go to standard error.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click

from . import __version__
from .calculators import DilutionSpec, dipolar_coupling, figure_of_merit, mean_separation
from .config import ConfigError, ExperimentConfig, load_config
from .fitting import fit, fit_gaussian_line, fit_inversion_recovery, fit_zfs_spectrum, get_model
from .io import FormatError, read_csv, write_csv, write_fit_result, write_svg
from .noise import add_noise
from .powder import Spectrum, echo_detected_spectrum, make_grid
from .pulses import hahn_decay_curve, inversion_recovery_curve
from .spin import SpinSystem

EXIT_CONFIG, EXIT_FIT, EXIT_IO = 1, 2, 3


class FitNotConverged(Exception):
    pass


def _config(path) -> ExperimentConfig:
    return load_config(path)


def _emit(cfg: ExperimentConfig, data, stem: str, out_dir, svg: bool | None) -> Path:
    out = cfg.output_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg.output_stem(stem)
    path = write_csv(out / f"{name}.csv", data)
    if cfg.write_svg if svg is None else svg:
        write_svg(out / f"{name}.svg", data, title=name)
    click.echo(str(path))
    return path


def _noisy(cfg: ExperimentConfig, data):
    if cfg.noise_sigma > 0:
        return add_noise(data, cfg.noise_sigma, cfg.noise_seed)
    return data


def _report(result, out, svg_path, data, model_curve):
    for k, v in result.params.items():
        click.echo(f"{k} = {v:.10g} +/- {result.sigmas[k]:.3g}")
    if result.flags:
        click.echo("flags: " + ", ".join(result.flags), err=True)
    if out is not None:
        write_fit_result(out, result)
    if svg_path is not None:
        write_svg(svg_path, data, model=model_curve, title=result.model)
    if not result.converged:
        raise FitNotConverged(f"fit did not converge: {result.message}")


_out_dir = click.option("--out-dir", type=click.Path(file_okay=False), default=None,
                        help="Output directory (overrides config and environment).")
_svg = click.option("--svg/--no-svg", default=None, help="Also write an SVG plot.")


@click.group()
@click.version_option(__version__)
def cli():
    """Pulsed ESR simulation and relaxation analysis."""


@cli.command("simulate-spectrum")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--n-jobs", type=int, default=None, help="Worker threads for the powder average.")
@_out_dir
@_svg
def simulate_spectrum(config_path, n_jobs, out_dir, svg):
    """Echo-detected field-swept powder spectrum."""
    cfg = _config(config_path)
    cfg.require("system")
    sp = cfg.section("spectrum")
    spec = echo_detected_spectrum(
        cfg.spin_system(), cfg.grid(), sp.get("mw_GHz", 9.7), cfg.field_axis(),
        sp.get("sigma_T", 0.01 / 2.355), lineshape=sp.get("lineshape", "gaussian"),
        temperature=sp.get("temperature_K"), mesh_points=sp.get("mesh_points", 2000),
        n_jobs=n_jobs if n_jobs is not None else sp.get("n_jobs", 1))
    _emit(cfg, _noisy(cfg, spec), "spectrum", out_dir, svg)


def _pulse_meta(cfg):
    pulses = cfg.pulses()
    return {"pulses_ns": ",".join(f"{p.duration:g}" for p in pulses)} if pulses else {}


@cli.command("simulate-decay")
@click.option("--config", "config_path", required=True, type=click.Path())
@_out_dir
@_svg
def simulate_decay(config_path, out_dir, svg):
    """Two-pulse echo decay with optional ESEEM."""
    cfg = _config(config_path)
    cfg.require("sequence", "relaxation")
    seq = cfg.section("sequence")
    if seq["sequence"] != "hahn":
        raise ConfigError("simulate-decay needs sequence/sequence = 'hahn'")
    trace = hahn_decay_curve(cfg.tau_values(), cfg.relaxation(), cfg.eseem_model(),
                             seq.get("amplitude", 1.0), seq.get("detection_window_ns", 0.0))
    trace.meta.update(_pulse_meta(cfg))
    _emit(cfg, _noisy(cfg, trace), "decay", out_dir, svg)


@cli.command("simulate-recovery")
@click.option("--config", "config_path", required=True, type=click.Path())
@_out_dir
@_svg
def simulate_recovery(config_path, out_dir, svg):
    """Inversion-recovery curve read out by a Hahn echo at fixed tau."""
    cfg = _config(config_path)
    cfg.require("sequence", "relaxation")
    seq = cfg.section("sequence")
    if seq["sequence"] != "inversion_recovery":
        raise ConfigError("simulate-recovery needs sequence/sequence = 'inversion_recovery'")
    tau = cfg.tau_values()
    if len(tau) != 1:
        raise ConfigError("inversion recovery takes a single fixed tau_ns")
    relax = cfg.relaxation()
    if math.isinf(relax.T1):
        raise ConfigError("relaxation/T1_ns is required")
    trace = inversion_recovery_curve(cfg.recovery_values(), relax, float(tau[0]),
                                     seq.get("inversion_efficiency", 1.0), seq.get("amplitude", 1.0))
    trace.meta.update(_pulse_meta(cfg))
    _emit(cfg, _noisy(cfg, trace), "recovery", out_dir, svg)


def _load_trace(path, kinds):
    data = read_csv(path)
    kind = "spectrum" if isinstance(data, Spectrum) else data.kind
    if kind not in kinds:
        raise FormatError(f"{path}: expected a {' or '.join(kinds)} file, got {kind}")
    return data


@cli.command("fit-decay")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--model", type=click.Choice(["mono_exponential", "modulated_decay"]),
              default="mono_exponential", show_default=True)
@click.option("--second-harmonic", is_flag=True, help="Fit a free second-harmonic depth.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="FitResult JSON path.")
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None)
def fit_decay(in_path, model, second_harmonic, out, svg_path):
    """Fit T2 (and an ESEEM frequency) to a delay trace."""
    trace = _load_trace(in_path, ("delay_ns", "time_ns"))
    m = get_model(model, second_harmonic=second_harmonic) if model == "modulated_decay" else get_model(model)
    result = fit(m, trace)
    _report(result, out, svg_path, trace, m(trace.axis, result.params))


@cli.command("fit-recovery")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--tau-ns", type=float, default=None, help="Fixed echo delay; defaults to the file header.")
@click.option("--t2-ns", type=float, default=None, help="T2 used to undo the echo factor.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None)
def fit_recovery(in_path, tau_ns, t2_ns, out, svg_path):
    """Fit T1, M_inf and the inversion efficiency to a recovery trace."""
    trace = _load_trace(in_path, ("recovery_ns",))
    tau = tau_ns if tau_ns is not None else trace.meta.get("tau_ns")
    if tau is None:
        raise ConfigError("--tau-ns is required (no tau_ns in the file header)")
    result = fit_inversion_recovery(trace, float(tau), T2=t2_ns)
    m = get_model("inversion_recovery")
    _report(result, out, svg_path, trace, m(trace.axis, result.params))


@cli.command("fit-spectrum")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--model", type=click.Choice(["gaussian_line", "zfs"]), default="gaussian_line",
              show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config whose system section is the initial guess (zfs model).")
@click.option("--S", "S", type=float, default=None)
@click.option("--g", "g", type=float, default=None)
@click.option("--D-ghz", "D", type=float, default=None)
@click.option("--E-ghz", "E", type=float, default=None)
@click.option("--mw-ghz", type=float, default=None)
@click.option("--starts", type=click.IntRange(1, 5), default=1, show_default=True)
@click.option("--grid-n", type=click.IntRange(4, 400), default=24, show_default=True,
              help="Spiral orientation grid size of the zfs forward model (n*n points).")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None)
def fit_spectrum(in_path, model, config_path, S, g, D, E, mw_ghz, starts, grid_n, out, svg_path):
    """Fit a Gaussian line or a zero-field-split powder pattern to a spectrum."""
    spec = _load_trace(in_path, ("spectrum",))
    if model == "gaussian_line":
        result = fit_gaussian_line(spec)
        curve = get_model("gaussian_line")(spec.field_axis, result.params)
    else:
        base = _config(config_path).spin_system().to_dict() if config_path else {"S": 1}
        for key, v in (("S", S), ("g", g), ("D_GHz", D), ("E_GHz", E)):
            if v is not None:
                base[key] = v
        init = SpinSystem.from_dict(base)
        result = fit_zfs_spectrum(spec, init, mw_ghz, n_starts=starts,
                                  grid=make_grid(grid_n, "spiral"))
        curve = None
    _report(result, out, svg_path, spec, curve)


@cli.command("calc-dilution")
@click.option("--concentration-mg-ml", "c", type=float, required=True)
@click.option("--molar-mass", "M", type=float, required=True, help="g/mol (no default).")
@click.option("--json", "as_json", is_flag=True)
def calc_dilution(c, M, as_json):
    """Mean separation of solute molecules and their dipolar coupling."""
    r = mean_separation(DilutionSpec(c, M))
    nu = dipolar_coupling(r)
    if as_json:
        click.echo(json.dumps({"mean_separation_nm": r, "dipolar_coupling_MHz": nu}))
    else:
        click.echo(f"mean separation: {r:.4g} nm")
        click.echo(f"dipolar coupling: {nu * 1e3:.4g} kHz")


@cli.command("calc-fom")
@click.option("--t2-ns", type=float, required=True)
@click.option("--top-ns", type=float, required=True, help="Duration of one operation.")
def calc_fom(t2_ns, top_ns):
    """Coherence time over operation time."""
    click.echo(f"{figure_of_merit(t2_ns, top_ns):g}")


def main(argv=None) -> int:
    """Run the CLI and return its exit code."""
    try:
        cli.main(args=argv, prog_name="pulsedesr", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except FitNotConverged as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_FIT
    except click.FileError as exc:
        exc.show()
        return EXIT_IO
    except (click.ClickException, click.Abort) as exc:
        if isinstance(exc, click.ClickException):
            exc.show()
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
