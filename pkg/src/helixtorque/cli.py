from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any, Iterator, Optional

import typer
from pydantic import ValidationError

from helixtorque.config import MICRON, RunConfig, load_config
from helixtorque.errors import EXIT_CONFIG, HelixTorqueError, OracleCheckError
from helixtorque.fileio import config_hash, format_float, write_csv, write_json
from helixtorque.lifshitz import (
    FourierSpectrum,
    TorqueCurve,
    evaluate_energy,
    fourier_components,
    radial_cut_bound,
    sweep as run_sweep,
    torque_curve,
)
from helixtorque.logging_jsonl import JsonlLogger
from helixtorque.oracle import default_probes, oracle_check

app = typer.Typer(
    help="Casimir free energy, torque and Fourier spectra of two cholesteric slabs.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOption = Annotated[
    Path,
    typer.Option(
        "--config",
        "-c",
        exists=True,
        dir_okay=False,
        readable=True,
        help="Run configuration (.json or .toml).",
    ),
]
SeparationOption = Annotated[
    Optional[float],
    typer.Option("--separation-um", help="Gap width in microns (overrides config)."),
]
PhiPointsOption = Annotated[
    Optional[int],
    typer.Option("--phi-points", help="Samples of phi over [0, pi) (overrides config)."),
]
OutOption = Annotated[
    Optional[Path],
    typer.Option("--out", "-o", dir_okay=False, help="Artifact path (overrides config)."),
]
FormatOption = Annotated[
    Optional[str],
    typer.Option("--format", help="Artifact format: csv or json (overrides config)."),
]
ThreadsOption = Annotated[
    int,
    typer.Option("--threads", envvar="HTORQUE_THREADS", min=1, help="Worker threads."),
]
LogDirOption = Annotated[
    Optional[Path],
    typer.Option("--log-dir", file_okay=False, help="Directory for the JSONL run log."),
]


def _version_callback(value: bool) -> None:
    if not value:
        return
    from helixtorque import __version__

    typer.echo(__version__)
    raise typer.Exit()


@app.callback()
def cli(
    version: Annotated[
        bool,
        typer.Option(
            "--version",
            callback=_version_callback,
            is_eager=True,
            help="Print version and exit.",
        ),
    ] = False,
) -> None:
    """
    helixtorque: Casimir-Lifshitz interaction of finite cholesteric slabs.

    Examples:

        # Energy at one misalignment angle
        htorque energy -c configs/homochiral_1um.json --phi 0.5

        # Torque curve over [0, pi) as CSV
        htorque torque-curve -c configs/homochiral_1um.json --out torque.csv

        # Fourier spectrum of the torque
        htorque fourier -c configs/homochiral_5um.json --orders 4
    """


@contextmanager
def _exit_on_error() -> Iterator[None]:
    try:
        yield
    except ValidationError as exc:
        typer.echo(f"config error: {exc}", err=True)
        raise typer.Exit(EXIT_CONFIG) from exc
    except HelixTorqueError as exc:
        typer.echo(f"{type(exc).__name__}: {exc}", err=True)
        raise typer.Exit(exc.exit_code) from exc
    except OSError as exc:
        typer.echo(f"I/O error: {exc}", err=True)
        raise typer.Exit(1) from exc


def _resolve_config(
    config: Path,
    *,
    separation_um: Optional[float] = None,
    phi_points: Optional[int] = None,
    orders: Optional[int] = None,
    out: Optional[Path] = None,
    fmt: Optional[str] = None,
    log_dir: Optional[Path] = None,
) -> RunConfig:
    cfg = load_config(config)
    updates: dict[str, Any] = {}
    if separation_um is not None:
        updates["separations_um"] = (separation_um,)
    if phi_points is not None:
        updates["phi_points"] = phi_points
    if orders is not None:
        updates["fourier_orders"] = orders
    if out is not None or fmt is not None:
        output = cfg.output.model_dump()
        if out is not None:
            output["path"] = str(out)
        if fmt is not None:
            output["format"] = fmt
        updates["output"] = output
    if log_dir is not None:
        updates["logging"] = {**cfg.logging.model_dump(), "log_dir": str(log_dir)}
    return cfg.with_overrides(**updates) if updates else cfg


def _metadata(cfg: RunConfig, command: str) -> dict[str, Any]:
    from helixtorque import __version__

    document = cfg.to_document()
    return {
        "code_version": __version__,
        "command": command,
        "config_sha256": config_hash(document),
        "config": document,
    }


def _artifact_path(cfg: RunConfig, default_stem: str) -> Path:
    if cfg.output.path is not None:
        return Path(cfg.output.path)
    return Path(f"{default_stem}.{cfg.output.format}")


def _start(cfg: RunConfig, command: str) -> JsonlLogger:
    logger = JsonlLogger.from_config(cfg.logging)
    logger({"event": "run_started", "command": command, "config_sha256": config_hash(cfg.to_document())})
    return logger


def _curve_rows(curve: TorqueCurve) -> list[tuple[float, float, float]]:
    return list(zip(curve.phi_grid.tolist(), curve.energy.tolist(), curve.torque.tolist()))


def _spectrum_rows(spectrum: FourierSpectrum) -> list[tuple[int, float, float, float, float]]:
    a_ratio, b_ratio = spectrum.ratios()
    return [
        (int(m), float(a), float(b), float(ar), float(br))
        for m, a, b, ar, br in zip(spectrum.orders, spectrum.a, spectrum.b, a_ratio, b_ratio)
    ]


CURVE_HEADER = ("phi_rad", "energy_J_per_m2", "torque_J_per_m2_rad")
SPECTRUM_HEADER = ("m", "a_m", "b_m", "a_m_over_b1", "b_m_over_b1")


@app.command()
def energy(
    config: ConfigOption,
    phi: Annotated[float, typer.Option("--phi", help="Misalignment angle (rad).")] = 0.0,
    separation_um: SeparationOption = None,
    out: OutOption = None,
    threads: ThreadsOption = 1,
    log_dir: LogDirOption = None,
) -> None:
    """Free energy per area at one angle and separation."""
    with _exit_on_error():
        cfg = _resolve_config(config, separation_um=separation_um, out=out, fmt="json", log_dir=log_dir)
        logger = _start(cfg, "energy")
        interaction = cfg.to_interaction()
        result = evaluate_energy(interaction, [phi], threads=threads, events=logger)
        value = float(result.energy[0])
        quad = interaction.quadrature
        diagnostics = {
            "n_krho": quad.n_krho,
            "n_eta": quad.n_eta,
            "krho_cut": quad.krho_cut,
            "last_term_ratio": result.tail_ratio,
            "radial_cut_bound": radial_cut_bound(quad),
        }
        if out is not None:
            write_json(
                out,
                metadata=_metadata(cfg, "energy"),
                data={
                    "phi_rad": phi,
                    "separation_m": interaction.separation,
                    "energy_J_per_m2": value,
                    "matsubara_terms": result.terms_used,
                    "converged": result.converged,
                    "quadrature": diagnostics,
                },
            )
        logger({"event": "run_finished", "command": "energy", **diagnostics})
        typer.echo(
            f"E/A = {format_float(value)} J/m^2 at phi = {format_float(phi)} rad, "
            f"a = {format_float(interaction.separation)} m "
            f"(Matsubara terms: {result.terms_used}, converged: {result.converged})"
        )
        typer.echo(
            f"quadrature: n_krho = {quad.n_krho}, n_eta = {quad.n_eta}, u_cut = {format_float(quad.krho_cut)}; "
            f"last term / |E| = {result.tail_ratio:.2e}, radial tail bound = {diagnostics['radial_cut_bound']:.2e}"
        )


@app.command("torque-curve")
def torque_curve_cmd(
    config: ConfigOption,
    separation_um: SeparationOption = None,
    phi_points: PhiPointsOption = None,
    out: OutOption = None,
    fmt: FormatOption = None,
    threads: ThreadsOption = 1,
    log_dir: LogDirOption = None,
) -> None:
    """Energy and torque over a uniform phi grid."""
    with _exit_on_error():
        cfg = _resolve_config(
            config, separation_um=separation_um, phi_points=phi_points, out=out, fmt=fmt, log_dir=log_dir
        )
        logger = _start(cfg, "torque-curve")
        curve = torque_curve(cfg.to_interaction(), threads=threads, events=logger)
        path = _artifact_path(cfg, "torque_curve")
        metadata = {
            **_metadata(cfg, "torque-curve"),
            "separation_m": curve.separation,
            "check_residual": curve.check_residual,
            "matsubara_terms": curve.terms_used,
        }
        rows = _curve_rows(curve)
        if cfg.output.format == "csv":
            write_csv(path, metadata=metadata, header=CURVE_HEADER, rows=rows)
        else:
            write_json(path, metadata=metadata, data=[dict(zip(CURVE_HEADER, r)) for r in rows])
        logger({"event": "run_finished", "command": "torque-curve", "artifact": str(path)})
        typer.echo(
            f"wrote {len(rows)} rows to {path} "
            f"(spectral vs finite-difference residual {curve.check_residual:.2e})"
        )


@app.command()
def fourier(
    config: ConfigOption,
    separation_um: SeparationOption = None,
    phi_points: PhiPointsOption = None,
    orders: Annotated[
        Optional[int], typer.Option("--orders", help="Highest Fourier order M (overrides config).")
    ] = None,
    out: OutOption = None,
    fmt: FormatOption = None,
    threads: ThreadsOption = 1,
    log_dir: LogDirOption = None,
) -> None:
    """Fourier coefficients a_m, b_m of the torque and their ratios to b_1."""
    with _exit_on_error():
        cfg = _resolve_config(
            config,
            separation_um=separation_um,
            phi_points=phi_points,
            orders=orders,
            out=out,
            fmt=fmt,
            log_dir=log_dir,
        )
        logger = _start(cfg, "fourier")
        curve = torque_curve(cfg.to_interaction(), threads=threads, events=logger)
        spectrum = fourier_components(curve, cfg.fourier_orders)
        logger({"event": "fourier_done", "orders": cfg.fourier_orders, "b1": float(spectrum.b[0])})
        path = _artifact_path(cfg, "fourier")
        metadata = {**_metadata(cfg, "fourier"), "separation_m": spectrum.separation}
        rows = _spectrum_rows(spectrum)
        if cfg.output.format == "csv":
            write_csv(path, metadata=metadata, header=SPECTRUM_HEADER, rows=rows)
        else:
            write_json(path, metadata=metadata, data=[dict(zip(SPECTRUM_HEADER, r)) for r in rows])
        logger({"event": "run_finished", "command": "fourier", "artifact": str(path)})
        for m, _, _, a_ratio, b_ratio in rows:
            typer.echo(f"m={m}: a_m/b_1 = {a_ratio:+.6f}, b_m/b_1 = {b_ratio:+.6f}")


@app.command()
def sweep(
    config: ConfigOption,
    phi_points: PhiPointsOption = None,
    orders: Annotated[
        Optional[int], typer.Option("--orders", help="Highest Fourier order M (overrides config).")
    ] = None,
    out: OutOption = None,
    fmt: FormatOption = None,
    threads: ThreadsOption = 1,
    log_dir: LogDirOption = None,
) -> None:
    """Fourier spectra over separations x thicknesses x pairings."""
    with _exit_on_error():
        cfg = _resolve_config(config, phi_points=phi_points, orders=orders, out=out, fmt=fmt, log_dir=log_dir)
        logger = _start(cfg, "sweep")
        cases = cfg.sweep_cases()
        results = run_sweep(
            cfg.to_interaction(), cases, orders=cfg.fourier_orders, threads=threads, events=logger
        )
        path = _artifact_path(cfg, "sweep")
        metadata = _metadata(cfg, "sweep")
        header = ("separation_m", "d_tot_m", "pairing") + SPECTRUM_HEADER
        rows: list[tuple[Any, ...]] = []
        documents = []
        for result in results:
            case = result.case
            key = (case.separation, case.d_tot, case.pairing)
            if result.spectrum is None:
                rows.append(key + (0, math.nan, math.nan, math.nan, math.nan))
                documents.append({"case": case.label, "error": result.error})
                typer.echo(f"{case.label}: failed ({result.error})", err=True)
                continue
            spectrum_rows = _spectrum_rows(result.spectrum)
            rows.extend(key + r for r in spectrum_rows)
            documents.append(
                {
                    "case": case.label,
                    "separation_m": case.separation,
                    "d_tot_m": case.d_tot,
                    "pairing": case.pairing,
                    "spectrum": [dict(zip(SPECTRUM_HEADER, r)) for r in spectrum_rows],
                }
            )
        if cfg.output.format == "csv":
            write_csv(path, metadata=metadata, header=header, rows=rows)
        else:
            write_json(path, metadata=metadata, data=documents)
        failed = sum(1 for r in results if r.error is not None)
        logger({"event": "run_finished", "command": "sweep", "cases": len(results), "failed": failed})
        typer.echo(f"wrote {len(results) - failed}/{len(results)} cases to {path}")
        if results and failed == len(results):
            raise typer.Exit(1)


@app.command("oracle-check")
def oracle_check_cmd(
    config: ConfigOption,
    resolutions: Annotated[
        Optional[list[int]],
        typer.Option("--resolution", help="Layers per pitch; repeat for a sequence (overrides config)."),
    ] = None,
    out: OutOption = None,
    log_dir: LogDirOption = None,
) -> None:
    """Compare the staircase slab against an explicit stack of rotated layers."""
    with _exit_on_error():
        cfg = _resolve_config(config, out=out, fmt="json", log_dir=log_dir)
        if resolutions:
            cfg = cfg.with_overrides(
                oracle={**cfg.oracle.model_dump(), "resolutions": tuple(resolutions)}
            )
        logger = _start(cfg, "oracle-check")
        settings = cfg.oracle
        slab = cfg.slabs[0].to_slab()
        probes = default_probes(cfg.thermal_grid(), settings.probe_separation_um * MICRON)
        report = oracle_check(
            slab,
            probes,
            resolutions=settings.resolutions,
            gap_eps=cfg.gap_eps,
            tolerance=settings.tolerance,
            events=logger,
        )
        path = _artifact_path(cfg, "oracle_check")
        write_json(path, metadata=_metadata(cfg, "oracle-check"), data=report.to_document())
        logger({"event": "run_finished", "command": "oracle-check", "passed": report.passed})
        for n, error in zip(report.resolutions, report.max_errors):
            typer.echo(f"{n:>6} layers/pitch: max |r_discrete - r_staircase| = {error:.3e}")
        typer.echo(f"fitted slope {report.slope:.3f}, zero-twist error {report.zero_twist_error:.3e}")
        if not report.passed:
            raise OracleCheckError("; ".join(report.failures))


def main() -> None:
    app()


if __name__ == "__main__":  # pragma: no cover
    main()
