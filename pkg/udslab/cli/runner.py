"""Kommandozeile für uds-lab: Läufe, Verifikation, Spuranalyse, Denoiser-Training."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from logging import Logger
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from udslab.cli.outputs import collect_traces, write_run_outputs, write_trace_analysis
from udslab.cli.reporting import RunSummaryPresenter, TraceAnalysisPresenter, VerificationReportPresenter
from udslab.core import (
    ConfigError,
    ConfigManager,
    ExperimentConfig,
    NumericalAbortError,
    TraceFileError,
    get_logger,
    set_console_level,
    setup_logging,
)
from udslab.modules.gmm_oracle import AnalyticDenoiser, ConditionRegistry
from udslab.modules.latent_ops import Denoiser
from udslab.modules.neural_denoiser import (
    DenoiserNet,
    NeuralDenoiser,
    epsilon_rms,
    init_net,
    load_net,
    save_net,
    train,
)
from udslab.modules.optimizer import run_replicates
from udslab.modules.reference_oracles import FAULTS, VerificationSuite
from udslab.modules.schedule import NoiseSchedule

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ABORT = 3
DEFAULT_OUT_DIR = Path("results")
EFFECTIVE_CONFIG_NAME = "config_effective.json"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uds-lab",
        description=(
            "Score-Destillation im Kleinformat: Generierung und Bearbeitung mit exakten "
            "Gauß-Mischungs-Orakeln (GMM = Gaussian Mixture Model)."
        ),
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("generate", "Generierungslauf (SDS, ISM, UDS_GEN, UDS_GEN_NEG)."),
        ("edit", "Bearbeitungslauf (DDS, PDS, UDS_EDIT)."),
    ):
        command = commands.add_parser(name, help=help_text)
        command.add_argument("--config", type=Path, required=True, help="Experimentdatei (JSON).")
        command.add_argument("--seed", type=int, help="Erster Seed (überschreibt run.seed).")
        command.add_argument("--seeds", type=int, help="Anzahl Wiederholungen (überschreibt run.seeds).")
        command.add_argument("--out-dir", type=Path, default=DEFAULT_OUT_DIR, help="Zielordner für CSV/PPM.")
        command.add_argument("--method", help="Methode überschreiben (z.B. UDS_EDIT).")
        command.add_argument("--cfg-weight", type=float, help="CFG-Gewicht w überschreiben.")
        command.add_argument("--json", action="store_true", help="Zusammenfassung als JSON auf stdout.")

    verify = commands.add_parser("verify", help="Alle Identitäten gegen die Referenz-Orakel prüfen.")
    verify.add_argument("--json", action="store_true", help="Ein JSON-Objekt pro Prüfung auf stdout.")
    verify.add_argument("--inject-fault", choices=FAULTS, help="Absichtlich fehlerhafte Variante einsetzen.")
    verify.add_argument("--trials", type=int, default=1000, help="Zufallsversuche pro Prüfung.")
    verify.add_argument("--seed", type=int, default=0, help="Seed der Zufallsversuche.")

    analysis = commands.add_parser("trace-analysis", help="Spuren je Methode mitteln (CSV für Abbildungen).")
    analysis.add_argument("trace_dir", type=Path, help="Ordner mit trace_<METHODE>_seed<N>.csv")
    analysis.add_argument("--out-dir", type=Path, help="Zielordner (Standard: trace_dir).")
    analysis.add_argument("--tail-fraction", type=float, default=0.2, help="Anteil am Ende für Kosinusmittel.")
    analysis.add_argument("--json", action="store_true", help="Kosinusprofile als JSON auf stdout.")

    training = commands.add_parser("train-denoiser", help="Neuronalen Denoiser trainieren und speichern.")
    training.add_argument("--config", type=Path, required=True, help="Experimentdatei (JSON).")
    training.add_argument("--out", type=Path, required=True, help="Zieldatei der Gewichte.")
    training.add_argument("--json", action="store_true", help="Ergebnis als JSON auf stdout.")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Leserliche Argumente für alle Unterbefehle."""

    return build_parser().parse_args(argv)


# ----------------------------------------------------------------------
# denoiser setup


def train_denoiser(
    config: ExperimentConfig, registry: ConditionRegistry, sched: NoiseSchedule, logger: Logger
) -> DenoiserNet:
    spec = config.run["denoiser"]
    rng = np.random.default_rng(int(spec["seed"]))
    net = init_net(config.dim, registry.prompt_ids, sched.T, rng, hidden=int(spec["hidden"]), cond_dim=int(spec["cond_dim"]))
    logger.info("Trainiere Denoiser: %d Schritte, Batch %d, Seed %d", spec["train_steps"], spec["batch"], spec["seed"])
    train(
        net,
        registry,
        sched,
        int(spec["train_steps"]),
        int(spec["batch"]),
        float(spec["lr"]),
        rng,
        dropout=float(spec["dropout"]),
        logger=get_logger("modules.neural_denoiser"),
    )
    return net


def _weights_path(config: ExperimentConfig) -> Path:
    path = Path(config.run["denoiser"]["weights"])
    if not path.is_absolute() and not path.exists() and config.source is not None:
        candidate = config.source.parent / path
        if candidate.exists():
            return candidate
    return path


def build_denoiser(
    config: ExperimentConfig, registry: ConditionRegistry, sched: NoiseSchedule, logger: Logger
) -> Denoiser:
    """Analytic oracle or neural net (loaded from ``weights`` or trained in-process)."""

    spec = config.run["denoiser"]
    if spec["kind"] == "analytic":
        return AnalyticDenoiser(registry, sched)
    if spec["weights"] is None:
        return NeuralDenoiser(train_denoiser(config, registry, sched, logger))

    path = _weights_path(config)
    try:
        net = load_net(path)
    except (OSError, ValueError) as error:
        raise ConfigError(str(error), field="run.denoiser.weights") from error
    if net.dim != config.dim or net.T != sched.T:
        raise ConfigError(
            f"Gewichte für d={net.dim}, T={net.T}, Experiment hat d={config.dim}, T={sched.T}",
            field="run.denoiser.weights",
        )
    missing = sorted(set(registry.prompt_ids) - set(net.prompt_ids))
    if missing:
        raise ConfigError(f"Gewichte kennen die Prompts {missing} nicht", field="run.denoiser.weights")
    logger.info("Denoiser-Gewichte geladen: %s", path)
    return NeuralDenoiser(net)


# ----------------------------------------------------------------------
# commands


def _load_config(args: argparse.Namespace, logger: Logger) -> ExperimentConfig:
    config = ConfigManager(args.config).load()
    overrides: Dict[str, Any] = {
        "method": getattr(args, "method", None),
        "cfg_weight": getattr(args, "cfg_weight", None),
        "seed": getattr(args, "seed", None),
        "seeds": getattr(args, "seeds", None),
    }
    if any(value is not None for value in overrides.values()):
        config = config.with_overrides(**overrides)
        logger.info("Überschreibungen aktiv: %s", {key: value for key, value in overrides.items() if value is not None})
    return config


def cmd_run(args: argparse.Namespace, logger: Logger) -> int:
    """``generate`` and ``edit``: replicate runs plus CSV/PPM outputs."""

    task = args.command
    config = _load_config(args, logger)
    if config.task != task:
        raise ConfigError(f"Die Datei beschreibt {config.task!r}, aufgerufen wurde {task!r}", field="run.task")

    sched = config.build_schedule()
    registry = config.build_registry()
    denoiser = build_denoiser(config, registry, sched, logger)
    run_config = config.run_config()
    seeds = config.seeds
    logger.info("Starte %d Lauf/Läufe: %s, w=%g, Seeds %s", len(seeds), config.method, run_config.distiller.w, seeds)
    results = run_replicates(run_config, seeds, denoiser, sched, registry)

    out_dir = Path(args.out_dir)
    summaries = write_run_outputs(
        results,
        registry,
        out_dir,
        task=task,
        frozen_dims=config.run["frozen_dims"],
        as_image=bool(config.run["as_image"]),
        image_scale=int(config.run["image_scale"]),
    )
    effective_path = out_dir / EFFECTIVE_CONFIG_NAME
    if not ConfigManager(args.config).save_effective(config, effective_path):
        raise ConfigError(
            f"Effektive Konfiguration konnte nicht geschrieben werden: {effective_path}", field="--out-dir"
        )

    if args.json:
        payload = {"task": task, "method": config.method, "out_dir": str(out_dir), "runs": [s.to_dict() for s in summaries]}
        print(json.dumps(payload, indent=2))
    else:
        RunSummaryPresenter(summaries, out_dir).print()
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, logger: Logger) -> int:
    suite = VerificationSuite(trials=args.trials, seed=args.seed, fault=args.inject_fault)
    report = suite.run()
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        VerificationReportPresenter(report).print()
    if not report.all_passed:
        logger.error("Verifikation fehlgeschlagen: %s", ", ".join(result.name for result in report.failed))
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_trace_analysis(args: argparse.Namespace, logger: Logger) -> int:
    if not 0.0 < args.tail_fraction <= 1.0:
        raise ConfigError("muss in (0, 1] liegen", field="--tail-fraction")
    grouped = collect_traces(args.trace_dir)
    out_dir = args.out_dir if args.out_dir is not None else args.trace_dir
    analysis = write_trace_analysis(grouped, out_dir)
    presenter = TraceAnalysisPresenter(analysis, tail_fraction=args.tail_fraction)
    if args.json:
        payload = {
            method: {
                "path": str(path),
                "rows": len(rows),
                "seeds": [seed for seed, _ in grouped[method]],
                "cos_recon_tail": presenter.profiles[method].recon,
                "cos_cls_tail": presenter.profiles[method].cls,
                "cos_identity_tail": presenter.profiles[method].identity,
            }
            for method, (path, rows) in analysis.items()
        }
        print(json.dumps(payload, indent=2))
    else:
        presenter.print()
    return EXIT_OK


def cmd_train_denoiser(args: argparse.Namespace, logger: Logger) -> int:
    config = _load_config(args, logger)
    sched = config.build_schedule()
    registry = config.build_registry()
    net = train_denoiser(config, registry, sched, logger)
    if not save_net(net, args.out):
        raise ConfigError(f"Gewichte konnten nicht geschrieben werden: {args.out}", field="--out")
    rng = np.random.default_rng(int(config.run["denoiser"]["seed"]) + 1)
    rms = epsilon_rms(NeuralDenoiser(net), AnalyticDenoiser(registry, sched), registry, sched, rng)
    logger.info("Abweichung zum analytischen Denoiser (eps-RMS): %.4f", rms)
    if args.json:
        print(json.dumps({"path": str(args.out), "epsilon_rms": rms}, indent=2))
    else:
        print(f"[Training] Gewichte gespeichert unter {args.out} (eps-RMS gegenüber Orakel {rms:.4f})")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, Logger], int]] = {
    "generate": cmd_run,
    "edit": cmd_run,
    "verify": cmd_verify,
    "trace-analysis": cmd_trace_analysis,
    "train-denoiser": cmd_train_denoiser,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry-point für Kommandozeile und Konsolen-Shortcut."""

    args = parse_args(argv)
    setup_logging()
    if getattr(args, "json", False):
        set_console_level(logging.WARNING)
    logger = get_logger("cli")
    logger.info("uds-lab gestartet (Argumente: %s)", vars(args))

    try:
        return COMMANDS[args.command](args, logger)
    except (ConfigError, TraceFileError) as error:
        logger.error("Eingabefehler: %s", error)
        print(f"[Fehler] {error}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except NumericalAbortError as error:
        logger.error("Numerischer Abbruch: %s (Kontext: %s)", error, error.context)
        print(f"[Abbruch] {error}", file=sys.stderr)
        return EXIT_NUMERICAL_ABORT


__all__ = [
    "EXIT_INPUT_ERROR",
    "EXIT_NUMERICAL_ABORT",
    "EXIT_OK",
    "EXIT_VERIFY_FAILED",
    "build_denoiser",
    "build_parser",
    "main",
    "parse_args",
    "train_denoiser",
]
