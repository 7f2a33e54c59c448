"""Command-line front end: validation, certification, and theorem runs.

Every invocation emits one JSON report with a deterministic ``body``
(config, seed, tolerance table, library version, results) and a
``sidecar`` holding wall-clock facts, so rerunning with the same config
and seed reproduces the body byte for byte. Files are written atomically;
without ``--out`` the report goes to stdout.

Exit codes: 0 success, 2 validation failure (bad input files, bad
config), 3 solver failure, 4 combinatorial cap exceeded. Verdicts such
as "this collection is compatible" are data, not failures.

The environment variable COMBFORGE_THREADS bounds the per-instance
fan-out of the theorem spot checks; unset means serial.
"""

from __future__ import annotations

import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import click

from . import __version__, io
from .errors import CapExceeded, CombForgeError, SchemaError, SolverFailure
from .combs import QuantumComb
from .games import (
    DEFAULT_VECTOR_CAP,
    exclusion_value,
    exclusion_value_compatible,
    qcd_value_compatible,
    qcd_value_incompatible,
    verify_theorem1,
    verify_theorem2,
)
from .incompatibility import convex_weight, is_compatible_collection, robustness
from .systems import (
    CombSignature,
    frobenius_distance,
    identity,
    kron_compose,
    partial_trace,
)
from .testers import (
    QuantumTester,
    TesterCollection,
    mub_pair,
    random_tester_collection,
)
from .tolerances import SDP_GAP_TOL, VERDICT_TOL

__all__ = ["ExperimentConfig", "run", "main"]

DEFAULT_TOTAL_DIM_CAP = 256

EXCLUSION_NOTE = (
    "exclusion error is the probability of naming the prepared comb: "
    "outcome b counts against comb b, and label beta is scored by member "
    "beta unless an assignment overrides it"
)


@dataclass
class ExperimentConfig:
    """Mirror of one CLI invocation, also usable programmatically.

    ``inputs`` maps input kinds (collection, tester, comb, ensembles) to
    file paths. Identical configs with identical seeds produce identical
    report bodies.
    """

    command: str
    seed: int = 0
    inputs: dict[str, str] = field(default_factory=dict)
    out: str | None = None
    csv: str | None = None
    max_vector_outcomes: int = DEFAULT_VECTOR_CAP
    max_total_dim: int = DEFAULT_TOTAL_DIM_CAP
    tolerance_gap: float | None = None
    random: bool = False
    slots: int = 1
    outcomes: int = 2
    testers: int = 2
    probe_trivial: bool = False
    relaxed_exclusion: bool = False

    def check(self) -> None:
        if self.max_vector_outcomes < 1 or self.max_total_dim < 1:
            raise SchemaError("config: caps must be positive")
        if self.tolerance_gap is not None and not (
            0.0 < self.tolerance_gap < 1e-2
        ):
            raise SchemaError("config: tolerance based gap must lie in (0, 1e-2)")
        if self.seed < 0:
            raise SchemaError("config: seed must be non-negative")
        if self.random and min(self.slots, self.outcomes, self.testers) < 1:
            raise SchemaError(
                "config: random instances need positive slots, outcomes, "
                "and tester count"
            )

    def as_dict(self) -> dict:
        return asdict(self)


def _threads() -> int:
    raw = os.environ.get("COMBFORGE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _solver_options(config: ExperimentConfig) -> dict:
    if config.tolerance_gap is None:
        return {}
    return {"accept_gap": config.tolerance_gap}


def _gap_tolerance(config: ExperimentConfig) -> float:
    return config.tolerance_gap if config.tolerance_gap is not None else SDP_GAP_TOL


def _enforce_total_dim(dims, cap: int) -> None:
    total = int(math.prod(dims))
    if total > cap:
        raise CapExceeded(f"total dimension {total} exceeds the cap {cap}")


# --- loading and generation ----------------------------------------------------


def _require_input(config: ExperimentConfig, kind: str) -> str:
    path = config.inputs.get(kind)
    if path is None:
        raise SchemaError(f"{config.command} needs --{kind}")
    return path


def _load_collection(config: ExperimentConfig) -> TesterCollection:
    path = _require_input(config, "collection")
    return io.collection_from_json(io.read_json(path))


def _load_deck(config: ExperimentConfig):
    path = _require_input(config, "ensembles")
    return io.ensemble_collection_from_json(io.read_json(path))


def _random_collection(config: ExperimentConfig) -> TesterCollection:
    """Haar-random collection on qubit wires.

    ``probe_trivial`` squeezes every even (input) dimension to one, so the
    testers reduce to measurements of their outputs. Memory wires are
    qubits, except the probe wire of a probe-trivial tester, which
    collapses so that single-slot instances are plain random POVMs.
    """
    if config.probe_trivial:
        dims = [1, 2] * config.slots
        memory = [1] + [2] * (config.slots - 1)
    else:
        dims = [2, 2] * config.slots
        memory = [2] * config.slots
    _enforce_total_dim(dims, config.max_total_dim)
    signature = CombSignature.tester(dims)
    return random_tester_collection(
        config.testers, signature, memory, config.outcomes, config.seed
    )


def _obtain_collection(config: ExperimentConfig) -> TesterCollection:
    has_file = "collection" in config.inputs
    if config.random and has_file:
        raise SchemaError("give either --collection or --random, not both")
    if config.random:
        return _random_collection(config)
    if not has_file:
        raise SchemaError(f"{config.command} needs --collection or --random")
    collection = _load_collection(config)
    _enforce_total_dim(collection.signature.dims, config.max_total_dim)
    return collection


def _instance_name(config: ExperimentConfig) -> str:
    if config.random:
        kind = "probe-trivial" if config.probe_trivial else "genuine"
        return (
            f"random-{kind}-s{config.slots}-o{config.outcomes}-"
            f"m{config.testers}-seed{config.seed}"
        )
    for kind in ("collection", "ensembles", "tester", "comb"):
        if kind in config.inputs:
            return os.path.basename(config.inputs[kind])
    return config.command


# --- residual replays ------------------------------------------------------------


def _comb_chain_report(comb: QuantumComb) -> dict[str, float]:
    """Residual of the trace condition at every reduction level of a comb
    that already passed validation."""
    residuals: dict[str, float] = {}
    current = comb.operator
    for k in range(comb.slots, -1, -1):
        d_in = current.signature.dim_of(2 * k)
        reduced = partial_trace(current, [2 * k, 2 * k + 1]) * (1.0 / d_in)
        if k > 0:
            rhs = kron_compose(
                identity(current.signature.restrict([2 * k])), reduced
            )
        else:
            rhs = identity(current.signature.restrict([0]))
        lhs = partial_trace(current, [2 * k + 1])
        residuals[f"level_{k}"] = frobenius_distance(lhs, rhs)
        current = reduced
    return residuals


def _tester_chain_report(tester: QuantumTester) -> dict[str, float]:
    """Residuals along the normalization recursion of a valid tester, plus
    the trace defect of its probe."""
    residuals: dict[str, float] = {}
    current = tester.effect_sum()
    xi = current
    for k in range(tester.slots, 0, -1):
        d_top = current.signature.dim_of(2 * k - 1)
        xi = partial_trace(current, [2 * k - 1]) * (1.0 / d_top)
        rebuilt = kron_compose(
            identity(current.signature.restrict([2 * k - 1])), xi
        )
        residuals[f"level_{k}"] = frobenius_distance(current, rebuilt)
        if k > 1:
            current = partial_trace(xi, [2 * k - 2])
    residuals["probe_trace_error"] = abs(xi.trace() - 1.0)
    return residuals


# --- subcommand bodies ------------------------------------------------------------


def _cmd_validate(config: ExperimentConfig) -> tuple[dict, list]:
    given = [
        k for k in ("tester", "comb", "collection", "ensembles") if k in config.inputs
    ]
    if len(given) != 1:
        raise SchemaError(
            "validate needs exactly one of --tester, --comb, --collection, "
            "--ensembles"
        )
    kind = given[0]
    path = config.inputs[kind]
    doc = io.read_json(path)
    body: dict = {"task": "validate", "object": kind, "input": path, "valid": True}
    if kind == "tester":
        tester = io.tester_from_json(doc)
        body.update(
            slots=tester.slots,
            outcomes=tester.outcomes,
            dims=list(tester.signature.dims),
            chain_residuals=_tester_chain_report(tester),
        )
    elif kind == "comb":
        comb = io.comb_from_json(doc)
        body.update(
            slots=comb.slots,
            dims=list(comb.signature.dims),
            chain_residuals=_comb_chain_report(comb),
        )
    elif kind == "collection":
        collection = io.collection_from_json(doc)
        body.update(
            size=collection.size,
            slots=collection.slots,
            outcomes=collection.outcomes,
            dims=list(collection.signature.dims),
            chain_spread=collection.chain_spread(),
            members=[
                {"chain_residuals": _tester_chain_report(t)}
                for t in collection.members
            ],
        )
    else:
        deck = io.ensemble_collection_from_json(doc)
        body.update(
            labels=len(deck),
            dims=list(deck.signature.dims),
            weights=[float(w) for w in deck.weights],
            ensembles=[
                {
                    "weights": [float(w) for w in e.weights],
                    "chain_residuals": [_comb_chain_report(c) for c in e.combs],
                }
                for e in deck.ensembles
            ],
        )
    return body, []


def _cmd_certify(config: ExperimentConfig, which: str) -> tuple[dict, list]:
    collection = _obtain_collection(config)
    options = _solver_options(config)
    certify = robustness if which == "robustness" else convex_weight
    cert = certify(collection, cap=config.max_vector_outcomes, **options)
    body = {
        "task": which,
        "instance": _instance_name(config),
        "value": float(cert.value),
        "compatible": bool(cert.value <= VERDICT_TOL),
        "gap": float(cert.gap),
        "gap_ok": bool(cert.gap <= _gap_tolerance(config)),
        "certificate": io.certificate_to_json(cert),
    }
    return body, []


def _cmd_compatible(config: ExperimentConfig) -> tuple[dict, list]:
    collection = _obtain_collection(config)
    report = is_compatible_collection(
        collection, cap=config.max_vector_outcomes, **_solver_options(config)
    )
    body = {
        "task": "compatible",
        "instance": _instance_name(config),
        "compatible": report.compatible,
        "margin": float(report.margin),
        "assignments": len(report.assignments),
        "message": report.message,
    }
    return body, []


def _cmd_theorem(config: ExperimentConfig, which: str) -> tuple[dict, list]:
    collection = _obtain_collection(config)
    verify = verify_theorem1 if which == "theorem1" else verify_theorem2
    started = time.perf_counter()
    report = verify(
        collection,
        cap=config.max_vector_outcomes,
        seed=config.seed,
        workers=_threads(),
        **_solver_options(config),
    )
    wall = time.perf_counter() - started
    gap = float(report.details["certificate_gap"])
    body = {
        "task": which,
        "instance": _instance_name(config),
        "quantifier": float(report.quantifier),
        "gap_ok": bool(gap <= _gap_tolerance(config)),
        "report": io.game_report_to_json(report),
    }
    if which == "theorem2":
        body["convention"] = EXCLUSION_NOTE
    row = [
        _instance_name(config),
        float(report.quantifier),
        float(report.ratio),
        float(report.predicted_ratio),
        gap,
        bool(report.witness_valid),
        wall,
    ]
    return body, [row]


def _cmd_game(config: ExperimentConfig) -> tuple[dict, list]:
    deck = _load_deck(config)
    collection = _load_collection(config)
    _enforce_total_dim(collection.signature.dims, config.max_total_dim)
    started = time.perf_counter()
    value = qcd_value_incompatible(deck, collection)
    team = qcd_value_compatible(
        deck, cap=config.max_vector_outcomes, **_solver_options(config)
    )
    wall = time.perf_counter() - started
    ratio = value / team if team > 1e-12 else float("nan")
    body = {
        "task": "game",
        "instance": _instance_name(config),
        "incompatible_value": float(value),
        "compatible_value": float(team),
        "ratio": float(ratio),
    }
    row = [
        _instance_name(config),
        float("nan"),
        float(ratio),
        float("nan"),
        float("nan"),
        "",
        wall,
    ]
    return body, [row]


def _cmd_exclusion(config: ExperimentConfig) -> tuple[dict, list]:
    deck = _load_deck(config)
    collection = _load_collection(config)
    _enforce_total_dim(collection.signature.dims, config.max_total_dim)
    started = time.perf_counter()
    value = exclusion_value(deck, collection, relaxed=config.relaxed_exclusion)
    team = exclusion_value_compatible(
        deck, cap=config.max_vector_outcomes, **_solver_options(config)
    )
    wall = time.perf_counter() - started
    ratio = value / team if team > 1e-12 else float("nan")
    body = {
        "task": "exclusion",
        "instance": _instance_name(config),
        "incompatible_value": float(value),
        "compatible_value": float(team),
        "ratio": float(ratio),
        "relaxed": bool(config.relaxed_exclusion),
        "convention": EXCLUSION_NOTE,
    }
    row = [
        _instance_name(config),
        float("nan"),
        float(ratio),
        float("nan"),
        float("nan"),
        "",
        wall,
    ]
    return body, [row]


def _cmd_demo(config: ExperimentConfig) -> tuple[dict, list]:
    """Both theorems on the sharp unbiased qubit pair, end to end."""
    collection = mub_pair()
    options = _solver_options(config)
    workers = _threads()
    rows = []
    started = time.perf_counter()
    cert_r = robustness(collection, **options)
    discrimination = verify_theorem1(
        collection, cert_r, bound_samples=5, seed=config.seed,
        workers=workers, **options,
    )
    rows.append([
        "mub-pair-discrimination",
        float(cert_r.value),
        float(discrimination.ratio),
        float(discrimination.predicted_ratio),
        float(cert_r.gap),
        bool(discrimination.witness_valid),
        time.perf_counter() - started,
    ])
    started = time.perf_counter()
    cert_w = convex_weight(collection, **options)
    exclusion = verify_theorem2(
        collection, cert_w, bound_samples=5, seed=config.seed,
        workers=workers, **options,
    )
    rows.append([
        "mub-pair-exclusion",
        float(cert_w.value),
        float(exclusion.ratio),
        float(exclusion.predicted_ratio),
        float(cert_w.gap),
        bool(exclusion.witness_valid),
        time.perf_counter() - started,
    ])
    body = {
        "task": "demo",
        "instance": "mub-pair",
        "description": (
            "two sharp qubit testers measuring unbiased bases: maximally "
            "incompatible sharp pair with trivial probes"
        ),
        "robustness": float(cert_r.value),
        "weight": float(cert_w.value),
        "discrimination": io.game_report_to_json(discrimination),
        "exclusion": io.game_report_to_json(exclusion),
        "convention": EXCLUSION_NOTE,
    }
    return body, rows


_COMMANDS = {
    "validate": _cmd_validate,
    "robustness": lambda cfg: _cmd_certify(cfg, "robustness"),
    "weight": lambda cfg: _cmd_certify(cfg, "weight"),
    "compatible": _cmd_compatible,
    "theorem1": lambda cfg: _cmd_theorem(cfg, "theorem1"),
    "theorem2": lambda cfg: _cmd_theorem(cfg, "theorem2"),
    "game": _cmd_game,
    "exclusion": _cmd_exclusion,
    "demo": _cmd_demo,
}


def _error_body(command: str, err: Exception) -> dict:
    body = {
        "task": command,
        "error": str(err),
        "error_class": type(err).__name__,
    }
    diagnostics = getattr(err, "diagnostics", None)
    if diagnostics:
        body["solver_diagnostics"] = diagnostics
    return body


def run(config: ExperimentConfig) -> tuple[int, dict]:
    """Execute one configured command; return (exit code, report document).

    Domain errors never propagate: they are recorded in the body and
    mapped to the exit code (2 validation, 3 solver, 4 cap). Writes the
    report and the CSV when the config carries paths for them.
    """
    started = time.perf_counter()
    rows: list[list] = []
    try:
        config.check()
        if config.command not in _COMMANDS:
            raise SchemaError(f"unknown command '{config.command}'")
        body, rows = _COMMANDS[config.command](config)
        code = 0
    except CapExceeded as err:
        body, code = _error_body(config.command, err), 4
    except SolverFailure as err:
        body, code = _error_body(config.command, err), 3
    except (CombForgeError, OSError) as err:
        body, code = _error_body(config.command, err), 2
    sidecar = {
        "wall_time_s": time.perf_counter() - started,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    document = io.report_document(body, config.as_dict(), config.seed, sidecar)
    if config.out is not None:
        io.write_json(config.out, document)
    if config.csv is not None:
        io.write_csv(config.csv, rows, io.GAME_CSV_HEADER)
    return code, document


# --- click wiring -----------------------------------------------------------------


def _finish(config: ExperimentConfig) -> None:
    code, document = run(config)
    if config.out is None:
        click.echo(io.json_text(document), nl=False)
    sys.exit(code)


def _output_options(fn):
    fn = click.option(
        "--csv", type=click.Path(dir_okay=False), default=None,
        help="Append-free CSV summary (one row per instance).",
    )(fn)
    fn = click.option(
        "--out", type=click.Path(dir_okay=False), default=None,
        help="Write the JSON report here instead of stdout.",
    )(fn)
    return fn


def _seed_option(fn):
    return click.option(
        "--seed", type=int, default=0, show_default=True,
        help="Seed for every random draw in this run.",
    )(fn)


def _solver_flags(fn):
    fn = click.option(
        "--tolerance-gap", type=float, default=None,
        help="Accept solver gaps up to this value (default 1e-6).",
    )(fn)
    fn = click.option(
        "--cap-outcomes", type=int, default=DEFAULT_VECTOR_CAP,
        show_default=True,
        help="Cap on enumerated outcome/assignment vectors.",
    )(fn)
    return fn


def _random_flags(fn):
    fn = click.option(
        "--probe-trivial", is_flag=True,
        help="Force all even (input) dimensions to one.",
    )(fn)
    fn = click.option(
        "--testers", type=int, default=2, show_default=True,
        help="Number of testers in a random collection.",
    )(fn)
    fn = click.option(
        "--outcomes", type=int, default=2, show_default=True,
        help="Outcomes per tester in a random collection.",
    )(fn)
    fn = click.option(
        "--slots", type=int, default=1, show_default=True,
        help="Slots per tester in a random collection.",
    )(fn)
    fn = click.option(
        "--random", is_flag=True,
        help="Generate the collection from the seed instead of a file.",
    )(fn)
    fn = click.option(
        "--collection", type=click.Path(dir_okay=False), default=None,
        help="Tester collection JSON.",
    )(fn)
    return fn


def _collection_config(command: str, **kw) -> ExperimentConfig:
    inputs = {}
    if kw.get("collection"):
        inputs["collection"] = kw["collection"]
    return ExperimentConfig(
        command=command,
        seed=kw["seed"],
        inputs=inputs,
        out=kw["out"],
        csv=kw["csv"],
        max_vector_outcomes=kw["cap_outcomes"],
        tolerance_gap=kw["tolerance_gap"],
        random=kw["random"],
        slots=kw["slots"],
        outcomes=kw["outcomes"],
        testers=kw["testers"],
        probe_trivial=kw["probe_trivial"],
    )


@click.group()
@click.version_option(__version__, prog_name="combforge")
def main():
    """Quantum combs, testers, and certificates of incompatibility."""


@main.command()
@click.option("--tester", type=click.Path(dir_okay=False), default=None,
              help="Tester JSON to validate.")
@click.option("--comb", type=click.Path(dir_okay=False), default=None,
              help="Comb JSON to validate.")
@click.option("--collection", type=click.Path(dir_okay=False), default=None,
              help="Tester collection JSON to validate.")
@click.option("--ensembles", type=click.Path(dir_okay=False), default=None,
              help="Ensemble collection JSON to validate.")
@_output_options
def validate(tester, comb, collection, ensembles, out, csv):
    """Check one object against its structural constraints.

    Reports the residual of every chain condition; invalid objects exit
    with code 2 and the error class that rejected them.
    """
    inputs = {
        k: v
        for k, v in [
            ("tester", tester), ("comb", comb),
            ("collection", collection), ("ensembles", ensembles),
        ]
        if v
    }
    _finish(ExperimentConfig("validate", inputs=inputs, out=out, csv=csv))


def _certification_command(name: str, doc: str):
    @main.command(name=name, help=doc)
    @_random_flags
    @_solver_flags
    @_seed_option
    @_output_options
    def _command(**kw):
        _finish(_collection_config(name, **kw))

    return _command


_certification_command(
    "robustness",
    "Minimal relative noise that makes the collection compatible; "
    "reports the value, the dual certificate, and the verdict.",
)
_certification_command(
    "weight",
    "Minimal resourceful fraction in any convex split of the collection; "
    "reports the value, the witness, and the verdict.",
)
_certification_command(
    "compatible",
    "Decide whether one parent tester reproduces the whole collection.",
)
_certification_command(
    "theorem1",
    "Certify robustness, build the witness deck from the dual, and check "
    "that the discrimination advantage equals 1 + R on it (and never "
    "exceeds that on random decks).",
)
_certification_command(
    "theorem2",
    "Certify the convex weight, build the witness deck, and check that "
    "the exclusion advantage equals 1 - W on it (and never drops below "
    "that on random decks).",
)


@main.command()
@click.option("--ensembles", type=click.Path(dir_okay=False), required=True,
              help="Deck: ensemble collection JSON.")
@click.option("--collection", type=click.Path(dir_okay=False), required=True,
              help="Tester collection JSON.")
@_solver_flags
@_seed_option
@_output_options
def game(ensembles, collection, cap_outcomes, tolerance_gap, seed, out, csv):
    """Discrimination game values of a deck: the collection's payoff
    against the best compatible team."""
    _finish(ExperimentConfig(
        "game",
        seed=seed,
        inputs={"ensembles": ensembles, "collection": collection},
        out=out,
        csv=csv,
        max_vector_outcomes=cap_outcomes,
        tolerance_gap=tolerance_gap,
    ))


@main.command()
@click.option("--ensembles", type=click.Path(dir_okay=False), required=True,
              help="Deck: ensemble collection JSON.")
@click.option("--collection", type=click.Path(dir_okay=False), required=True,
              help="Tester collection JSON.")
@click.option("--relaxed-exclusion", is_flag=True,
              help="Let the player pick the cheapest member per label "
                   "(nonstandard game).")
@_solver_flags
@_seed_option
@_output_options
def exclusion(ensembles, collection, relaxed_exclusion, cap_outcomes,
              tolerance_gap, seed, out, csv):
    """Exclusion game values of a deck: the collection's error against
    the compatible floor."""
    _finish(ExperimentConfig(
        "exclusion",
        seed=seed,
        inputs={"ensembles": ensembles, "collection": collection},
        out=out,
        csv=csv,
        max_vector_outcomes=cap_outcomes,
        tolerance_gap=tolerance_gap,
        relaxed_exclusion=relaxed_exclusion,
    ))


@main.command()
@_seed_option
@_output_options
def demo(seed, out, csv):
    """Run both theorems end to end on the unbiased qubit pair."""
    config = ExperimentConfig("demo", seed=seed, out=out, csv=csv)
    code, document = run(config)
    body = document["body"]
    if code == 0:
        click.echo(
            f"robustness R = {body['robustness']:.9f}, "
            f"discrimination ratio = {body['discrimination']['ratio']:.9f}",
            err=True,
        )
        click.echo(
            f"weight W = {body['weight']:.9f}, "
            f"exclusion ratio = {body['exclusion']['ratio']:.9f}",
            err=True,
        )
    if out is None:
        click.echo(io.json_text(document), nl=False)
    sys.exit(code)
