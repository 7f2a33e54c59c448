"""JSON and CSV interchange for operators, networks, and reports.

One schema carries every operator: ``{"systems": [{"index": 0, "dim": 2},
...], "matrix": [[re, im], ...]}`` with the matrix flattened row-major,
one [real, imaginary] pair per entry. Combs add ``"slots"``, testers wrap
effect lists, ensembles and collections wrap those again. Floats are
rounded to 12 significant digits on write, keys are sorted, and files are
written atomically (temp file then rename), so identical data produces
byte-identical files. Non-finite floats serialize as null.

Reports split into a deterministic ``body`` and a ``sidecar`` holding the
wall-clock fields, so reproducibility checks can compare bodies alone.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
import os
import tempfile
from typing import Any

import numpy as np

from . import __version__
from .combs import CombEnsemble, EnsembleCollection, QuantumComb, validate_comb
from .errors import SchemaError
from .games import GameReport
from .incompatibility import RobustnessCertificate, WeightCertificate
from .systems import CombSignature, HermitianOperator
from .testers import QuantumTester, TesterCollection, validate_tester
from .tolerances import tolerance_table

__all__ = [
    "SIGNIFICANT_DIGITS",
    "operator_to_json",
    "operator_from_json",
    "comb_to_json",
    "comb_from_json",
    "ensemble_to_json",
    "ensemble_from_json",
    "ensemble_collection_to_json",
    "ensemble_collection_from_json",
    "tester_to_json",
    "tester_from_json",
    "collection_to_json",
    "collection_from_json",
    "certificate_to_json",
    "game_report_to_json",
    "report_document",
    "round_floats",
    "json_text",
    "write_json",
    "read_json",
    "write_csv",
    "GAME_CSV_HEADER",
]

SIGNIFICANT_DIGITS = 12


# --- float discipline ---------------------------------------------------------


def round_floats(obj: Any) -> Any:
    """Round every float to 12 significant digits, recursively.

    Numpy scalars and arrays become plain lists and floats; non-finite
    values become None so documents stay valid strict JSON.
    """
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not math.isfinite(f):
            return None
        return float(f"{f:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(obj, complex):
        return [round_floats(obj.real), round_floats(obj.imag)]
    if isinstance(obj, np.ndarray):
        return round_floats(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def _expect(doc: Any, key: str, kind: type, where: str) -> Any:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object, got {type(doc).__name__}")
    if key not in doc:
        raise SchemaError(f"{where}: missing key '{key}'")
    value = doc[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaError(f"{where}: '{key}' must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise SchemaError(
            f"{where}: '{key}' must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


# --- operators -----------------------------------------------------------------


def _encode_matrix(matrix: np.ndarray) -> list[list[float]]:
    flat = np.asarray(matrix, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def _decode_matrix(entries: list, side: int, where: str) -> np.ndarray:
    if not isinstance(entries, list) or len(entries) != side * side:
        raise SchemaError(
            f"{where}: matrix must hold {side * side} [re, im] pairs, got "
            f"{len(entries) if isinstance(entries, list) else type(entries).__name__}"
        )
    out = np.empty(side * side, dtype=complex)
    for i, pair in enumerate(entries):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or not all(isinstance(x, (int, float)) for x in pair)
        ):
            raise SchemaError(f"{where}: matrix entry {i} is not an [re, im] pair")
        out[i] = complex(pair[0], pair[1])
    return out.reshape(side, side)


def operator_to_json(op: HermitianOperator) -> dict:
    return {
        "systems": [
            {"index": int(i), "dim": int(d)} for i, d in op.signature.systems
        ],
        "matrix": _encode_matrix(op.matrix),
    }


def operator_from_json(doc: dict, role: str, where: str = "operator") -> HermitianOperator:
    systems = _expect(doc, "systems", list, where)
    dims = []
    for pos, entry in enumerate(systems):
        idx = int(_expect(entry, "index", float, f"{where}.systems[{pos}]"))
        dim = int(_expect(entry, "dim", float, f"{where}.systems[{pos}]"))
        if idx != pos:
            raise SchemaError(
                f"{where}: system indices must be consecutive from 0, "
                f"got {idx} at position {pos}"
            )
        if dim < 1:
            raise SchemaError(f"{where}: system {pos} has dimension {dim}")
        dims.append(dim)
    if role == "comb":
        sig = CombSignature.comb(dims)
    elif role == "tester":
        sig = CombSignature.tester(dims)
    else:
        raise SchemaError(f"{where}: unknown role '{role}'")
    side = sig.total_dim
    matrix = _decode_matrix(_expect(doc, "matrix", list, where), side, where)
    return HermitianOperator(sig, matrix)


# --- combs and ensembles --------------------------------------------------------


def comb_to_json(comb: QuantumComb) -> dict:
    doc = operator_to_json(comb.operator)
    doc["slots"] = int(comb.slots)
    return doc


def comb_from_json(doc: dict, where: str = "comb") -> QuantumComb:
    slots = int(_expect(doc, "slots", float, where))
    op = operator_from_json(doc, "comb", where)
    return validate_comb(op, slots)


def ensemble_to_json(ensemble: CombEnsemble) -> dict:
    return {
        "weights": [float(w) for w in ensemble.weights],
        "combs": [comb_to_json(c) for c in ensemble.combs],
    }


def ensemble_from_json(doc: dict, where: str = "ensemble") -> CombEnsemble:
    weights = _expect(doc, "weights", list, where)
    combs = _expect(doc, "combs", list, where)
    return CombEnsemble(
        [float(w) for w in weights],
        [comb_from_json(c, f"{where}.combs[{i}]") for i, c in enumerate(combs)],
    )


def ensemble_collection_to_json(collection: EnsembleCollection) -> dict:
    return {
        "weights": [float(w) for w in collection.weights],
        "ensembles": [ensemble_to_json(e) for e in collection.ensembles],
    }


def ensemble_collection_from_json(
    doc: dict, where: str = "ensemble collection"
) -> EnsembleCollection:
    weights = _expect(doc, "weights", list, where)
    ensembles = _expect(doc, "ensembles", list, where)
    return EnsembleCollection(
        [float(w) for w in weights],
        [
            ensemble_from_json(e, f"{where}.ensembles[{i}]")
            for i, e in enumerate(ensembles)
        ],
    )


# --- testers and collections -----------------------------------------------------


def tester_to_json(tester: QuantumTester) -> dict:
    return {
        "slots": int(tester.slots),
        "effects": [operator_to_json(e) for e in tester.effects],
    }


def tester_from_json(doc: dict, where: str = "tester") -> QuantumTester:
    slots = int(_expect(doc, "slots", float, where))
    effects = _expect(doc, "effects", list, where)
    if not effects:
        raise SchemaError(f"{where}: 'effects' is empty")
    ops = [
        operator_from_json(e, "tester", f"{where}.effects[{i}]")
        for i, e in enumerate(effects)
    ]
    return validate_tester(ops, slots)


def collection_to_json(collection: TesterCollection) -> dict:
    return {"testers": [tester_to_json(t) for t in collection.members]}


def collection_from_json(doc: dict, where: str = "collection") -> TesterCollection:
    testers = _expect(doc, "testers", list, where)
    if not testers:
        raise SchemaError(f"{where}: 'testers' is empty")
    return TesterCollection(
        [tester_from_json(t, f"{where}.testers[{i}]") for i, t in enumerate(testers)]
    )


# --- certificates and reports -----------------------------------------------------


def certificate_to_json(cert: RobustnessCertificate | WeightCertificate) -> dict:
    """Serialize either certificate: values, gap, and block operators by name."""
    if isinstance(cert, RobustnessCertificate):
        kind = "robustness"
        extra = {"scale": float(cert.scale)}
        duals = cert.dual_effects
        blocks = cert.parent_effects
    elif isinstance(cert, WeightCertificate):
        kind = "weight"
        extra = {"gamma": float(cert.gamma)}
        duals = cert.witness
        blocks = cert.free_effects
    else:
        raise SchemaError(f"cannot serialize {type(cert).__name__} as a certificate")
    doc = {
        "kind": kind,
        "value": float(cert.value),
        "dims": [int(d) for d in cert.dims],
        "gap": float(cert.gap),
        "dual_value": float(cert.dual_value),
        "assignments": [list(map(int, vec)) for vec in cert.assignments],
        "parent_blocks": {f"q{i}": _encode_matrix(b) for i, b in enumerate(blocks)},
        "chain": [_encode_matrix(c) for c in cert.chain],
        "dual_blocks": {
            f"{alpha},{a}": _encode_matrix(y) for (alpha, a), y in duals.items()
        },
    }
    doc.update(extra)
    return doc


def game_report_to_json(report: GameReport) -> dict:
    return {
        "game": report.game,
        "incompatible_value": float(report.incompatible_value),
        "compatible_value": float(report.compatible_value),
        "ratio": float(report.ratio),
        "predicted_ratio": float(report.predicted_ratio),
        "deviation": float(report.deviation),
        "ok": bool(report.ok),
        "witness_valid": bool(report.witness_valid),
        "quantifier": float(report.quantifier),
        "diagnostics": report.diagnostics,
        "details": report.details,
        "ensemble": ensemble_collection_to_json(report.ensemble),
    }


def report_document(body: dict, config: dict, seed: int | None, sidecar: dict) -> dict:
    """Assemble the standard report envelope.

    The body embeds the configuration, seed, tolerance table, and library
    version, and is fully deterministic; wall-clock facts live in the
    sidecar only.
    """
    return {
        "body": {
            "config": config,
            "seed": seed,
            "tolerances": tolerance_table(),
            "version": __version__,
            **body,
        },
        "sidecar": sidecar,
    }


# --- files -----------------------------------------------------------------------


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_text(doc: dict) -> str:
    """The canonical serialization: rounded floats, sorted keys, newline at
    the end. Identical documents give identical bytes."""
    text = json.dumps(round_floats(doc), indent=2, sort_keys=True, allow_nan=False)
    return text + "\n"


def write_json(path: str, doc: dict) -> None:
    _atomic_write(path, json_text(doc))


def read_json(path: str) -> dict:
    with open(path) as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise SchemaError(f"{path}: not valid JSON ({err})") from err
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return doc


GAME_CSV_HEADER = [
    "instance",
    "quantifier",
    "ratio",
    "predicted",
    "gap",
    "witness_valid",
    "wall_time_s",
]


def write_csv(path: str, rows: list[list], header: list[str]) -> None:
    """CSV with 12-significant-digit numbers and '.' decimals regardless
    of locale (values are formatted, never locale-printed)."""
    buffer = _stdio.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        formatted = []
        for cell in row:
            if isinstance(cell, (bool, np.bool_)):
                formatted.append("true" if cell else "false")
            elif isinstance(cell, (float, np.floating)):
                formatted.append(
                    f"{float(cell):.{SIGNIFICANT_DIGITS}g}"
                    if math.isfinite(float(cell))
                    else ""
                )
            else:
                formatted.append(cell)
        writer.writerow(formatted)
    _atomic_write(path, buffer.getvalue())
