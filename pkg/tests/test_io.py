"""JSON and CSV interchange: roundtrips, float discipline, schema errors,
atomic and deterministic writes."""

from __future__ import annotations

import json
import math
import os

import numpy as np
import pytest

from combforge import io
from combforge.combs import random_comb, validate_comb
from combforge.errors import CausalityViolation, SchemaError
from combforge.games import random_comb_deck, verify_theorem1
from combforge.incompatibility import convex_weight, robustness
from combforge.systems import CombSignature, HermitianOperator
from combforge.testers import TesterCollection as Collection
from combforge.testers import mub_pair, random_tester_collection


def qubit_comb(seed: int = 3):
    # systems (0, 1): a channel Choi, the zero-slot comb
    return random_comb(CombSignature.comb([2, 2]), [], seed)


# -- float discipline -----------------------------------------------------


def test_round_floats_significant_digits():
    x = 0.123456789012345
    assert io.round_floats(x) == float(f"{x:.12g}")
    assert io.round_floats(1.0) == 1.0
    assert io.round_floats(1e-300) == 1e-300


def test_round_floats_non_finite_becomes_null():
    assert io.round_floats(float("nan")) is None
    assert io.round_floats(float("inf")) is None
    assert io.round_floats(-float("inf")) is None


def test_round_floats_numpy_and_nesting():
    doc = {
        "a": np.float64(1 / 3),
        "b": np.array([1.0, 2.0]),
        "c": [np.int64(4), (5, np.True_)],
        "d": complex(1 / 7, -2 / 7),
    }
    out = io.round_floats(doc)
    assert out["a"] == float(f"{1 / 3:.12g}")
    assert out["b"] == [1.0, 2.0]
    assert out["c"] == [4, [5, True]]
    assert out["d"] == [float(f"{1 / 7:.12g}"), float(f"{-2 / 7:.12g}")]
    assert isinstance(out["c"][1][1], bool)


# -- operator and network roundtrips ----------------------------------------


def test_comb_roundtrip_preserves_matrix():
    comb = qubit_comb()
    doc = io.comb_to_json(comb)
    assert doc["slots"] == 0
    assert [s["dim"] for s in doc["systems"]] == [2, 2]
    back = io.comb_from_json(doc)
    assert np.allclose(back.operator.matrix, comb.operator.matrix)
    assert back.slots == comb.slots


def test_comb_roundtrip_through_file(tmp_path):
    comb = qubit_comb(9)
    path = tmp_path / "comb.json"
    io.write_json(str(path), io.comb_to_json(comb))
    back = io.comb_from_json(io.read_json(str(path)))
    # writing rounds to 12 significant digits
    assert np.allclose(back.operator.matrix, comb.operator.matrix, atol=1e-10)


def test_tester_and_collection_roundtrip():
    pair = mub_pair()
    doc = io.collection_to_json(pair)
    back = io.collection_from_json(doc)
    assert back.size == 2
    for t_in, t_out in zip(pair.members, back.members):
        for a, b in zip(t_in.effects, t_out.effects):
            assert np.allclose(a.matrix, b.matrix)


def test_ensemble_collection_roundtrip():
    deck = random_comb_deck((1, 2), [2, 3], seed=4)
    back = io.ensemble_collection_from_json(io.ensemble_collection_to_json(deck))
    assert np.allclose(back.weights, deck.weights)
    for e_in, e_out in zip(deck.ensembles, back.ensembles):
        assert np.allclose(e_in.weights, e_out.weights)
        for a, b in zip(e_in.combs, e_out.combs):
            assert np.allclose(a.operator.matrix, b.operator.matrix)


def test_complex_entries_survive_roundtrip():
    sig = CombSignature.comb([2, 2])
    rng = np.random.default_rng(0)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    herm = 0.5 * (g + g.conj().T)
    doc = io.operator_to_json(HermitianOperator(sig, herm))
    back = io.operator_from_json(doc, "comb")
    assert np.allclose(back.matrix, herm)
    assert any(pair[1] != 0.0 for pair in doc["matrix"])


# -- schema rejection --------------------------------------------------------


def test_missing_key_raises_schema_error():
    systems = [{"index": 0, "dim": 2}, {"index": 1, "dim": 2}]
    with pytest.raises(SchemaError, match="missing key 'matrix'"):
        io.operator_from_json({"systems": systems}, "comb")
    with pytest.raises(SchemaError, match="missing key 'systems'"):
        io.operator_from_json({"matrix": []}, "comb")


def test_non_consecutive_indices_rejected():
    doc = io.comb_to_json(qubit_comb())
    doc["systems"][1]["index"] = 5
    with pytest.raises(SchemaError, match="consecutive"):
        io.comb_from_json(doc)


def test_wrong_matrix_length_rejected():
    doc = io.comb_to_json(qubit_comb())
    doc["matrix"] = doc["matrix"][:-1]
    with pytest.raises(SchemaError, match="pairs"):
        io.comb_from_json(doc)


def test_malformed_entry_rejected():
    doc = io.comb_to_json(qubit_comb())
    doc["matrix"][3] = [1.0]
    with pytest.raises(SchemaError, match="entry 3"):
        io.comb_from_json(doc)


def test_invalid_comb_rejected_with_physical_error():
    doc = io.comb_to_json(qubit_comb())
    # breaking the trace condition is not a schema problem
    doc["matrix"][0] = [doc["matrix"][0][0] + 0.3, 0.0]
    with pytest.raises(CausalityViolation):
        io.comb_from_json(doc)


def test_read_json_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError, match="not valid JSON"):
        io.read_json(str(path))
    path.write_text("[1, 2]")
    with pytest.raises(SchemaError, match="top level"):
        io.read_json(str(path))


# -- certificates and reports -------------------------------------------------


def test_certificate_serialization_keys():
    pair = mub_pair()
    cert_r = robustness(pair)
    doc = io.certificate_to_json(cert_r)
    assert doc["kind"] == "robustness"
    assert doc["scale"] == pytest.approx(1.0 + cert_r.value)
    assert set(doc["dual_blocks"]) == {"0,0", "0,1", "1,0", "1,1"}
    assert doc["dims"] == [1, 2]
    cert_w = convex_weight(pair)
    doc_w = io.certificate_to_json(cert_w)
    assert doc_w["kind"] == "weight"
    assert doc_w["gamma"] == pytest.approx(1.0 - cert_w.value)
    assert len(doc_w["chain"]) == len(cert_w.chain)


def test_game_report_serialization():
    report = verify_theorem1(mub_pair(), bound_samples=0)
    doc = io.game_report_to_json(report)
    assert doc["game"] == "discrimination"
    assert doc["ratio"] == pytest.approx(report.ratio)
    assert doc["witness_valid"] is True
    assert doc["ensemble"]["weights"] == pytest.approx(list(report.ensemble.weights))
    roundtrip = io.ensemble_collection_from_json(doc["ensemble"])
    assert len(roundtrip) == len(report.ensemble)


def test_report_document_envelope():
    doc = io.report_document(
        {"answer": 42.0}, {"command": "noop"}, 7, {"wall_time_s": 0.1}
    )
    body = doc["body"]
    assert body["config"] == {"command": "noop"}
    assert body["seed"] == 7
    assert body["answer"] == 42.0
    assert body["tolerances"]["chain_tol"] == 1e-7
    assert body["version"]
    assert doc["sidecar"] == {"wall_time_s": 0.1}


# -- files ---------------------------------------------------------------------


def test_write_json_is_deterministic_and_sorted(tmp_path):
    doc = {"b": 1 / 3, "a": [float("nan"), 2.0]}
    p1, p2 = tmp_path / "one.json", tmp_path / "two.json"
    io.write_json(str(p1), doc)
    io.write_json(str(p2), doc)
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")
    parsed = json.loads(text)
    assert parsed["a"][0] is None
    assert parsed["b"] == float(f"{1 / 3:.12g}")


def test_write_json_leaves_no_temp_files(tmp_path):
    path = tmp_path / "report.json"
    io.write_json(str(path), {"x": 1.0})
    io.write_json(str(path), {"x": 2.0})  # overwrite through rename
    assert sorted(os.listdir(tmp_path)) == ["report.json"]
    assert json.loads(path.read_text())["x"] == 2.0


def test_write_json_rejects_unserializable(tmp_path):
    path = tmp_path / "report.json"
    with pytest.raises(TypeError):
        io.write_json(str(path), {"x": object()})
    assert not path.exists()
    assert os.listdir(tmp_path) == []


def test_csv_formatting(tmp_path):
    path = tmp_path / "rows.csv"
    rows = [
        ["alpha", 0.123456789012345, 1.0, float("nan"), 1e-9, True, 0.25],
        ["beta", float("inf"), 2.0, 3.0, 1e-8, False, 0.5],
    ]
    io.write_csv(str(path), rows, io.GAME_CSV_HEADER)
    lines = path.read_text().splitlines()
    assert lines[0] == "instance,quantifier,ratio,predicted,gap,witness_valid,wall_time_s"
    assert lines[1] == "alpha,0.123456789012,1,,1e-09,true,0.25"
    assert lines[2] == "beta,,2,3,1e-08,false,0.5"


def test_json_text_matches_file_output(tmp_path):
    doc = {"value": math.pi}
    path = tmp_path / "doc.json"
    io.write_json(str(path), doc)
    assert path.read_text() == io.json_text(doc)
