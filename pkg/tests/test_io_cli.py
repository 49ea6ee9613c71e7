import json
import os

import numpy as np
import pytest

from qdisentangle import io
from qdisentangle.cli import main
from qdisentangle.env import obs_encode_batch
from qdisentangle.nets import policy_probs
from qdisentangle.ppo import Trainer, default_configs
from qdisentangle.state import avg_entanglement, basis_state, ghz, haar_random
from qdisentangle.synthesis import universal_4q

TINY = dict(B=4, T_seg=4, N_iters=6, n_layers=1, n_heads=2, d_qkv=8, d_mlp=16, h_hid=8)


def _trainer(L=3, seed=0):
    return Trainer(*default_configs(L, seed=seed, **TINY))


def _write(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f)
    return str(path)


# --- states and circuits ------------------------------------------------------------

def test_state_roundtrip(tmp_path, rng):
    psi = haar_random(5, rng)
    io.save_state(tmp_path / "s.json", psi)
    assert np.array_equal(io.load_state(tmp_path / "s.json"), psi)
    d = json.load(open(tmp_path / "s.json"))
    assert d["n_qubits"] == 5 and len(d["amplitudes"]) == 32


def test_state_big_endian_layout(tmp_path):
    io.save_state(tmp_path / "s.json", basis_state("01"))
    amps = json.load(open(tmp_path / "s.json"))["amplitudes"]
    assert amps[1] == [1.0, 0.0]  # |01> has qubit 0 as the most significant bit


def test_load_states_list(tmp_path, rng):
    psis = [haar_random(3, rng) for _ in range(3)]
    path = _write(tmp_path / "many.json", [io.state_to_dict(p) for p in psis])
    assert np.array_equal(io.load_states(path), np.asarray(psis))


@pytest.mark.parametrize("doc,field", [
    ({"amplitudes": [[1, 0]]}, "n_qubits"),
    ({"n_qubits": 2, "amplitudes": [[1, 0]] * 3}, "amplitudes"),
    ({"n_qubits": 1, "amplitudes": [[1, 0], [1, 0]]}, "amplitudes"),
    ({"n_qubits": 1, "amplitudes": ["a", "b"]}, "amplitudes"),
])
def test_state_format_errors(tmp_path, doc, field):
    path = _write(tmp_path / "bad.json", doc)
    with pytest.raises(io.FormatError) as e:
        io.load_state(path)
    assert e.value.field == field and str(path) in str(e.value)


def test_invalid_json(tmp_path):
    (tmp_path / "x.json").write_text("{nope")
    with pytest.raises(io.FormatError):
        io.load_state(tmp_path / "x.json")


def test_circuit_roundtrip(tmp_path, rng):
    psi = haar_random(4, rng)
    circ = universal_4q(psi)
    io.save_circuit(tmp_path / "c.json", circ)
    back = io.load_circuit(tmp_path / "c.json")
    assert len(back) == len(circ) and back.permutation == circ.permutation
    for a, b in zip(circ.gates, back.gates):
        assert a.orientation == b.orientation and a.kind == b.kind
        assert np.array_equal(a.matrix, b.matrix)
    assert np.allclose(back.run(psi), circ.run(psi), atol=0)


def test_circuit_format_errors(tmp_path, rng):
    d = io.circuit_to_dict(universal_4q(haar_random(4, rng)))
    d["gates"][1]["kind"] = "mystery"
    with pytest.raises(io.FormatError, match=r"gates\[1\]\.kind"):
        io.circuit_from_dict(d, "c.json")
    d = io.circuit_to_dict(universal_4q(haar_random(4, rng)))
    del d["gates"][0]["matrix"]
    with pytest.raises(io.FormatError, match=r"gates\[0\]\.matrix"):
        io.circuit_from_dict(d, "c.json")


# --- checkpoints --------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    tr = _trainer(4)
    tr.train(2)
    io.save_checkpoint(tmp_path / "ck.json", tr)
    back = io.load_checkpoint(tmp_path / "ck.json")
    assert back.iteration == 2
    obs = obs_encode_batch(np.stack([haar_random(4, rng) for _ in range(100)]))
    assert policy_probs(tr.policy, obs).tobytes() == policy_probs(back.policy, obs).tobytes()
    header = json.load(open(tmp_path / "ck.json"))
    assert header["version"] == io.CHECKPOINT_VERSION
    weights = [e for e in header["arrays"]
               if e["name"].startswith(("policy.", "value.")) or "exp_avg" in e["name"]]
    assert weights and all(e["dtype"] == "<f8" for e in weights)
    assert {e["name"] for e in weights} >= {"policy." + n for n, _ in tr.policy.named_parameters()}


def test_checkpoint_truncated_and_bad_version(tmp_path):
    io.save_checkpoint(tmp_path / "ck.json", _trainer())
    blob = tmp_path / "ck.json.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(io.CheckpointError, match="truncated"):
        io.read_checkpoint(tmp_path / "ck.json")
    io.save_checkpoint(tmp_path / "v.json", _trainer())
    h = json.load(open(tmp_path / "v.json"))
    h["version"] = 99
    _write(tmp_path / "v.json", h)
    with pytest.raises(io.CheckpointError, match="version"):
        io.read_checkpoint(tmp_path / "v.json")


# --- CLI -------------------------------------------------------------------------------

def test_cli_universal(tmp_path, rng, capsys):
    state = tmp_path / "s.json"
    io.save_state(state, haar_random(4, rng))
    assert main(["universal", "--n", "4", "--state", str(state), "--circuit", str(tmp_path / "c.json")]) == 0
    circ = io.load_circuit(tmp_path / "c.json")
    assert len(circ) == 5
    assert avg_entanglement(circ.run(io.load_state(state))) < 1e-8
    assert main(["universal", "--n", "4", "--cnot-form", "--state", str(state),
                 "--circuit", str(tmp_path / "c2.json")]) == 0
    assert "cnot budget 10" in capsys.readouterr().out


def test_cli_universal_wrong_size_is_domain_error(tmp_path, rng):
    io.save_state(tmp_path / "s.json", haar_random(3, rng))
    assert main(["universal", "--n", "4", "--state", str(tmp_path / "s.json"),
                 "--circuit", str(tmp_path / "c.json")]) == 1


def test_cli_io_errors_exit_2(tmp_path):
    assert main(["universal", "--n", "3", "--state", str(tmp_path / "missing.json"),
                 "--circuit", str(tmp_path / "c.json")]) == 2
    bad = _write(tmp_path / "bad.json", {"n_qubits": 3, "amplitudes": [[1, 0]] * 8})
    assert main(["universal", "--n", "3", "--state", bad, "--circuit", str(tmp_path / "c.json")]) == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def _train_cli(out, iters, extra=()):
    cfg = _write(out + ".cfg.json", dict(L=3, seed=1, **TINY))
    return main(["train", "--config", cfg, "--out", out, "--iters", str(iters), "--no-timestamp", *extra])


def test_cli_train_eval_disentangle(tmp_path, rng):
    out = str(tmp_path / "run")
    assert _train_cli(out, 2) == 0
    ck = os.path.join(out, "checkpoint.json")
    prod = tmp_path / "prod.json"
    io.save_state(prod, basis_state("000"))
    assert main(["disentangle", "--ckpt", ck, "--state", str(prod), "--circuit", str(tmp_path / "c.json")]) == 0
    assert len(io.load_circuit(tmp_path / "c.json")) == 0
    states = _write(tmp_path / "many.json", [io.state_to_dict(haar_random(3, rng)) for _ in range(4)])
    assert main(["eval", "--ckpt", ck, "--states", states, "--csv", str(tmp_path / "e.csv")]) == 0
    assert len(open(tmp_path / "e.csv").read().splitlines()) == 5
    g = tmp_path / "ghz.json"
    io.save_state(g, ghz(3))
    assert main(["disentangle", "--ckpt", ck, "--state", str(g), "--circuit", str(tmp_path / "n.json"),
                 "--shots", "100", "--lambda", "0.01", "--max-steps", "3"]) == 0
    assert main(["attn-dump", "--ckpt", ck, "--state", str(g), "--out", str(tmp_path / "a.json")]) == 0
    assert np.asarray(json.load(open(tmp_path / "a.json"))["attention"]).shape == (1, 2, 3, 3)
    # state size mismatch with the policy
    io.save_state(tmp_path / "four.json", ghz(4))
    assert main(["eval", "--ckpt", ck, "--states", str(tmp_path / "four.json"),
                 "--csv", str(tmp_path / "x.csv")]) == 1


def test_cli_truncated_checkpoint_exit_2(tmp_path):
    out = str(tmp_path / "run")
    assert _train_cli(out, 1) == 0
    blob = tmp_path / "run" / "checkpoint.json.bin"
    blob.write_bytes(blob.read_bytes()[:100])
    io.save_state(tmp_path / "s.json", ghz(3))
    assert main(["disentangle", "--ckpt", os.path.join(out, "checkpoint.json"),
                 "--state", str(tmp_path / "s.json"), "--circuit", str(tmp_path / "c.json")]) == 2


def test_cli_train_deterministic_and_resumable(tmp_path):
    a, b, c = (str(tmp_path / n) for n in ("a", "b", "c"))
    assert _train_cli(a, 6) == 0
    assert _train_cli(b, 6) == 0
    assert open(os.path.join(a, "metrics.csv")).read() == open(os.path.join(b, "metrics.csv")).read()
    assert _train_cli(c, 3) == 0
    assert main(["train", "--resume", os.path.join(c, "checkpoint.json"), "--out", c, "--iters", "3",
                 "--no-timestamp"]) == 0
    assert open(os.path.join(a, "metrics.csv")).read() == open(os.path.join(c, "metrics.csv")).read()
    for name in ("checkpoint.json", "checkpoint.json.bin"):
        assert open(os.path.join(a, name), "rb").read() == open(os.path.join(c, name), "rb").read()


def test_cli_bench_deterministic(tmp_path):
    args = ["bench", "--ensemble", "R:2;R:2", "--n", "20", "--seed", "4"]
    assert main(args + ["--csv", str(tmp_path / "1.csv")]) == 0
    assert main(args + ["--csv", str(tmp_path / "2.csv")]) == 0
    text = open(tmp_path / "1.csv").read()
    assert text == open(tmp_path / "2.csv").read()
    assert len(text.splitlines()) == 3


def test_cli_beam_and_tomo(tmp_path, rng):
    io.save_state(tmp_path / "s.json", haar_random(4, rng))
    assert main(["beam", "--state", str(tmp_path / "s.json"), "--k", "4", "--heuristic", "qbq",
                 "--circuit", str(tmp_path / "c.json")]) == 0
    assert len(io.load_circuit(tmp_path / "c.json")) > 0
    assert main(["beam", "--state", str(tmp_path / "s.json"), "--k", "1", "--max-depth", "1"]) == 1
    assert main(["tomo", "--state", str(tmp_path / "s.json"), "--exact", "--steps", "3",
                 "--out", str(tmp_path / "t.json")]) == 0
    rec = json.load(open(tmp_path / "t.json"))
    assert rec["shots"] == 0 and len(rec["actions"]) == 3 and len(rec["exact_s_avg"]) == 4
