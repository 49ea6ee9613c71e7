"""File formats: states, circuits, run configs, checkpoints and CSV tables.

States and circuits are JSON with complex numbers written as ``[re, im]``
pairs and amplitudes in big-endian basis order. Checkpoints are a JSON
header plus a sidecar ``.bin`` blob of raw little-endian arrays whose
offsets are listed in the header.
"""
import csv
import json
import os
from datetime import datetime, timezone

import numpy as np

from .state import NORM_TOL, num_qubits
from .synthesis import GATE_KINDS, Circuit, GateOp

CHECKPOINT_FORMAT = "qdisentangle-checkpoint"
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    """Malformed or unreadable input file; maps to exit status 2."""

    def __init__(self, path, field, msg):
        super().__init__(f"{path}: field {field!r}: {msg}")
        self.path, self.field = path, field


class CheckpointError(FormatError):
    pass


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(path, "<document>", f"invalid JSON ({e})") from None


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=False)
        f.write("\n")


def complex_to_pairs(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def pairs_to_complex(x, path="<memory>", field="amplitudes"):
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise FormatError(path, field, "expected numeric [re, im] pairs") from None
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise FormatError(path, field, "expected [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# states ---------------------------------------------------------------------

def state_to_dict(psi):
    psi = np.asarray(psi, dtype=complex)
    return {"n_qubits": num_qubits(psi), "amplitudes": complex_to_pairs(psi)}


def state_from_dict(d, path="<memory>"):
    for key in ("n_qubits", "amplitudes"):
        if key not in d:
            raise FormatError(path, key, "missing")
    L = d["n_qubits"]
    if not isinstance(L, int) or L < 1:
        raise FormatError(path, "n_qubits", f"expected a positive integer, got {L!r}")
    psi = pairs_to_complex(d["amplitudes"], path)
    if psi.shape != (2 ** L,):
        raise FormatError(path, "amplitudes", f"expected {2 ** L} amplitudes, got {psi.size}")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1) > NORM_TOL:
        raise FormatError(path, "amplitudes", f"state not normalized (norm^2 = {norm:.12g})")
    return psi


def save_state(path, psi):
    _write_json(path, state_to_dict(psi))


def load_state(path):
    return state_from_dict(_read_json(path), path)


def load_states(path):
    """A single state record, a list of them, or ``{"states": [...]}``."""
    d = _read_json(path)
    if isinstance(d, dict) and "states" in d:
        d = d["states"]
    if isinstance(d, dict):
        return np.asarray([state_from_dict(d, path)])
    if not isinstance(d, list) or not d:
        raise FormatError(path, "states", "expected a state record or a non-empty list")
    out = [state_from_dict(x, f"{path}[{k}]") for k, x in enumerate(d)]
    if len({x.size for x in out}) != 1:
        raise FormatError(path, "states", "states have different sizes")
    return np.asarray(out)


# circuits -------------------------------------------------------------------

def circuit_to_dict(circ):
    d = {
        "n_qubits": circ.n_qubits,
        "gates": [{
            "step": op.step,
            "pair": list(op.pair),
            "orientation": list(op.orientation),
            "kind": op.kind,
            "matrix": complex_to_pairs(op.matrix),
            "policy_prob": op.policy_prob,
        } for op in circ.gates],
        "entropies_per_step": list(circ.entropies_per_step),
    }
    if circ.permutation is not None:
        d["permutation"] = list(circ.permutation)
    return d


def circuit_from_dict(d, path="<memory>"):
    for key in ("n_qubits", "gates"):
        if key not in d:
            raise FormatError(path, key, "missing")
    circ = Circuit(int(d["n_qubits"]), entropies_per_step=list(d.get("entropies_per_step", [])))
    for k, g in enumerate(d["gates"]):
        where = f"gates[{k}]"
        try:
            m = pairs_to_complex(g["matrix"], path, where + ".matrix")
            if m.shape != (4, 4):
                raise FormatError(path, where + ".matrix", "expected a 4x4 matrix")
            if g["kind"] not in GATE_KINDS:
                raise FormatError(path, where + ".kind", f"unknown kind {g['kind']!r}")
            if g["step"] != k + 1:
                raise FormatError(path, where + ".step", "steps must be contiguous from 1")
            orient = tuple(int(q) for q in g["orientation"])
            pair = tuple(int(q) for q in g["pair"])
        except KeyError as e:
            raise FormatError(path, f"{where}.{e.args[0]}", "missing") from None
        if not all(0 <= q < circ.n_qubits for q in orient) or orient[0] == orient[1]:
            raise FormatError(path, where + ".orientation", f"invalid qubits {orient}")
        circ.gates.append(GateOp(k + 1, pair, orient, m, g["kind"], g.get("policy_prob")))
    if "permutation" in d:
        circ.permutation = tuple(d["permutation"])
    return circ


def save_circuit(path, circ):
    _write_json(path, circuit_to_dict(circ))


def load_circuit(path):
    return circuit_from_dict(_read_json(path), path)


# run configs ----------------------------------------------------------------

RUN_KEYS = {"L", "seed", "checkpoint_every"}


def load_run_config(path):
    """Flat JSON object: ``L`` plus any env/net/train field overrides and ``checkpoint_every``."""
    d = _read_json(path)
    if not isinstance(d, dict):
        raise FormatError(path, "<document>", "expected a JSON object")
    if "L" not in d:
        raise FormatError(path, "L", "missing")
    return d


def build_configs(run, seed=None):
    from .ppo import default_configs
    overrides = {k: v for k, v in run.items() if k not in RUN_KEYS}
    s = run.get("seed", 0) if seed is None else seed
    return default_configs(int(run["L"]), seed=int(s), **overrides)


# checkpoints ----------------------------------------------------------------

def blob_path(path):
    return str(path) + ".bin"


def save_checkpoint(path, trainer, timestamp=True):
    meta, arrays = trainer.get_state()
    entries, offset = [], 0
    with open(blob_path(path), "wb") as f:
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name])
            dt = a.dtype.newbyteorder("<")
            raw = a.astype(dt).tobytes()
            f.write(raw)
            entries.append({"name": name, "shape": list(a.shape), "dtype": dt.str,
                            "offset": offset, "nbytes": len(raw)})
            offset += len(raw)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {"env": trainer.env_cfg.to_dict(), "net": trainer.net_cfg.to_dict(),
                   "train": trainer.train_cfg.to_dict()},
        "iteration": meta["iteration"],
        "rng": meta["rng"],
        "param_groups": meta["param_groups"],
        "blob": os.path.basename(blob_path(path)),
        "blob_nbytes": offset,
        "arrays": entries,
    }
    if timestamp:
        header["created"] = datetime.now(timezone.utc).isoformat()
    _write_json(path, header)


def read_checkpoint(path):
    """``(header, arrays)`` with validation of format, version and blob length."""
    try:
        header = _read_json(path)
    except FormatError as e:
        raise CheckpointError(path, e.field, str(e)) from None
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(path, "format", "not a checkpoint header")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(path, "version",
                              f"unsupported version {header.get('version')!r}, expected {CHECKPOINT_VERSION}")
    bp = os.path.join(os.path.dirname(str(path)), header["blob"])
    try:
        with open(bp, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(bp, "blob", f"cannot read ({e.strerror})") from None
    if len(blob) != header["blob_nbytes"]:
        raise CheckpointError(bp, "blob_nbytes",
                              f"length {len(blob)} does not match header ({header['blob_nbytes']}); truncated?")
    arrays = {}
    for e in header["arrays"]:
        end = e["offset"] + e["nbytes"]
        if end > len(blob):
            raise CheckpointError(bp, e["name"], "array extends past end of blob")
        arrays[e["name"]] = np.frombuffer(blob[e["offset"]:end], dtype=np.dtype(e["dtype"])) \
            .reshape(e["shape"]).copy()
    return header, arrays


def trainer_from_header(header):
    from .env import EnvConfig
    from .nets import NetConfig
    from .ppo import TrainConfig, Trainer
    cfg = header["config"]
    return Trainer(EnvConfig(**cfg["env"]), NetConfig(**cfg["net"]), TrainConfig(**cfg["train"]))


def load_checkpoint(path):
    """Rebuild a :class:`~qdisentangle.ppo.Trainer` exactly as it was saved."""
    header, arrays = read_checkpoint(path)
    tr = trainer_from_header(header)
    meta = {"iteration": header["iteration"], "rng": header["rng"],
            "param_groups": header["param_groups"]}
    tr.set_state(meta, arrays)
    return tr


# CSV ------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def append_csv(path, columns, rows):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        if new:
            w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
