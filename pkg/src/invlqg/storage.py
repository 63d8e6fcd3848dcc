"""Config files, trajectory CSVs and report exports.

Config documents are JSON with matrices as row-major nested lists::

    {
      "system":   {"A": [[...]], "B": [[[...]], ...], "L": [[...]]},
      "horizon":  {"t0": 0.0, "tN": 5.0, "steps": 500},
      "x0":       [...],
      "players":  [{"Q": [[...]], "R": [[[...]], ...]}, ...],
      "simulation": {"D": 20, "seed": 0}
    }

``players`` and ``system.L`` are the ground-truth parameters; code that
plays the inverse role must go through :func:`system_view`, which drops
them.
"""

import copy
import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import CostParameters, GameDefinition, NoiseModel, TrajectoryBundle

FLOAT_FMT = "%.17g"
MANIFEST = "manifest.json"


def load_config(path) -> dict:
    """Parse a JSON config file. Missing files raise ``FileNotFoundError``."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _get(cfg, dotted):
    cur = cfg
    for key in dotted.split("."):
        if not isinstance(cur, dict) or key not in cur:
            raise ConfigError(f"missing config key {dotted!r}")
        cur = cur[key]
    return cur


def _matrix(value, name):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} is not a numeric matrix") from exc
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a nested list of rows, got {arr.ndim} dimension(s)")
    return arr


def system_view(cfg: dict) -> dict:
    """The part of a config an observer of the game may know.

    Keeps ``system.A``, ``system.B``, ``horizon`` and ``x0``; cost weights and
    the noise scaling are removed.
    """
    out = {
        "system": {"A": copy.deepcopy(_get(cfg, "system.A")), "B": copy.deepcopy(_get(cfg, "system.B"))},
        "horizon": copy.deepcopy(_get(cfg, "horizon")),
    }
    if "x0" in cfg:
        out["x0"] = copy.deepcopy(cfg["x0"])
    return out


def game_from_config(cfg: dict) -> GameDefinition:
    A = _matrix(_get(cfg, "system.A"), "system.A")
    B_raw = _get(cfg, "system.B")
    if not isinstance(B_raw, list) or not B_raw:
        raise ConfigError("system.B must be a non-empty list of matrices")
    B = tuple(_matrix(b, f"system.B[{i}]") for i, b in enumerate(B_raw))
    h = _get(cfg, "horizon")
    x0 = cfg.get("x0", [0.0] * A.shape[0])
    try:
        return GameDefinition(A, B, _get(h, "t0"), _get(h, "tN"), _get(h, "steps"), x0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def costs_from_config(cfg: dict) -> CostParameters:
    players = _get(cfg, "players")
    if not isinstance(players, list) or not players:
        raise ConfigError("players must be a non-empty list")
    Q, R = [], []
    for i, pl in enumerate(players):
        Q.append(_matrix(_get(pl, "Q"), f"players[{i}].Q"))
        rows = _get(pl, "R")
        if not isinstance(rows, list):
            raise ConfigError(f"players[{i}].R must be a list of matrices")
        R.append(tuple(_matrix(r, f"players[{i}].R[{j}]") for j, r in enumerate(rows)))
    try:
        return CostParameters(tuple(Q), tuple(R))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def noise_from_config(cfg: dict, dt: float) -> NoiseModel:
    L = _matrix(_get(cfg, "system.L"), "system.L")
    if L.shape[0] != L.shape[1]:
        raise ConfigError(f"system.L must be square, got {L.shape}")
    if np.any(L - np.diag(np.diag(L))):
        raise ConfigError("system.L must be diagonal")
    return NoiseModel(np.diag(L).copy(), dt)


def config_document(game: GameDefinition, costs=None, noise=None, simulation=None) -> dict:
    doc = {
        "system": {"A": game.A.tolist(), "B": [b.tolist() for b in game.B]},
        "horizon": {"t0": game.t0, "tN": game.tN, "steps": game.steps},
        "x0": game.x0.tolist(),
    }
    if noise is not None:
        doc["system"]["L"] = noise.L.tolist()
    if costs is not None:
        doc["players"] = [
            {"Q": costs.Q[i].tolist(), "R": [r.tolist() for r in costs.R[i]]}
            for i in range(costs.N)
        ]
    if simulation is not None:
        doc["simulation"] = dict(simulation)
    return doc


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _write_table(path, header, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=FLOAT_FMT)


def demo_header(n, m):
    cols = ["t"] + [f"x_{s + 1}" for s in range(n)]
    for i, mi in enumerate(m):
        cols += [f"u_{i + 1}_{c + 1}" for c in range(mi)]
    return cols


def write_bundle(directory, bundle: TrajectoryBundle, extra=None) -> dict:
    """One CSV per demonstration plus ``manifest.json``; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = demo_header(bundle.n, bundle.m)
    width = len(str(bundle.D - 1))
    files = []
    for d in range(bundle.D):
        name = f"demo_{d:0{max(width, 3)}d}.csv"
        data = np.column_stack([bundle.t, bundle.x[d]] + [ui[d] for ui in bundle.u])
        _write_table(directory / name, header, data)
        files.append(name)
    manifest = {
        "files": files,
        "D": bundle.D,
        "n": bundle.n,
        "m": list(bundle.m),
        "rows": int(bundle.t.size),
        "seed": bundle.seed,
    }
    if extra:
        manifest.update(extra)
    write_json(directory / MANIFEST, manifest)
    return manifest


def _parse_header(header):
    cols = header.strip().split(",")
    if not cols or cols[0] != "t":
        raise ConfigError("trajectory CSV must start with a 't' column")
    n = sum(1 for c in cols if c.startswith("x_"))
    m = {}
    for c in cols:
        if c.startswith("u_"):
            _, i, _ = c.split("_")
            m[int(i)] = m.get(int(i), 0) + 1
    return n, [m[i] for i in sorted(m)]


def read_bundle(directory) -> TrajectoryBundle:
    """Load a bundle written by :func:`write_bundle`."""
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    xs, us, t_ref = [], None, None
    n = m = None
    for name in manifest["files"]:
        path = directory / name
        with open(path) as fh:
            header = fh.readline()
        n_d, m_d = _parse_header(header)
        if n is None:
            n, m = n_d, m_d
            us = [[] for _ in m]
        elif (n_d, m_d) != (n, m):
            raise ConfigError(f"{name}: columns differ from the first demonstration")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        if t_ref is None:
            t_ref = t
        elif t.shape != t_ref.shape or np.any(t != t_ref):
            raise ConfigError(f"{name}: time grid differs from the first demonstration")
        xs.append(data[:, 1 : 1 + n])
        pos = 1 + n
        for i, mi in enumerate(m):
            us[i].append(data[:, pos : pos + mi])
            pos += mi
    return TrajectoryBundle(
        t_ref, np.stack(xs), tuple(np.stack(u) for u in us), seed=manifest.get("seed")
    )


def write_profile_csv(path, profile):
    header = ["t"]
    cols = [profile.t]
    for i, Ki in enumerate(profile.K):
        mi, n = Ki.shape[1:]
        for r in range(mi):
            for c in range(n):
                header.append(f"K_{i + 1}_{r + 1}_{c + 1}")
                cols.append(Ki[:, r, c])
    _write_table(path, header, np.column_stack(cols))


def write_stability_csv(path, report):
    _write_table(path, ["t", "max_real"], np.column_stack([report.t, report.max_real]))


def write_excitation_csv(path, report):
    data = np.column_stack([report.t, report.cond, report.flagged.astype(int)])
    _write_table(path, ["t", "cond", "flagged"], data)


def write_singular_values_csv(path, singular_values):
    idx = np.arange(1, singular_values.size + 1)
    _write_table(path, ["index", "sigma"], np.column_stack([idx, singular_values]))


def write_rows_csv(path, header, rows):
    """Plain CSV for heterogeneous rows (numbers formatted at full precision)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def fmt(v):
        if isinstance(v, float):
            return FLOAT_FMT % v
        return "" if v is None else str(v)

    lines = [",".join(header)] + [",".join(fmt(r.get(h)) for h in header) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def read_rows_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
