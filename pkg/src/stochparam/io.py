"""Persistent, versioned file formats.

Binary containers (datasets, trajectories, model checkpoints) are a single
file: one JSON header line, then a raw little-endian float64 blob whose byte
length and CRC32 the header declares. Reports and exports are JSON and CSV:
locale-independent, 17-significant-digit numbers, '\n' line endings, no
timestamps (idempotent reruns produce byte-identical files).
"""
from __future__ import annotations

import hashlib
import json
import zlib
from pathlib import Path

import numpy as np

from . import mdn as _mdn
from .harness import EnsembleForecast, PairDataset, SweepTable, WeatherScores
from .scores import ScoreReport

__all__ = [
    "FormatError",
    "save_dataset",
    "load_dataset",
    "save_trajectory",
    "load_trajectory",
    "save_model",
    "load_model",
    "save_report",
    "load_report",
    "save_forecast",
    "load_forecast",
    "save_sweep",
    "load_sweep",
    "export_plot_data",
    "export_envelope_csv",
    "export_sweep_csv",
    "export_curve_csv",
    "content_hash",
]

FORMAT_VERSION = 1


class FormatError(ValueError):
    """File does not conform to the declared container format."""


def _write_container(path, header: dict, blob: np.ndarray) -> None:
    raw = np.ascontiguousarray(blob, dtype="<f8").tobytes()
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    header["blob_bytes"] = len(raw)
    header["blob_crc32"] = zlib.crc32(raw)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(raw)


def _read_container(path, expected_kind: str) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unreadable header") from exc
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unknown format version {version!r}")
        if header.get("kind") != expected_kind:
            raise FormatError(f"{path}: expected a {expected_kind} file, got {header.get('kind')!r}")
        raw = fh.read()
    declared = header["blob_bytes"]
    if len(raw) != declared:
        raise FormatError(f"{path}: truncated blob: {len(raw)} bytes on disk, header declares {declared}")
    if zlib.crc32(raw) != header["blob_crc32"]:
        raise FormatError(f"{path}: blob checksum mismatch")
    return header, np.frombuffer(raw, dtype="<f8")


def save_dataset(dataset: PairDataset, path) -> None:
    """(state, error) rows as [x_n | m_n] in one float64 blob."""
    n, d = dataset.x.shape
    header = {
        "kind": "pair-dataset",
        "n_rows": n,
        "d1": d,
        "dt": dataset.dt,
        "meta": dataset.meta,
    }
    _write_container(path, header, np.concatenate([dataset.x, dataset.m], axis=1))


def load_dataset(path) -> PairDataset:
    header, flat = _read_container(path, "pair-dataset")
    n, d = header["n_rows"], header["d1"]
    if flat.size != n * 2 * d:
        raise FormatError(
            f"{path}: header declares {n} rows x {2 * d} values = {n * 2 * d} floats, "
            f"blob holds {flat.size}"
        )
    rows = flat.reshape(n, 2 * d)
    return PairDataset(x=rows[:, :d].copy(), m=rows[:, d:].copy(),
                       dt=header["dt"], meta=header.get("meta", {}))


def save_trajectory(states: np.ndarray, dt: float, path, meta: dict | None = None) -> None:
    states = np.asarray(states, dtype=float)
    header = {
        "kind": "trajectory",
        "n_states": states.shape[0],
        "dim": states.shape[1],
        "dt": dt,
        "meta": meta or {},
    }
    _write_container(path, header, states)


def load_trajectory(path) -> tuple[np.ndarray, float, dict]:
    header, flat = _read_container(path, "trajectory")
    n, d = header["n_states"], header["dim"]
    if flat.size != n * d:
        raise FormatError(f"{path}: blob holds {flat.size} floats, header declares {n * d}")
    return flat.reshape(n, d).copy(), header["dt"], header.get("meta", {})


# ---------------------------------------------------------------------------
# model checkpoints: manifest + flat weight blob in layer order W0,b0,W1,b1,...


def _weights_blob(weights: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([w.ravel() for w in weights])


def _split_blob(flat: np.ndarray, shapes: list[tuple[int, ...]]) -> list[np.ndarray]:
    out, at = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(flat[at : at + size].reshape(shape).copy())
        at += size
    if at != flat.size:
        raise FormatError(f"weight blob holds {flat.size} floats, architecture needs {at}")
    return out


def save_model(model, path) -> None:
    """Checkpoint an error model (network weights as a flat blob, everything
    else in the JSON manifest)."""
    if isinstance(model, _mdn.PolyAr1Model):
        header = {
            "kind": "model",
            "family": "poly-ar1",
            "coeffs": model.coeffs.tolist(),
            "phi_r": model.phi_r,
            "innovation_var": model.innovation_var,
        }
        _write_container(path, header, np.empty(0))
        return
    common = {
        "kind": "model",
        "input_dim": model.input_dim,
        "target_dim": model.target_dim,
        "hidden": list(model.hidden),
        "weight_shapes": [list(w.shape) for w in model.weights],
        "x_mean": model.x_mean.tolist(),
        "x_std": model.x_std.tolist(),
        "m_mean": model.m_mean.tolist(),
        "m_std": model.m_std.tolist(),
        "seed": model.seed,
        "loss_history": model.loss_history,
    }
    if isinstance(model, _mdn.MdnModel):
        header = {**common, "family": "mdn", "mode": model.mode,
                  "n_components": model.n_components}
    elif isinstance(model, _mdn.DeterministicModel):
        header = {**common, "family": "deterministic"}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    _write_container(path, header, _weights_blob(model.weights))


def load_model(path):
    header, flat = _read_container(path, "model")
    family = header.get("family")
    if family == "poly-ar1":
        return _mdn.PolyAr1Model(
            coeffs=np.array(header["coeffs"]),
            phi_r=header["phi_r"],
            innovation_var=header["innovation_var"],
        )
    shapes = [tuple(s) for s in header["weight_shapes"]]
    weights = _split_blob(flat, shapes)
    common = dict(
        input_dim=header["input_dim"],
        target_dim=header["target_dim"],
        hidden=tuple(header["hidden"]),
        weights=weights,
        x_mean=np.array(header["x_mean"]),
        x_std=np.array(header["x_std"]),
        m_mean=np.array(header["m_mean"]),
        m_std=np.array(header["m_std"]),
        seed=header.get("seed"),
        loss_history=header.get("loss_history", {}),
    )
    if family == "mdn":
        return _mdn.MdnModel(mode=header["mode"], n_components=header["n_components"], **common)
    if family == "deterministic":
        return _mdn.DeterministicModel(**common)
    raise FormatError(f"{path}: unknown model family {family!r}")


def save_forecast(forecast: EnsembleForecast, path, meta: dict | None = None) -> None:
    """Ensemble forecast container: members then truth in one blob."""
    n_mem, n_saved, dim = forecast.members.shape
    header = {
        "kind": "ensemble-forecast",
        "n_members": n_mem,
        "n_saved": n_saved,
        "dim": dim,
        "dt": forecast.dt,
        "n_blown": forecast.n_blown,
        "meta": meta or {},
    }
    blob = np.concatenate([forecast.members.ravel(), forecast.truth.ravel()])
    _write_container(path, header, blob)


def load_forecast(path) -> EnsembleForecast:
    header, flat = _read_container(path, "ensemble-forecast")
    n_mem, n_saved, dim = header["n_members"], header["n_saved"], header["dim"]
    split = n_mem * n_saved * dim
    if flat.size != split + n_saved * dim:
        raise FormatError(f"{path}: blob size does not match declared shapes")
    return EnsembleForecast(
        members=flat[:split].reshape(n_mem, n_saved, dim).copy(),
        truth=flat[split:].reshape(n_saved, dim).copy(),
        dt=header["dt"],
        n_blown=header.get("n_blown", 0),
    )


# ---------------------------------------------------------------------------
# score reports


def _jsonify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    return value


def content_hash(obj) -> str:
    """Hash of the canonical JSON form of ``obj`` (provenance fingerprint)."""
    canon = json.dumps(_jsonify(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def save_report(report: ScoreReport, path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "score-report",
        "kl": report.kl,
        "hellinger": report.hellinger,
        "d_r": report.d_r,
        "energy_curve": None if report.energy_curve is None else report.energy_curve.tolist(),
        "metadata": _jsonify(report.metadata),
    }
    payload["provenance_hash"] = content_hash(payload["metadata"])
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_report(path) -> ScoreReport:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unknown format version {payload.get('format_version')!r}")
    if payload.get("kind") != "score-report":
        raise FormatError(f"{path}: not a score report")
    curve = payload.get("energy_curve")
    return ScoreReport(
        kl=payload.get("kl"),
        hellinger=payload.get("hellinger"),
        d_r=payload.get("d_r"),
        energy_curve=None if curve is None else np.asarray(curve),
        metadata=payload.get("metadata", {}),
    )


def _report_payload(report: ScoreReport) -> dict:
    return {
        "kl": report.kl,
        "hellinger": report.hellinger,
        "d_r": report.d_r,
        "energy_curve": None if report.energy_curve is None else report.energy_curve.tolist(),
        "metadata": _jsonify(report.metadata),
    }


def save_sweep(table: SweepTable, path) -> None:
    """Hold-length sweep as JSON: one report per hold length."""
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "sweep",
        "rows": [{"tp": tp, "report": _report_payload(rep)} for tp, rep in table.rows],
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_sweep(path) -> SweepTable:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unknown format version {payload.get('format_version')!r}")
    if payload.get("kind") != "sweep":
        raise FormatError(f"{path}: not a sweep file")
    rows = []
    for row in payload["rows"]:
        rep = row["report"]
        curve = rep.get("energy_curve")
        rows.append((int(row["tp"]), ScoreReport(
            kl=rep.get("kl"),
            hellinger=rep.get("hellinger"),
            d_r=rep.get("d_r"),
            energy_curve=None if curve is None else np.asarray(curve),
            metadata=rep.get("metadata", {}),
        )))
    return SweepTable(rows=rows)


# ---------------------------------------------------------------------------
# plot-ready CSV exports


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path, columns: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def export_envelope_csv(forecast: EnsembleForecast, path, component: int = 0) -> None:
    """Ensemble envelope of one state component: time, truth, ensemble mean,
    and mean +- 3 sample standard deviations (unbiased)."""
    member_vals = forecast.members[:, :, component]
    mean = member_vals.mean(axis=0)
    # a single member has zero spread by convention
    sd = member_vals.std(axis=0, ddof=1) if member_vals.shape[0] > 1 else np.zeros_like(mean)
    rows = zip(forecast.times, forecast.truth[:, component], mean, mean - 3 * sd, mean + 3 * sd)
    _write_csv(path, ["time", "truth", "mean", "lower", "upper"], rows)


def export_sweep_csv(table: SweepTable, path) -> None:
    """Hold-length sweep: one row per hold length with every available score."""
    metrics = []
    sample = table.rows[0][1]
    for name in ("kl", "hellinger", "d_r"):
        if getattr(sample, name) is not None:
            metrics.append(name)
    has_energy = sample.energy_curve is not None
    columns = ["tp", *metrics] + (["energy"] if has_energy else [])
    rows = []
    for tp, report in table.rows:
        row = [tp] + [getattr(report, name) for name in metrics]
        if has_energy:
            row.append(report.energy_curve[-1, 1])
        rows.append(row)
    _write_csv(path, columns, rows)


def export_curve_csv(scores: WeatherScores, path) -> None:
    """Energy-score curve: lead time, mean score, standard error."""
    _write_csv(path, ["lead_time", "score", "stderr"],
               zip(scores.lead_times, scores.mean, scores.stderr))


def export_plot_data(obj, path, **kwargs) -> None:
    """Dispatch to the matching CSV writer by object type."""
    if isinstance(obj, EnsembleForecast):
        export_envelope_csv(obj, path, **kwargs)
    elif isinstance(obj, SweepTable):
        export_sweep_csv(obj, path)
    elif isinstance(obj, WeatherScores):
        export_curve_csv(obj, path)
    else:
        raise TypeError(f"no plot export for {type(obj).__name__}")
