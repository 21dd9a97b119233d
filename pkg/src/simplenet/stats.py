"""Analytic cost model: MACC, COMP, ADD, DIV, activations, params, storage.

Counting convention (applied identically by :func:`analyze` and by the
instrumented forward in :func:`profile_forward`):

* conv / dense / fc: one MACC per multiply-accumulate; bias adds one ADD per
  output element.
* BN (inference form ``(x - mean) * scale + beta``): one MACC and one ADD per
  element, one DIV per channel for the precomputed scale.
* ReLU: one COMP per element. k x k max-pool: ``k*k - 1`` COMP per window.
  Global max-pool: ``h*w - 1`` COMP per channel.
* Dropout, LRN and the softmax are free.
* Activations: output elements of conv, pool, global pool, dense and fc layers.
* Params: conv weights (+bias without BN), BN gamma and beta, dense/fc weights
  and biases. Storage assumes 4 bytes per parameter.
"""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields, replace

import numpy as np

from . import opcount
from .archspec import ArchSpec, check

BYTES_PER_PARAM = 4
COLUMNS = ("name", "macc", "comp", "add", "div", "activations", "params", "storage_mb")


@dataclass(frozen=True)
class StatsReport:
    name: str
    macc: int
    comp: int
    add: int
    div: int
    activations: int
    params: int
    storage_mb: float

    @classmethod
    def from_counts(cls, name, counts, params):
        return cls(name, int(counts.get("macc", 0)), int(counts.get("comp", 0)),
                   int(counts.get("add", 0)), int(counts.get("div", 0)),
                   int(counts.get("activations", 0)), int(params),
                   params * BYTES_PER_PARAM / 2**20)


def _with_input(spec: ArchSpec, input_shape) -> ArchSpec:
    if input_shape is None:
        return spec
    shape = tuple(int(d) for d in input_shape)
    if len(shape) == 4:
        if shape[0] != 1:
            raise ValueError("stats are defined for a batch of one")
        shape = shape[1:]
    return replace(spec, input=shape)


@dataclass(frozen=True)
class LayerCost:
    index: int  # 1-based position in the architecture's layer list
    kind: str  # conv | bn | relu | pool | gpool | dense | fc
    out_shape: tuple
    macc: int = 0
    comp: int = 0
    add: int = 0
    div: int = 0
    activations: int = 0
    params: int = 0


def layer_costs(spec: ArchSpec, input_shape=None) -> list[LayerCost]:
    """Per-layer closed-form costs at batch size 1, in execution order.

    A conv entry expands to conv, bn (with ``norm bn``) and relu rows, a
    dense entry to dense and relu rows, mirroring the built network.
    """
    spec = check(_with_input(spec, input_shape))
    bn = spec.norm == "bn"
    c, h, w = spec.input
    features = c * h * w
    rows = []
    for i, layer in enumerate(spec.layers, start=1):
        if layer.kind == "conv":
            h = (h + 2 * layer.padding - layer.k) // layer.stride + 1
            w = (w + 2 * layer.padding - layer.k) // layer.stride + 1
            weights = layer.k * layer.k * (c // layer.groups) * layer.out
            elems = layer.out * h * w
            shape = (layer.out, h, w)
            if bn:
                rows.append(LayerCost(i, "conv", shape, macc=weights * h * w, activations=elems, params=weights))
                rows.append(LayerCost(i, "bn", shape, macc=elems, add=elems, div=layer.out,
                                      params=2 * layer.out))
            else:
                rows.append(LayerCost(i, "conv", shape, macc=weights * h * w, add=elems, activations=elems,
                                      params=weights + layer.out))
            rows.append(LayerCost(i, "relu", shape, comp=elems))
            c = layer.out
            features = elems
        elif layer.kind == "pool":
            h = (h - layer.k) // layer.stride + 1
            w = (w - layer.k) // layer.stride + 1
            rows.append(LayerCost(i, "pool", (c, h, w), comp=(layer.k * layer.k - 1) * c * h * w,
                                  activations=c * h * w))
            features = c * h * w
        elif layer.kind == "gpool":
            rows.append(LayerCost(i, "gpool", (c, 1, 1), comp=c * (h * w - 1), activations=c))
            h = w = 1
            features = c
        elif layer.kind in ("dense", "fc"):
            rows.append(LayerCost(i, layer.kind, (layer.out,), macc=features * layer.out, add=layer.out,
                                  activations=layer.out, params=features * layer.out + layer.out))
            if layer.kind == "dense":
                rows.append(LayerCost(i, "relu", (layer.out,), comp=layer.out))
            features = layer.out
    return rows


def analyze(spec: ArchSpec, input_shape=None) -> StatsReport:
    """Closed-form cost of one forward pass (batch size 1)."""
    rows = layer_costs(spec, input_shape)
    totals = {key: sum(getattr(r, key) for r in rows) for key in ("macc", "comp", "add", "div", "activations")}
    return StatsReport.from_counts(spec.name, totals, sum(r.params for r in rows))


def profile_forward(spec: ArchSpec, input_shape=None, seed: int = 0) -> StatsReport:
    """Brute-force counterpart of :func:`analyze`.

    Builds the network, runs one eval-mode forward on a random image and
    tallies the work each kernel reports while executing, plus the sizes of
    the allocated parameter tensors.
    """
    from .network import build

    spec = check(_with_input(spec, input_shape))
    net = build(spec, seed)
    x = np.random.default_rng(seed).random((1, *spec.input), dtype=np.float32)
    with opcount.counting() as counts:
        net.forward(x, train=False)
    return StatsReport.from_counts(spec.name, counts, net.n_params())


def _human(value) -> str:
    if isinstance(value, float):
        return f"{value:.2f}"
    for unit, scale in (("G", 1e9), ("M", 1e6), ("K", 1e3)):
        if abs(value) >= scale:
            return f"{value / scale:.2f}{unit}"
    return str(value)


def compare(reports, fmt: str = "table") -> str:
    """Render reports sorted by parameter count, as an aligned table or CSV."""
    if not reports:
        raise ValueError("nothing to compare")
    ordered = sorted(reports, key=lambda r: (r.params, r.name))
    if fmt == "csv":
        return to_csv(ordered)
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")
    header = [col.upper() if col != "storage_mb" else "SIZE(MB)" for col in COLUMNS]
    rows = [[r.name] + [_human(v) for v in astuple(r)[1:]] for r in ordered]
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[0]) if i == 0 else cell.rjust(widths[i])
                       for i, cell in enumerate(row)) for row in [header] + rows]
    return "\n".join(lines) + "\n"


def to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in reports:
        writer.writerow([r.name, r.macc, r.comp, r.add, r.div, r.activations, r.params, repr(r.storage_mb)])
    return buf.getvalue()


def from_csv(text: str) -> list[StatsReport]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"expected columns {COLUMNS}, got {reader.fieldnames}")
    types = {f.name: f.type for f in fields(StatsReport)}
    out = []
    for row in reader:
        out.append(StatsReport(**{
            key: (float(val) if types[key] == "float" else int(val) if types[key] == "int" else val)
            for key, val in row.items()
        }))
    return out
