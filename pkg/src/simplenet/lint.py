"""Design-rule checks over an architecture description.

| id | rule                                                | verdict                             |
|----|-----------------------------------------------------|-------------------------------------|
| P1 | trunk widths (convs before the first 1x1) never drop | fail on any decrease                |
| P2 | homogeneous groups of layers                        | warn on too many widths / singletons |
| P3 | no 1x1 kernels early                                | fail inside the first 60% of depth  |
| P4 | no rapid early down-sampling                        | fail: pool before 3rd conv; warn: >4x in first half |
| P5 | prefer 3x3 kernels                                  | warn on any kernel >= 5             |
| P6 | parameter budget                                    | warn above the budget (6M)          |

Rapid prototyping, experiment isolation and final regulation describe how to
run experiments, not properties of an architecture, and have no rule here.

All thresholds live in :class:`LintConfig` and are echoed in the messages.
Layer indices are 1-based positions in the layer list.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .archspec import ArchSpec
from .stats import analyze

RULES = ("P1", "P2", "P3", "P4", "P5", "P6")
LEVELS = ("pass", "warn", "fail")


@dataclass(frozen=True)
class LintConfig:
    max_distinct_widths: int = 6
    max_singleton_fraction: float = 0.30
    early_1x1_fraction: float = 0.60
    min_convs_before_pool: int = 3
    max_early_downsample: int = 4
    large_kernel: int = 5
    param_budget: int = 6_000_000


@dataclass(frozen=True)
class Finding:
    rule_id: str
    level: str
    message: str
    layer_index: int | None = None


def _conv_positions(spec: ArchSpec):
    """(layer_index, conv) pairs, both 1-based."""
    return [(i, layer) for i, layer in enumerate(spec.layers, start=1) if layer.kind == "conv"]


def _p1(spec, cfg):
    trunk = []
    for i, layer in _conv_positions(spec):
        if layer.k == 1:
            break
        trunk.append((i, layer.out))
    for (_, prev), (i, width) in zip(trunk, trunk[1:]):
        if width < prev:
            return Finding("P1", "fail", f"trunk width drops {prev} -> {width}", i)
    return Finding("P1", "pass", f"trunk widths non-decreasing over {len(trunk)} convs")


def _p2(spec, cfg):
    widths = [layer.out for _, layer in _conv_positions(spec)]
    runs = []
    for width in widths:
        if runs and runs[-1][0] == width:
            runs[-1][1] += 1
        else:
            runs.append([width, 1])
    distinct = len(set(widths))
    singles = sum(length for _, length in runs if length == 1)
    fraction = singles / len(widths) if widths else 0.0
    detail = (f"{distinct} distinct widths (max {cfg.max_distinct_widths}), "
              f"{singles}/{len(widths)} convs in singleton groups (max {cfg.max_singleton_fraction:.0%})")
    if distinct > cfg.max_distinct_widths or fraction > cfg.max_singleton_fraction:
        return Finding("P2", "warn", detail)
    return Finding("P2", "pass", detail)


def _p3(spec, cfg):
    convs = _conv_positions(spec)
    for depth, (i, layer) in enumerate(convs):
        if layer.k == 1 and depth < cfg.early_1x1_fraction * len(convs):
            return Finding("P3", "fail",
                           f"1x1 conv #{depth + 1} of {len(convs)} inside first "
                           f"{cfg.early_1x1_fraction:.0%} of conv depth", i)
    return Finding("P3", "pass", f"no 1x1 conv in first {cfg.early_1x1_fraction:.0%} of conv depth")


def _p4(spec, cfg):
    convs = _conv_positions(spec)
    convs_seen = 0
    total = len(convs)
    half_end = max(i for depth, (i, _) in enumerate(convs) if depth < total / 2)
    factor = 1
    for i, layer in enumerate(spec.layers, start=1):
        if layer.kind == "conv":
            convs_seen += 1
        if layer.kind == "pool" and convs_seen < cfg.min_convs_before_pool:
            return Finding("P4", "fail", f"pool after only {convs_seen} conv(s)", i)
        if i <= half_end and layer.kind in ("pool", "conv"):
            factor *= layer.stride
    if factor > cfg.max_early_downsample:
        return Finding("P4", "warn",
                       f"{factor}x down-sampling in first half of conv depth "
                       f"(max {cfg.max_early_downsample}x)")
    return Finding("P4", "pass", f"{factor}x down-sampling in first half of conv depth")


def _p5(spec, cfg):
    for i, layer in _conv_positions(spec):
        if layer.k >= cfg.large_kernel:
            return Finding("P5", "warn", f"{layer.k}x{layer.k} kernel", i)
    return Finding("P5", "pass", f"no kernel of {cfg.large_kernel} or more")


def _p6(spec, cfg):
    params = analyze(spec).params
    if params > cfg.param_budget:
        return Finding("P6", "warn", f"{params} params exceed budget {cfg.param_budget}")
    return Finding("P6", "pass", f"{params} params within budget {cfg.param_budget}")


_CHECKS = (_p1, _p2, _p3, _p4, _p5, _p6)


def lint(spec: ArchSpec, config: LintConfig | None = None) -> list[Finding]:
    """One finding per rule, in rule order."""
    cfg = config or LintConfig()
    return [check(spec, cfg) for check in _CHECKS]


def worst(report) -> str:
    return max((f.level for f in report), key=LEVELS.index)


def render_table(report) -> str:
    rows = [("RULE", "LEVEL", "LAYER", "MESSAGE")]
    rows += [(f.rule_id, f.level, "-" if f.layer_index is None else str(f.layer_index), f.message)
             for f in report]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join(
        "  ".join([r[0].ljust(widths[0]), r[1].ljust(widths[1]), r[2].rjust(widths[2]), r[3]])
        for r in rows
    ) + "\n"


def render_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("rule_id", "level", "layer_index", "message"))
    for f in report:
        writer.writerow((f.rule_id, f.level, "" if f.layer_index is None else f.layer_index, f.message))
    return buf.getvalue()


def parse_csv(text: str) -> list[Finding]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["rule_id", "level", "layer_index", "message"]:
        raise ValueError("not a lint report")
    out = []
    for rule_id, level, layer, message in rows[1:]:
        if rule_id not in RULES or level not in LEVELS:
            raise ValueError(f"bad report line: {rule_id},{level}")
        out.append(Finding(rule_id, level, message, int(layer) if layer else None))
    return out
