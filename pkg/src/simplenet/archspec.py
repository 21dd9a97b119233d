"""Declarative architecture descriptions: parsing, rendering, validation, presets.

Text format, one directive per line, ``#`` starts a comment::

    name simplenet13-cifar10      # optional
    input 3x32x32
    classes 10
    norm bn                       # bn (default) or none
    conv 64 k3 [sS] [pP] [gG]     # stride, padding, groups are optional
    pool [kK] [sS]                # default 2x2, stride 2
    lrn                           # parameter-free placeholder
    dropout 0.2
    gpool                         # global max-pool
    dense 4096                    # hidden fully connected layer + ReLU
    fc 10                         # final classifier, exactly once, last

With ``norm bn`` every conv expands to conv -> BN -> ReLU and carries no bias.
With ``norm none`` every conv expands to conv(+bias) -> ReLU.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from .layers import SUPPORTED_KERNELS


class ArchError(ValueError):
    """Parse or validation failure. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | pool | dropout | gpool | dense | fc | lrn
    out: int = 0
    k: int = 0
    stride: int = 1
    pad: int | None = None
    groups: int = 1
    p: float = 0.0

    @property
    def padding(self) -> int:
        if self.pad is not None:
            return self.pad
        return (self.k - 1) // 2 if self.kind == "conv" else 0


@dataclass(frozen=True)
class ArchSpec:
    name: str
    input: tuple[int, int, int]  # (c, h, w)
    classes: int
    layers: tuple[LayerSpec, ...]
    norm: str = "bn"

    @property
    def convs(self) -> list[LayerSpec]:
        return [layer for layer in self.layers if layer.kind == "conv"]


def conv(out, k=3, stride=1, pad=None, groups=1) -> LayerSpec:
    return LayerSpec("conv", out=out, k=k, stride=stride, pad=pad, groups=groups)


def pool(k=2, stride=2) -> LayerSpec:
    return LayerSpec("pool", k=k, stride=stride)


def dropout(p) -> LayerSpec:
    return LayerSpec("dropout", p=float(p))


GPOOL = LayerSpec("gpool")
LRN = LayerSpec("lrn")


def fc(out) -> LayerSpec:
    return LayerSpec("fc", out=out)


def dense(out) -> LayerSpec:
    return LayerSpec("dense", out=out)


# ---------------------------------------------------------------------------
# text format


def _int(token, prefix, lineno):
    body = token[len(prefix):]
    if not token.startswith(prefix) or not body.isdigit():
        raise ArchError(f"expected {prefix}<int>, got {token!r}", lineno)
    return int(body)


def _options(tokens, allowed, lineno):
    opts = {}
    for tok in tokens:
        key = tok[:1]
        if key not in allowed or key in opts:
            raise ArchError(f"unexpected option {tok!r}", lineno)
        opts[key] = _int(tok, key, lineno)
    return opts


def parse_arch(text: str, name: str = "custom") -> ArchSpec:
    """Parse the line format; raises :class:`ArchError` at the first problem."""
    input_shape = classes = None
    norm = "bn"
    layers = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        word, args = tokens[0], tokens[1:]
        if word == "name":
            if len(args) != 1:
                raise ArchError("name takes one argument", lineno)
            name = args[0]
        elif word == "input":
            parts = args[0].lower().split("x") if len(args) == 1 else []
            if len(parts) != 3 or not all(p.isdigit() and int(p) > 0 for p in parts):
                raise ArchError("input expects CxHxW", lineno)
            input_shape = tuple(int(p) for p in parts)
        elif word == "classes":
            if len(args) != 1 or not args[0].isdigit() or int(args[0]) < 1:
                raise ArchError("classes expects a positive integer", lineno)
            classes = int(args[0])
        elif word == "norm":
            if len(args) != 1 or args[0] not in ("bn", "none"):
                raise ArchError("norm expects 'bn' or 'none'", lineno)
            norm = args[0]
        elif word == "conv":
            if len(args) < 2 or not args[0].isdigit() or int(args[0]) < 1:
                raise ArchError("conv expects OUT kK [sS] [pP] [gG]", lineno)
            k = _int(args[1], "k", lineno)
            if k not in SUPPORTED_KERNELS:
                raise ArchError(f"unsupported kernel {k}", lineno)
            opts = _options(args[2:], "spg", lineno)
            if opts.get("s", 1) < 1 or opts.get("g", 1) < 1:
                raise ArchError("stride and groups must be >= 1", lineno)
            layers.append(conv(int(args[0]), k, opts.get("s", 1), opts.get("p"), opts.get("g", 1)))
        elif word == "pool":
            opts = _options(args, "ks", lineno)
            if opts.get("k", 2) < 1 or opts.get("s", 2) < 1:
                raise ArchError("pool size and stride must be >= 1", lineno)
            layers.append(pool(opts.get("k", 2), opts.get("s", 2)))
        elif word == "dropout":
            try:
                (p,) = args
                p = float(p)
            except ValueError:
                raise ArchError("dropout expects one rate", lineno) from None
            if not 0.0 <= p < 1.0:
                raise ArchError(f"dropout rate {p} outside [0, 1)", lineno)
            layers.append(dropout(p))
        elif word in ("gpool", "lrn"):
            if args:
                raise ArchError(f"{word} takes no arguments", lineno)
            layers.append(GPOOL if word == "gpool" else LRN)
        elif word in ("fc", "dense"):
            if len(args) != 1 or not args[0].isdigit() or int(args[0]) < 1:
                raise ArchError(f"{word} expects a positive integer", lineno)
            layers.append(LayerSpec(word, out=int(args[0])))
        else:
            raise ArchError(f"unknown keyword {word!r}", lineno)
    if input_shape is None:
        raise ArchError("missing 'input' directive")
    if classes is None:
        raise ArchError("missing 'classes' directive")
    return ArchSpec(name, input_shape, classes, tuple(layers), norm)


def _render_layer(layer: LayerSpec) -> str:
    if layer.kind == "conv":
        words = [f"conv {layer.out} k{layer.k}"]
        if layer.stride != 1:
            words.append(f"s{layer.stride}")
        if layer.pad is not None and layer.pad != (layer.k - 1) // 2:
            words.append(f"p{layer.pad}")
        if layer.groups != 1:
            words.append(f"g{layer.groups}")
        return " ".join(words)
    if layer.kind == "pool":
        if (layer.k, layer.stride) == (2, 2):
            return "pool"
        return f"pool k{layer.k} s{layer.stride}"
    if layer.kind == "dropout":
        return f"dropout {layer.p!r}"
    if layer.kind in ("fc", "dense"):
        return f"{layer.kind} {layer.out}"
    return layer.kind


def render_arch(spec: ArchSpec) -> str:
    c, h, w = spec.input
    lines = [f"name {spec.name}", f"input {c}x{h}x{w}", f"classes {spec.classes}"]
    if spec.norm != "bn":
        lines.append(f"norm {spec.norm}")
    lines.extend(_render_layer(layer) for layer in spec.layers)
    return "\n".join(lines) + "\n"


def normalized(spec: ArchSpec) -> ArchSpec:
    """Replace default padding with ``None`` so equal layers compare equal."""
    layers = tuple(
        replace(layer, pad=None)
        if layer.kind == "conv" and layer.pad == (layer.k - 1) // 2 else layer
        for layer in spec.layers
    )
    return replace(spec, layers=layers)


# ---------------------------------------------------------------------------
# shape walk and validation


@dataclass
class ShapeTrace:
    """Per-layer input/output shapes (c, h, w); ``None`` after a flatten."""

    shapes: list = field(default_factory=list)
    violations: list = field(default_factory=list)


def trace_shapes(spec: ArchSpec) -> ShapeTrace:
    trace = ShapeTrace()
    c, h, w = spec.input
    flat = None  # feature count once a dense/fc layer flattened the map
    for i, layer in enumerate(spec.layers, start=1):
        before = (c, h, w) if flat is None else (flat, 1, 1)
        kind = layer.kind
        if flat is not None and kind in ("conv", "pool", "gpool", "lrn"):
            trace.violations.append(f"{kind} at layer {i}: follows a fully connected layer")
        elif kind == "conv":
            if c % layer.groups or layer.out % layer.groups:
                trace.violations.append(
                    f"conv at layer {i}: channels {c}->{layer.out} not divisible by groups {layer.groups}"
                )
            out_hw = []
            for size in (h, w):
                span = size + 2 * layer.padding - layer.k
                if span < 0 or span % layer.stride:
                    trace.violations.append(
                        f"conv at layer {i}: kernel {layer.k} stride {layer.stride} "
                        f"does not tile extent {size}"
                    )
                    span = max(span, 0) - max(span, 0) % layer.stride
                out_hw.append(span // layer.stride + 1)
            c, (h, w) = layer.out, out_hw
        elif kind == "pool":
            if (layer.k, layer.stride) == (2, 2):
                for size in sorted({h, w}):
                    if size % 2:
                        trace.violations.append(f"pool at layer {i}: odd extent {size}")
                h, w = max(h // 2, 1), max(w // 2, 1)
            else:
                out_hw = []
                for size in (h, w):
                    span = size - layer.k
                    if span < 0 or span % layer.stride:
                        trace.violations.append(
                            f"pool at layer {i}: window {layer.k} stride {layer.stride} "
                            f"does not tile extent {size}"
                        )
                        span = max(span, 0) - max(span, 0) % layer.stride
                    out_hw.append(span // layer.stride + 1)
                h, w = out_hw
        elif kind == "gpool":
            h = w = 1
        elif kind == "dense":
            flat = layer.out
        elif kind == "fc":
            flat = layer.out
        trace.shapes.append((before, (c, h, w) if flat is None else (flat, 1, 1)))
    return trace


def validate(spec: ArchSpec) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    problems = []
    if spec.norm not in ("bn", "none"):
        problems.append(f"unknown norm {spec.norm!r}")
    if not spec.convs:
        problems.append("at least one conv layer is required")
    fcs = [i for i, layer in enumerate(spec.layers, start=1) if layer.kind == "fc"]
    if len(fcs) != 1:
        problems.append(f"exactly one fc layer is required, found {len(fcs)}")
    if fcs and fcs[-1] != len(spec.layers):
        problems.append(f"fc at layer {fcs[-1]}: must be the last layer")
    if fcs and spec.layers[fcs[-1] - 1].out != spec.classes:
        problems.append(
            f"fc at layer {fcs[-1]}: {spec.layers[fcs[-1] - 1].out} outputs but {spec.classes} classes"
        )
    for i, layer in enumerate(spec.layers, start=1):
        if layer.kind == "conv" and layer.k not in SUPPORTED_KERNELS:
            problems.append(f"conv at layer {i}: unsupported kernel {layer.k}")
        if layer.kind == "dropout" and not 0.0 <= layer.p < 1.0:
            problems.append(f"dropout at layer {i}: rate {layer.p} outside [0, 1)")
    problems.extend(trace_shapes(spec).violations)
    return problems


def check(spec: ArchSpec) -> ArchSpec:
    problems = validate(spec)
    if problems:
        raise ArchError("; ".join(problems))
    return spec


# ---------------------------------------------------------------------------
# presets

SIMPLENET_WIDTHS = (64, 128, 128, 128, 128, 128, 256, 256, 256, 512, 2048, 256, 256)
# kernel 1 at conv positions 11 and 12
SIMPLENET_KERNELS = (3,) * 10 + (1, 1, 3)
SIMPLENET_POOLS_AFTER = (4, 7, 9, 12)


def simplenet(name, input_shape=(3, 32, 32), classes=10, width_div=1, pools_after=SIMPLENET_POOLS_AFTER,
              dropout_pool=None, dropout_head=None) -> ArchSpec:
    """The 13-conv trunk with BN, max-pool stages, global max-pool and fc head.

    ``dropout_pool`` / ``dropout_head`` insert dropout after each pool and
    before the classifier respectively.
    """
    layers = []
    for i, (width, k) in enumerate(zip(SIMPLENET_WIDTHS, SIMPLENET_KERNELS), start=1):
        layers.append(conv(width // width_div, k))
        if i in pools_after:
            layers.append(pool())
            if dropout_pool:
                layers.append(dropout(dropout_pool))
    layers.append(GPOOL)
    if dropout_head:
        layers.append(dropout(dropout_head))
    layers.append(fc(classes))
    return ArchSpec(name, tuple(input_shape), classes, tuple(layers))


def _vgg16() -> ArchSpec:
    layers = []
    for width, reps in ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3)):
        layers.extend(conv(width, 3) for _ in range(reps))
        layers.append(pool())
    layers += [dense(4096), dropout(0.5), dense(4096), dropout(0.5), fc(1000)]
    return ArchSpec("vgg16-ref", (3, 224, 224), 1000, tuple(layers), norm="none")


def _alexnet() -> ArchSpec:
    # Caffe reference layout: grouped conv2/4/5, overlapping 3x3/2 pools
    layers = (
        conv(96, 11, stride=4, pad=0), LRN, pool(3, 2),
        conv(256, 5, groups=2), LRN, pool(3, 2),
        conv(384, 3), conv(384, 3, groups=2), conv(256, 3, groups=2), pool(3, 2),
        dense(4096), dropout(0.5), dense(4096), dropout(0.5), fc(1000),
    )
    return ArchSpec("alexnet-ref", (3, 227, 227), 1000, layers, norm="none")


_PRESETS = {
    "simplenet13-cifar10": lambda: simplenet("simplenet13-cifar10"),
    "simplenet13-cifar100": lambda: simplenet("simplenet13-cifar100", classes=100),
    "simplenet13-cifar10-dropout": lambda: simplenet(
        "simplenet13-cifar10-dropout", dropout_pool=0.2, dropout_head=0.5
    ),
    "simplenet-slim": lambda: simplenet("simplenet-slim", width_div=4),
    # 28 -> 14 -> 7: the remaining pools would hit an odd extent and are dropped
    "simplenet-slim-mnist": lambda: simplenet(
        "simplenet-slim-mnist", input_shape=(1, 28, 28), width_div=4, pools_after=(4, 7)
    ),
    "vgg16-ref": _vgg16,
    "alexnet-ref": _alexnet,
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str) -> ArchSpec:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None


def load_arch(ref: str) -> ArchSpec:
    """Resolve a preset name or a path to an architecture file."""
    if ref in _PRESETS or not os.path.isfile(ref):
        return preset(ref)
    with open(ref, encoding="utf-8") as fh:
        return parse_arch(fh.read(), name=ref)
