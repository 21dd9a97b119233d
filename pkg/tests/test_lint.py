from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from simplenet.archspec import GPOOL, PRESET_NAMES, ArchSpec, conv, fc, parse_arch, preset
from simplenet.lint import RULES, Finding, LintConfig, lint, parse_csv, render_csv, render_table, worst


def levels(report):
    return {f.rule_id: f.level for f in report}


def mutate_conv(spec, position, **changes):
    layers = list(spec.layers)
    seen = 0
    for i, layer in enumerate(layers):
        if layer.kind == "conv":
            seen += 1
            if seen == position:
                layers[i] = replace(layer, **changes)
    return replace(spec, layers=tuple(layers))


@pytest.mark.parametrize("name", [n for n in PRESET_NAMES if n.startswith("simplenet")])
def test_simplenet_presets_pass_everything(name):
    report = lint(preset(name))
    assert levels(report) == dict.fromkeys(RULES, "pass"), render_table(report)


def test_early_1x1_fails_p3_at_layer_2():
    report = lint(mutate_conv(preset("simplenet13-cifar10"), 2, k=1))
    p3 = next(f for f in report if f.rule_id == "P3")
    assert p3.level == "fail" and p3.layer_index == 2


def test_vgg16_p6_warn():
    report = levels(lint(preset("vgg16-ref")))
    assert report["P6"] == "warn"


def test_alexnet_verdicts():
    report = levels(lint(preset("alexnet-ref")))
    assert report["P5"] == "warn"   # 11x11 and 5x5 kernels
    assert report["P6"] == "warn"
    assert report["P4"] == "fail"   # pool right after the first conv


def test_every_rule_once_and_pure():
    spec = preset("vgg16-ref")
    a, b = lint(spec), lint(spec)
    assert [f.rule_id for f in a] == list(RULES)
    assert a == b


def test_p1_width_drop():
    spec = parse_arch("input 3x32x32\nclasses 10\nconv 64 k3\nconv 128 k3\nconv 96 k3\ngpool\nfc 10\n")
    p1 = lint(spec)[0]
    assert p1.level == "fail" and p1.layer_index == 3


def test_p1_ignores_head_after_first_1x1():
    spec = preset("simplenet13-cifar10")  # 2048 (1x1) -> 256 is a head, not a trunk drop
    assert lint(spec)[0].level == "pass"


def test_p2_many_widths_warns():
    body = "".join(f"conv {w} k3\n" for w in (8, 8, 16, 16, 24, 24, 32, 32, 40, 40, 48, 48, 56, 56))
    spec = parse_arch("input 3x32x32\nclasses 10\n" + body + "gpool\nfc 10\n")
    assert levels(lint(spec))["P2"] == "warn"


def test_p2_singletons_warn():
    body = "".join(f"conv {w} k3\n" for w in (8, 16, 16, 32, 32, 64))
    spec = parse_arch("input 3x32x32\nclasses 10\n" + body + "gpool\nfc 10\n")
    assert levels(lint(spec))["P2"] == "warn"   # 2 of 6 convs alone
    assert levels(lint(spec, LintConfig(max_singleton_fraction=0.5)))["P2"] == "pass"


def test_p4_early_pool_fails_and_downsample_warns():
    early = parse_arch("input 3x32x32\nclasses 10\nconv 8 k3\npool\nconv 8 k3\nconv 8 k3\ngpool\nfc 10\n")
    assert levels(lint(early))["P4"] == "fail"
    strided = parse_arch("input 3x32x32\nclasses 10\nconv 8 k3\nconv 8 k3\nconv 8 k2 s2\npool\n"
                         "conv 8 k2 s2\nconv 8 k3\nconv 8 k3\nconv 8 k3\ngpool\nfc 10\n")
    assert levels(lint(strided))["P4"] == "warn"


def test_p5_threshold_flag():
    spec = mutate_conv(preset("simplenet13-cifar10"), 5, k=5)
    assert levels(lint(spec))["P5"] == "warn"
    assert levels(lint(spec, LintConfig(large_kernel=7)))["P5"] == "pass"


def test_p6_budget_flag():
    assert levels(lint(preset("simplenet13-cifar10"), LintConfig(param_budget=5_000_000)))["P6"] == "warn"


def test_worst():
    assert worst(lint(preset("simplenet13-cifar10"))) == "pass"
    assert worst(lint(preset("vgg16-ref"))) == "fail"


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_csv_round_trip(name):
    report = lint(preset(name))
    assert parse_csv(render_csv(report)) == report


def test_csv_rejects_garbage():
    with pytest.raises(ValueError):
        parse_csv("a,b\n1,2\n")
    with pytest.raises(ValueError):
        parse_csv("rule_id,level,layer_index,message\nP9,pass,,x\n")


def test_table_lists_every_rule():
    text = render_table(lint(preset("vgg16-ref")))
    for rule in RULES:
        assert f"\n{rule} " in text


def test_finding_fields():
    f = Finding("P1", "pass", "ok")
    assert f.layer_index is None


@given(st.lists(st.integers(1, 64), min_size=1, max_size=10), st.floats(1.0, 16.0))
def test_p1_invariant_to_width_scaling(widths, scale):
    def spec_for(ws):
        return ArchSpec("w", (3, 8, 8), 4, tuple(conv(w) for w in ws) + (GPOOL, fc(4)))

    base = lint(spec_for(widths))[0].level
    scaled = lint(spec_for([max(1, round(w * scale)) for w in widths]))[0].level
    assert base == scaled
