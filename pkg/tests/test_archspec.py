import pytest
from hypothesis import given
from hypothesis import strategies as st

from simplenet.archspec import (PRESET_NAMES, ArchError, check, load_arch, normalized, parse_arch, preset,
                                render_arch, validate)


def test_parse_minimal():
    spec = parse_arch("input 3x32x32\nclasses 10\nconv 64 k3\npool\nfc 10\n")
    assert spec.input == (3, 32, 32) and spec.classes == 10
    assert [layer.kind for layer in spec.layers] == ["conv", "pool", "fc"]
    assert len(spec.convs) == 1 and spec.convs[0].out == 64
    assert validate(spec) == []


def test_unsupported_kernel_has_line_number():
    with pytest.raises(ArchError, match="unsupported kernel 4") as info:
        parse_arch("input 3x32x32\nclasses 10\n# comment\nconv 64 k4\n")
    assert info.value.line == 4
    assert str(info.value).startswith("line 4:")


@pytest.mark.parametrize("text, line", [
    ("input 3x32x32\nclasses 10\nbogus 3\n", 3),
    ("input 3x32\n", 1),
    ("input 3x32x32\nclasses\n", 2),
    ("input 3x32x32\nclasses 10\nconv 64\n", 3),
    ("input 3x32x32\nclasses 10\ndropout 1.0\n", 3),
    ("input 3x32x32\nclasses 10\ndropout\n", 3),
    ("input 3x32x32\nclasses 10\ngpool 2\n", 3),
    ("input 3x32x32\nclasses 10\nconv 8 k3 q2\n", 3),
])
def test_parse_errors(text, line):
    with pytest.raises(ArchError) as info:
        parse_arch(text)
    assert info.value.line == line


def test_missing_directives():
    with pytest.raises(ArchError, match="input"):
        parse_arch("classes 10\n")
    with pytest.raises(ArchError, match="classes"):
        parse_arch("input 1x2x2\n")


def test_comments_and_blank_lines():
    spec = parse_arch("# net\n\ninput 1x4x4   # gray\nclasses 2\nconv 4 k3\ngpool\nfc 2\n")
    assert validate(spec) == []


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_preset_validates_and_round_trips(name):
    spec = preset(name)
    assert validate(spec) == []
    assert normalized(parse_arch(render_arch(spec))) == normalized(spec)
    assert render_arch(parse_arch(render_arch(spec))) == render_arch(spec)


def test_simplenet_preset_layout():
    spec = preset("simplenet13-cifar10")
    assert [c.out for c in spec.convs] == [64, 128, 128, 128, 128, 128, 256, 256, 256, 512, 2048, 256, 256]
    assert [c.k for c in spec.convs] == [3] * 10 + [1, 1, 3]
    kinds = [layer.kind for layer in spec.layers]
    conv_index = 0
    pools_after = []
    for kind in kinds:
        if kind == "conv":
            conv_index += 1
        elif kind == "pool":
            pools_after.append(conv_index)
    assert pools_after == [4, 7, 9, 12]
    assert kinds[-2:] == ["gpool", "fc"] and spec.layers[-1].out == 10


def test_slim_is_quarter_width():
    assert [c.out for c in preset("simplenet-slim").convs] == [16, 32, 32, 32, 32, 32, 64, 64, 64, 128, 512, 64, 64]


def test_cifar100_differs_only_in_classes():
    a, b = preset("simplenet13-cifar10"), preset("simplenet13-cifar100")
    assert b.classes == 100 and b.layers[:-1] == a.layers[:-1] and b.layers[-1].out == 100


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("nope")
    with pytest.raises(KeyError):
        load_arch("nope")


def test_load_arch_from_file(tmp_path):
    path = tmp_path / "net.arch"
    path.write_text(render_arch(preset("simplenet-slim")))
    assert normalized(load_arch(str(path))) == normalized(preset("simplenet-slim"))


def test_odd_extent_message():
    spec = parse_arch("input 1x10x10\nclasses 2\nconv 4 k3\npool\npool\ngpool\nfc 2\n")
    assert validate(spec) == ["pool at layer 3: odd extent 5"]


def test_two_fc_layers_violation():
    spec = parse_arch("input 1x4x4\nclasses 2\nconv 4 k3\nfc 2\nfc 2\n")
    assert any("exactly one fc" in v for v in validate(spec))
    with pytest.raises(ArchError):
        check(spec)


@pytest.mark.parametrize("body, fragment", [
    ("conv 4 k3\nfc 2\ngpool\n", "must be the last layer"),
    ("conv 4 k3\ngpool\nfc 3\n", "3 outputs but 2 classes"),
    ("gpool\nfc 2\n", "at least one conv"),
    ("conv 4 k5 p0\ngpool\nfc 2\n", "does not tile"),
    ("conv 3 k3 g2\ngpool\nfc 2\n", "not divisible by groups"),
])
def test_violations(body, fragment):
    spec = parse_arch("input 2x4x4\nclasses 2\n" + body)
    assert any(fragment in v for v in validate(spec)), validate(spec)


layer_lines = st.one_of(
    st.builds(lambda o, k: f"conv {o} k{k}", st.integers(1, 64), st.sampled_from([1, 3, 5])),
    st.just("pool"), st.just("lrn"),
    st.builds(lambda p: f"dropout {p!r}", st.floats(0, 0.99)),
)


@given(st.lists(layer_lines, max_size=8), st.integers(1, 100))
def test_render_parse_round_trip(lines, classes):
    text = "\n".join(["input 3x16x16", f"classes {classes}", *lines, "gpool", f"fc {classes}"]) + "\n"
    spec = parse_arch(text)
    assert parse_arch(render_arch(spec), spec.name) == spec
