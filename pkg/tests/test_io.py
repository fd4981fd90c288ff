import pytest
from numpy.testing import assert_array_equal

from sls_realization.realization.hankel import add_noise
from sls_realization.system import generate_markov
from sls_realization.utils import io
from sls_realization.utils.errors import FormatError


@pytest.fixture
def markov_file(tmp_path, example_markov):
    filename = str(tmp_path / "markov.csv")
    io.write_markov(example_markov, filename)
    return filename


def test_markov_file_is_exact(tmp_path, example_markov):
    noisy = add_noise(example_markov, "snr", 30.0, seed=2)
    filename = str(tmp_path / "noisy" / "markov.csv")
    io.write_markov(noisy, filename)
    restored = io.read_markov(filename)

    assert restored.band == noisy.band
    assert restored.order == 3
    assert restored.noise_std == noisy.noise_std
    assert_array_equal(restored.blocks, noisy.blocks)


def test_full_markov_file(tmp_path, scalar_model):
    full = generate_markov(scalar_model)
    filename = str(tmp_path / "full.csv")
    io.write_markov(full, filename)
    restored = io.read_markov(filename)

    assert restored.is_full
    assert_array_equal(restored.blocks, full.blocks)


def _rewrite(filename, line_no, text):
    with open(filename) as f:
        lines = f.read().splitlines()
    lines[line_no - 1] = text
    with open(filename, "w") as f:
        f.write("\n".join(lines) + "\n")


def test_wrong_field_count(markov_file):
    _rewrite(markov_file, 2, "1,1,0.5")

    with pytest.raises(FormatError, match="line 2") as info:
        io.read_markov(markov_file)
    assert info.value.line == 2


def test_non_numeric_entry(markov_file):
    _rewrite(markov_file, 3, "2,1,0.1,abc,0.3,0.4")

    with pytest.raises(FormatError) as info:
        io.read_markov(markov_file)
    assert info.value.line == 3
    assert info.value.field == "entries"


def test_index_outside_band(markov_file):
    _rewrite(markov_file, 3, "40,2,0.1,0.2,0.3,0.4")

    with pytest.raises(FormatError, match="outside the stored band") as info:
        io.read_markov(markov_file)
    assert info.value.field == "k,l"


def test_missing_header_field(markov_file):
    _rewrite(markov_file, 1, '{"N": 353, "p": 2, "m": 2, "n": 3, "band": 12, "noise_bound": 0.0}')

    with pytest.raises(FormatError) as info:
        io.read_markov(markov_file)
    assert info.value.field == "noise_std"


def test_missing_blocks(markov_file):
    with open(markov_file) as f:
        lines = f.read().splitlines()
    with open(markov_file, "w") as f:
        f.write("\n".join(lines[:-1]) + "\n")

    with pytest.raises(FormatError, match="1 blocks missing"):
        io.read_markov(markov_file)


def test_model_json(tmp_path, example_model):
    filename = str(tmp_path / "model.json")
    io.write_model(example_model, filename)
    restored = io.read_model(filename)

    assert_array_equal(restored.switching.phi, example_model.switching.phi)
    assert_array_equal(restored.states[2].stacked(), example_model.states[2].stacked())


def test_malformed_json(tmp_path):
    filename = tmp_path / "model.json"
    filename.write_text('{"states": [')

    with pytest.raises(FormatError, match="Invalid JSON"):
        io.read_model(str(filename))


def test_yaml_must_be_mapping(tmp_path):
    filename = tmp_path / "config.yaml"
    filename.write_text("- 1\n- 2\n")

    with pytest.raises(FormatError, match="mapping"):
        io.read_yaml(str(filename))
