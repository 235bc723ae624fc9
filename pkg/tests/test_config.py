import pytest

from ifasnet.config import ConfigError, build_run_config, load_run_config, read_config_file


def test_preset_overlay(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("preset = fasnet-miso\nhidden = 32  # smaller\nlr = 0.0005\nepochs = 3\nseed = 4\n"
                 "manifest = data/manifest.jsonl\n")
    run = load_run_config(f)
    assert run.preset == "fasnet-miso" and run.model.separator.miso and not run.model.separator.implicit
    assert run.model.separator.hidden == 32 and run.train.lr == 0.0005 and run.train.epochs == 3
    assert run.model.seed == run.train.seed == 4
    assert run.paths == {"manifest": "data/manifest.jsonl"}
    assert load_run_config(f, preset="ifasnet", epochs=7).train.epochs == 7
    again = build_run_config(None, read_config_file_text(tmp_path, run.to_text()))
    assert again.model == run.model and again.train == run.train


def read_config_file_text(tmp_path, text):
    g = tmp_path / "again.cfg"
    g.write_text(text)
    return read_config_file(g)


def test_section_header_optional(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("[run]\npreset = ifasnet\nframe_len = 128\nhop = 64\nsample_context = 128\n")
    assert load_run_config(f).model.framing.frame_len == 128


@pytest.mark.parametrize("values", [{"miso": "true"}, {"nope": "1"}, {"hidden": "big"},
                                    {"preset": "unknown"}, {"lr": "-1"}])
def test_rejections(values):
    with pytest.raises(ConfigError):
        build_run_config("ifasnet", values)
