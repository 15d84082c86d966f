import numpy as np
import pytest

from sinrlab.errors import ConfigError
from sinrlab.experiment.config import dumps_config, load_config, profile_config


def test_paper_profile_defaults():
    cfg = load_config()
    assert cfg.profile == "paper" and cfg.n_elements == 512
    assert cfg.model.n_beams == 24 and cfg.train.batch_size == 8192 and cfg.train.max_epochs == 15000
    assert cfg.train.warmup_epochs == 40 and cfg.train.cycle_epochs == 100
    scn = cfg.scenario()
    assert scn.beamformer.total_power == pytest.approx(33.28)
    assert scn.array.element_spacing == pytest.approx(scn.link.wavelength / 2)
    assert cfg.pqs_config().n_slots == 200


def test_desk_profile():
    cfg = load_config(profile="desk")
    assert cfg.n_elements == 64 and (cfg.array.rows, cfg.array.cols) == (8, 8)
    assert cfg.model.n_beams == 8 and cfg.train.min_group_size == 3
    assert cfg.train.batch_size == 256 and cfg.train.max_epochs == 2000
    assert (cfg.train.warmup_epochs, cfg.train.cycle_epochs) == (20, 50)
    assert cfg.dmhsa_config("csi").feature_dim == 66
    assert cfg.dmhsa_config("geo").feature_dim == 3


def test_file_overrides_and_explicit_arguments(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('profile = "desk"\nseed = 7\narray.rows = 4\ntrain.max_epochs = 30\n'
                    'area.clusters = [[0.0, 0.0, 80.0, 1.0]]\n')
    cfg = load_config(path)
    assert cfg.profile == "desk" and cfg.seed == 7 and cfg.array.rows == 4 and cfg.train.max_epochs == 30
    assert cfg.area.clusters == ((0.0, 0.0, 80.0, 1.0),)
    cfg = load_config(path, seed=11, variant="csi")
    assert cfg.seed == 11 and cfg.variant == "csi"


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    "array.bogus = 1\n",
    "nosection.rows = 1\n",
    'array.rows = "eight"\n',
    "train.max_epochs = 2.5\n",
    "seed = true\n",
    'variant = "svd"\n',
    'profile = "huge"\n',
    "array.n_elements = 100\n",
    "model.n_channels = 6\n",
    "train.lr_min = 0.1\n",
    "area.clusters = [[0.0, 0.0, -1.0, 1.0]]\n",
    "pqs.n_priority_classes = 1\n",
    "link.noise_temperature_k = 0.0\n",
    "this is not toml\n",
])
def test_invalid_configs_rejected(tmp_path, text):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.toml")


@pytest.mark.parametrize("profile", ["paper", "desk"])
def test_dumps_round_trip(tmp_path, profile):
    cfg = load_config(profile=profile, seed=3, variant="csi")
    path = tmp_path / "echo.toml"
    path.write_text(dumps_config(cfg))
    assert load_config(path) == cfg


def test_to_dict_is_plain():
    d = profile_config("desk").to_dict()
    assert d["array"]["rows"] == 8 and d["pqs"]["population"] == 30
    assert np.isfinite(d["link"]["rx_gain_dbi"])
