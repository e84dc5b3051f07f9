import json

import pytest

from fracperc.cli import ERROR, FAILED, OK, main
from fracperc.experiment import ExperimentConfig, dumps_record, run
from fracperc.grid import SurvivalTree
from fracperc.percolation import ModelSpec
from fracperc.render import read_ppm

CLASSICAL = ["--kind", "classical", "--N", "3", "--p", "0.5", "--depth", "3", "--seed", "7"]


def test_generate_and_render(tmp_path, capsys):
    tree = tmp_path / "t.json"
    assert main(["generate", *CLASSICAL, "--out", str(tree)]) == OK
    t = SurvivalTree.loads(tree.read_text())
    assert t.depth == 3
    img = tmp_path / "t.ppm"
    assert main(["render", "--tree", str(tree), "--pixels", "27", "--out", str(img)]) == OK
    assert int((read_ppm(img.read_bytes())[:, :, 0] == 0).sum()) == t.count(3)


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["generate", *CLASSICAL, "--out", str(a)])
    main(["generate", *CLASSICAL, "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_exit_codes(capsys):
    assert main(["bound", "--levels", "2", "--length", "50"]) == OK
    assert main(["frostman", "--fat-cantor", "2,2", "--depth", "8", "--alpha", "1.93"]) == OK
    assert main(["frostman", "--fat-cantor", "2,2", "--depth", "8", "--alpha", "1.97"]) == FAILED
    assert main(["qs-check", "--fat-cantor", "2,2", "--depth", "1", "--map", "power:2",
                 "--eta", "identity"]) == FAILED
    assert main(["generate", "--kind", "classical"]) == ERROR
    assert main(["nonsense"]) == ERROR
    assert main(["render", "--fat-cantor", "2,1", "--d", "3", "--depth", "1",
                 "--out", "/dev/null"]) == ERROR
    err = capsys.readouterr().err
    assert "UnsupportedDimension" in err


def test_dim_and_gaps(capsys):
    assert main(["dim", "--fat-cantor", "2,2", "--depth", "5"]) == OK
    assert "1.953445" in capsys.readouterr().out
    assert main(["gaps", "--fat-cantor", "2,2", "--depth", "2", "--delta", "0.17"]) == FAILED
    assert main(["gaps", "--fat-cantor", "2,2", "--depth", "2", "--delta", "0.18"]) == OK


def test_config_file(tmp_path):
    cfg = {"model": ModelSpec.classical(2, 0.9).to_config(), "depth": 3, "trials": 4,
           "seed": 5, "analyses": ["subtree", "dimension"]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    code = main(["mc", "--config", str(path), "--out", str(out)])
    assert code in (OK, FAILED)
    rec = json.loads((out / "record.json").read_text())
    assert rec["config"]["seed"] == 5 and len(rec["trials"]) == 4
    assert "seconds" in json.loads((out / "timing.json").read_text())


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(ModelSpec.classical(2, 0.5), 3, trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(ModelSpec.classical(2, 0.5), 3, analyses=("qs-guess",))


def test_record_round_trip_and_determinism(tmp_path):
    cfg = ExperimentConfig(ModelSpec.fat(2, {"form": "one_minus_geometric", "c": 1.0, "a": 0.5}),
                           5, trials=6, seed=3, analyses=("subtree", "gaps", "frostman", "dimension"),
                           condition=True)
    a, b = run(cfg), run(cfg)
    assert dumps_record(a) == dumps_record(b)
    assert ExperimentConfig.from_dict(a["config"]) == cfg


def test_workers_do_not_change_record():
    cfg = ExperimentConfig(ModelSpec.classical(2, 0.8), 4, trials=8, seed=1,
                           analyses=("subtree", "dimension"))
    assert dumps_record(run(cfg, 1)) == dumps_record(run(cfg, 2))
