import copy

import numpy as np
import pytest
import yaml

from fracspde.config import dump_config, load_config, parse_config
from fracspde.errors import ConfigError, GridWarning

BASE = {
    "model": {"alpha": 2.0, "beta": 0.5},
    "grid": {"T": 1.0, "nt": 16, "half_width": 8.0, "nx": 64},
    "coefficients": {
        "b": {"family": "linear", "params": {"lam": 0.0}},
        "sigma": {"family": "bounded_sine", "params": {"A": 1.0, "omega": 1.0}},
    },
    "initial": {"kind": "constant", "values": 1.0},
    "ensemble": {"replicas": 10, "base_seed": 3},
    "truncation": {"N_list": [1.0, 2.0]},
    "probes": {"times": [0.5, 1.0], "positions": [0.0], "moment_orders": [2, 4]},
}


def edit(path, value):
    raw = copy.deepcopy(BASE)
    *head, last = path.split(".")
    node = raw
    for key in head:
        node = node[key]
    if value is None:
        del node[last]
    else:
        node[last] = value
    return raw


def test_roundtrip():
    cfg = parse_config(BASE)
    assert parse_config(yaml.safe_load(dump_config(cfg))) == cfg
    assert cfg.params.ratio == 0.25 and cfg.grid_spec.nx == 64
    assert cfg.sigma.sup_norm == 1.0 and cfg.u0_sup == 1.0


def test_load_from_file(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text(yaml.safe_dump(BASE))
    assert load_config(f) == parse_config(BASE)
    f.write_text("model: [unclosed")
    with pytest.raises(ConfigError):
        load_config(f)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


@pytest.mark.parametrize(
    "path,value",
    [
        ("extra", {}),
        ("grid.dx", 0.1),
        ("model.beta", 1.5),
        ("model.alpha", 0.4),
        ("grid.nx", 48),
        ("coefficients.b.family", "quadratic"),
        ("coefficients.sigma.params", {"A": 1.0}),
        ("coefficients", {"b": {"family": "zero"}}),
        ("grid", None),
        ("initial.kind", "gaussian"),
        ("initial.values", [1.0, 2.0]),
        ("ensemble.replicas", 0),
        ("ensemble.base_seed", -1),
        ("truncation.N_list", [2.0, 1.0]),
        ("probes.times", [0.0]),
        ("probes.times", [2.0]),
        ("probes.times", [0.01]),
        ("probes.positions", [9.0]),
        ("probes.moment_orders", [0.5]),
    ],
)
def test_rejects(path, value):
    with pytest.raises(ConfigError):
        parse_config(edit(path, value))


def test_snapping_warns():
    with pytest.warns(GridWarning):
        cfg = parse_config(edit("probes.positions", [0.1]))
    assert cfg.probe_points()[0] == (0.5, 0.0)


def test_initial_kinds():
    spike = parse_config(edit("initial", {"kind": "spike", "values": {"position": 0.0, "mass": 2.0}}))
    u = spike.initial_array()
    assert np.sum(u) * spike.grid_spec.dx == pytest.approx(2.0) and u[32] > 0
    table = parse_config(edit("initial", {"kind": "table", "values": list(range(64))}))
    assert table.initial_array()[5] == 5.0


def test_digest_payload_ignores_probes():
    a = parse_config(BASE).digest_payload()
    b = parse_config(edit("probes.times", [1.0])).digest_payload()
    assert a == b and set(a) == {"model", "grid", "coefficients", "initial"}
