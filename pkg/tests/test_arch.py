import numpy as np
import pytest

import tables
from wcecnn import arch
from wcecnn.network import Network, network_forward
from wcecnn.optim import TrainConfig, init_params


@pytest.mark.parametrize("kind", sorted(tables.TOTALS))
def test_param_totals(kind):
    _, total, _ = arch.param_count(arch.build(kind))
    assert total == tables.TOTALS[kind]


@pytest.mark.parametrize("kind", sorted(tables.TABLES))
def test_shapes_follow_table_rows(kind):
    spec = arch.build(kind)
    assert tables.traced_shapes(spec) == tables.table_shapes(tables.TABLES[kind])


@pytest.mark.parametrize("kind", sorted(tables.TABLES))
def test_row_weights_follow_table(kind):
    rows, _, _ = arch.param_count(arch.build(kind))
    assert [r.weights for r in rows] == [row[4] for row in tables.TABLES[kind]]


def test_late_fusion_concat_point():
    shapes = dict(arch.build("late").activation_shapes())
    assert shapes["concat"] == (64, 7, 7)


def test_basic_rgb_matches_early_except_first_layer():
    basic = arch.build("basic-rgb").param_shapes()
    early = arch.build("early").param_shapes()
    assert basic["rgb.0.w"] == (64, 3, 25, 25) and early["rgbhl.0.w"] == (64, 5, 25, 25)
    assert [s for n, s in basic.items() if n != "rgb.0.w"] == \
           [s for n, s in early.items() if n != "rgbhl.0.w"]


def test_param_table_text():
    text = arch.format_param_table(arch.build("late"))
    assert "Total Number of Parameters: 2,003,072" in text
    assert "CONCAT" in text and "7*7*64*512 = 1,605,632" in text


@pytest.mark.parametrize("kind", ["basic-rgb", "late"])
def test_forward_shapes_agree_with_declared(kind):
    spec = arch.build(kind, input_size=32)
    net = Network(spec, init_params(spec, TrainConfig(init="scaled-gaussian", precision="float64")))
    x = np.random.default_rng(0).standard_normal((2,) + spec.input_shape)
    trace = network_forward(net, x)
    assert trace.logits.shape == (2, 6)
    np.testing.assert_allclose(trace.probs.sum(axis=1), 1.0)


def test_unknown_arch_rejected():
    with pytest.raises(ValueError):
        arch.build("resnet")
