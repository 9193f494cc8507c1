import numpy as np
import pytest

import gradcases

TOL = 1e-4


@pytest.mark.parametrize("case", sorted(gradcases.LAYER_CASES))
def test_layer_gradient(case):
    for seed in range(3):
        assert gradcases.LAYER_CASES[case](np.random.default_rng(seed)) < TOL


@pytest.mark.parametrize("kind", ["basic-rgb", "early", "late", "vgg"])
def test_network_gradient(kind):
    worst, skipped = gradcases.network_case(kind, probes=2)
    assert worst < TOL
    assert skipped <= 4
