"""
共通フィクスチャ
"""
import numpy as np
import pytest

from app.causal_ceo import rdf
from app.causal_ceo.finite_bt.pmf import SOURCE, OBSERVATION, Axis, FinitePmf, deterministic_copy_toy
from app.causal_ceo.models import ChannelSet, SourceModel


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture
def memoryless_model():
    return SourceModel(a=0.0, sigma_v2=1.0)


@pytest.fixture
def two_unit_channels():
    return ChannelSet(sigma_w2=[1.0, 1.0])


@pytest.fixture
def symmetric_query():
    """a=0, σ_V²=1, σ_W²=(1,1), d=0.5"""
    return rdf.make_query(0.0, 1.0, [1.0, 1.0], 0.5)


@pytest.fixture
def copy_toy():
    return deterministic_copy_toy()


@pytest.fixture
def noiseless_binary_pair():
    """X_1, X_2 独立一様の2値、Y_i = X_i"""
    axes = [
        Axis(name=SOURCE, time=1, size=2),
        Axis(name=OBSERVATION, time=1, observer=1, size=2),
        Axis(name=SOURCE, time=2, size=2),
        Axis(name=OBSERVATION, time=2, observer=1, size=2),
    ]
    table = {(x1, x1, x2, x2): 0.25 for x1 in range(2) for x2 in range(2)}
    return FinitePmf.from_outcomes(axes, table)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """logs/ や出力ファイルを一時ディレクトリに作る"""
    monkeypatch.chdir(tmp_path)
    return tmp_path
