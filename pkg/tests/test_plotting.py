import numpy as np
import pytest

from benthic.core.errors import DomainError
from benthic.core.plotting import PlotKind, PlotStyle, Series, emit_plot


def _series():
    t = np.linspace(0.0, 6.0, 25)
    return [
        Series(label='macro', x=t.tolist(), y=np.exp(-t).tolist()),
        Series(label='micro', x=t.tolist(), y=np.exp(-1.1 * t).tolist(), kind=PlotKind.POINTS),
    ]


def test_line_ids(tmp_path):
    path = emit_plot(_series(), PlotStyle(title='decay'), tmp_path / 'decay.svg')
    svg = path.read_text()
    assert svg.count('id="series-0"') == 1
    assert svg.count('id="series-1"') == 1


def test_histogram_bins(tmp_path):
    edges = np.linspace(0.0, 1.0, 51)
    counts = np.arange(50)
    bars = Series(label='eta=0.008', x=edges.tolist(), y=counts.tolist(), kind=PlotKind.BAR)
    svg = emit_plot([bars], PlotStyle(xlabel='X', ylabel='count'), tmp_path / 'hist.svg').read_text()
    for j in range(50):
        assert svg.count(f'id="bin-{j}"') == 1
    assert 'id="bin-50"' not in svg


def test_identical_input_gives_identical_bytes(tmp_path):
    a = emit_plot(_series(), PlotStyle(logy=True), tmp_path / 'a.svg').read_bytes()
    b = emit_plot(_series(), PlotStyle(logy=True), tmp_path / 'b.svg').read_bytes()
    assert a == b


def test_creates_parent_directory(tmp_path):
    path = emit_plot(_series(), PlotStyle(), tmp_path / 'nested' / 'plot.svg')
    assert path.exists()


def test_empty_input(tmp_path):
    with pytest.raises(DomainError):
        emit_plot([], PlotStyle(), tmp_path / 'none.svg')
    with pytest.raises(DomainError):
        emit_plot([Series(label='x', x=[], y=[])], PlotStyle(), tmp_path / 'none.svg')


def test_mismatched_lengths(tmp_path):
    with pytest.raises(DomainError):
        emit_plot([Series(label='x', x=[0, 1], y=[1.0])], PlotStyle(), tmp_path / 'bad.svg')
    with pytest.raises(DomainError):
        emit_plot([Series(label='h', x=[0, 0.5, 1], y=[1, 2, 3], kind=PlotKind.BAR)], PlotStyle(), tmp_path / 'bad.svg')
