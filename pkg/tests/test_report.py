import pytest

from ltsdem.engine import emit_trace, run
from ltsdem.report import FIGURES, render_report
from ltsdem.scenarios import build_particle_pairs


@pytest.fixture(scope="module")
def trace_dir(tmp_path_factory):
    world = build_particle_pairs(2, seed=5)
    run(world, 2.0)
    out = tmp_path_factory.mktemp("trace")
    emit_trace(world.trace, out)
    return out


def test_renders_all_figures(trace_dir):
    written = render_report(trace_dir)
    assert [p.name for p in written] == list(FIGURES)
    for path in written:
        data = path.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"


def test_separate_out_dir(trace_dir, tmp_path):
    out = tmp_path / "figs"
    written = render_report(trace_dir, out)
    assert all(p.parent == out for p in written)
    assert all(p.exists() for p in written)


def test_rejects_foreign_csv(tmp_path):
    (tmp_path / "sweep.csv").write_text("a,b\n1,2\n")
    (tmp_path / "cluster_updates.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="unexpected columns"):
        render_report(tmp_path)
