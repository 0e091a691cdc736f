import logging

import pytest

from udslab.cli.outputs import (
    TraceRow,
    average_traces,
    collect_traces,
    read_trace,
    summary_columns,
    trace_filename,
    write_trace_analysis,
)
from udslab.core.errors import TraceFileError
from udslab.core.file_utils import write_csv
from udslab.modules.metrics import COSINE_SENTINEL


def row(step, grad_norm=1.0, cos_identity=COSINE_SENTINEL):
    return TraceRow(step, 100, grad_norm, grad_norm, 0.5, -0.5, cos_identity)


def test_names_and_columns():
    assert trace_filename("UDS_EDIT", 3) == "trace_UDS_EDIT_seed3.csv"
    assert summary_columns(2)[-2:] == ["final_0", "final_1"]


def test_average_excludes_sentinels_and_truncates():
    first = [row(1, 1.0, 0.2), row(2, 3.0, COSINE_SENTINEL), row(3)]
    second = [row(1, 3.0, COSINE_SENTINEL), row(2, 5.0, COSINE_SENTINEL)]
    averaged = average_traces([first, second], logger=logging.getLogger("test.outputs"))
    assert len(averaged) == 2
    assert averaged[0].grad_norm == 2.0
    assert averaged[0].cos_identity == pytest.approx(0.2)
    assert averaged[1].cos_identity == COSINE_SENTINEL
    with pytest.raises(ValueError):
        average_traces([])


def test_collect_and_analyse(tmp_path):
    header = ("step", "t", "grad_norm", "grad_norm_normalized", "cos_recon", "cos_cls", "cos_identity")
    for seed in (10, 2):
        write_csv(tmp_path / trace_filename("ISM", seed), header, [row(1).values(), row(2).values()])
    (tmp_path / "summary.csv").write_text("method\nISM\n", encoding="utf-8")

    grouped = collect_traces(tmp_path)
    assert list(grouped) == ["ISM"]
    assert [seed for seed, _ in grouped["ISM"]] == [2, 10]

    analysis = write_trace_analysis(grouped, tmp_path / "analysis")
    path, rows = analysis["ISM"]
    assert path.name == "analysis_ISM.csv"
    assert read_trace(path) == rows
    assert path.read_text(encoding="utf-8").splitlines()[1].startswith("1,100,")


def test_read_trace_errors(tmp_path):
    missing = tmp_path / "trace_SDS_seed0.csv"
    with pytest.raises(TraceFileError):
        read_trace(missing)
    missing.write_text("step,t,grad_norm,grad_norm_normalized,cos_recon,cos_cls,cos_identity\n", encoding="utf-8")
    with pytest.raises(TraceFileError, match="keine Einträge"):
        read_trace(missing)
    missing.write_text("step,t,grad_norm,grad_norm_normalized,cos_recon,cos_cls,cos_identity\n1,2,x,1,1,1,1\n", encoding="utf-8")
    with pytest.raises(TraceFileError, match="Zeile 2"):
        read_trace(missing)
    with pytest.raises(TraceFileError, match="fehlt"):
        collect_traces(tmp_path / "nowhere")


def test_analysis_write_failure_raises(tmp_path):
    header = ("step", "t", "grad_norm", "grad_norm_normalized", "cos_recon", "cos_cls", "cos_identity")
    write_csv(tmp_path / trace_filename("SDS", 0), header, [row(1).values()])
    (tmp_path / "analysis" / "analysis_SDS.csv").mkdir(parents=True)

    with pytest.raises(TraceFileError, match="nicht geschrieben"):
        write_trace_analysis(collect_traces(tmp_path), tmp_path / "analysis")
