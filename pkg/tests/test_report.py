import numpy as np
import pytest

from evps.evaluation import BinnedReport, ErrorMap
from evps.network import TrainHistory
from evps.report import (save_binned_figure, save_error_figure,
                         save_loss_figure, write_history_csv, write_report)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def sample_binned():
    return BinnedReport(np.array([1, 3]), np.array([2, 4]),
                        np.array([3.25, np.nan]), np.array([7, 0]))


class TestWriteReport:
    def test_sections_and_formatting(self, tmp_path):
        path = tmp_path / "report.txt"
        write_report(path, {"mae_degrees": 4.5, "pixels": 120},
                     {"source": "events.evt", "contrast": 0.2},
                     binned=sample_binned())
        text = path.read_text()
        lines = text.splitlines()
        assert lines[0].startswith("#")
        assert "[summary]" in lines
        assert "[config]" in lines
        assert "[bins]" in lines
        assert "mae_degrees\t4.500000000" in lines
        assert "pixels\t120" in lines
        # config keys come out sorted
        assert lines.index("contrast\t0.200000000") < lines.index("source\tevents.evt")
        assert "bin\tlo\thi\tpixels\tmae_degrees" in lines
        assert "1-2\t1\t2\t7\t3.250000000" in lines
        assert "3-4\t3\t4\t0\tnan" in lines
        assert text.endswith("\n")

    def test_bins_optional(self, tmp_path):
        path = tmp_path / "plain.txt"
        write_report(path, {"mae_degrees": 1.0}, {})
        assert "[bins]" not in path.read_text()

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for p in (a, b):
            write_report(p, {"mae_degrees": 2.0}, {"z": 1, "a": 2},
                         binned=sample_binned())
        assert a.read_bytes() == b.read_bytes()


class TestHistoryCsv:
    def test_with_validation(self, tmp_path):
        hist = TrainHistory(losses=[0.5, 0.25], val_losses=[0.6, 0.3])
        path = tmp_path / "hist.csv"
        write_history_csv(hist, path)
        assert path.read_text() == ("epoch,loss,val_loss\n"
                                    "0,0.500000000,0.600000000\n"
                                    "1,0.250000000,0.300000000\n")

    def test_without_validation(self, tmp_path):
        hist = TrainHistory(losses=[0.5])
        path = tmp_path / "hist.csv"
        write_history_csv(hist, path)
        assert path.read_text() == "epoch,loss,val_loss\n0,0.500000000,\n"


class TestFigures:
    def test_error_figure(self, tmp_path):
        rng = np.random.default_rng(0)
        errmap = ErrorMap(rng.uniform(0, 30, size=(8, 8)),
                          rng.random((8, 8)) > 0.2)
        path = tmp_path / "err.png"
        save_error_figure(errmap, path)
        raw = path.read_bytes()
        assert raw[:8] == PNG_MAGIC and len(raw) > 1000

    def test_binned_figure(self, tmp_path):
        path = tmp_path / "bins.png"
        save_binned_figure(sample_binned(), path)
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_loss_figure(self, tmp_path):
        path = tmp_path / "loss.png"
        save_loss_figure(TrainHistory(losses=[0.9, 0.5, 0.1],
                                      val_losses=[1.0, 0.6, 0.2]), path)
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_loss_figure_without_validation(self, tmp_path):
        path = tmp_path / "loss2.png"
        save_loss_figure(TrainHistory(losses=[0.9, 0.5]), path)
        assert path.read_bytes()[:8] == PNG_MAGIC
