"""
出力フォーマッターのテスト
"""

import io

import pandas as pd
import pytest

from src.analysis import (
    ErrorRecord,
    Identity19Report,
    LeadingTermReport,
    LemmaReport,
    LowerBoundReport,
    rate_table,
)
from src.linsolve import SolveReport
from src.output_formatter import CSV_COLUMNS, INTERPOLATION_COLUMNS, OutputFormatter


@pytest.fixture
def records():
    report = SolveReport(iterations=12, residual=1e-11, seconds=0.25, method="cg")
    return [
        ErrorRecord(h=0.5, l2=0.04, h1=0.2, h2=1.0, dofs=3, d=2, N=2, report=report),
        ErrorRecord(h=0.25, l2=0.01, h1=0.05, h2=0.25, dofs=27, d=2, N=4, report=report),
    ]


@pytest.fixture
def formatter():
    return OutputFormatter()


class TestDataFrame:
    """CSV用DataFrame"""

    def test_columns_and_types(self, formatter, records):
        df = formatter.rate_table_to_dataframe(rate_table(records))
        assert list(df.columns) == CSV_COLUMNS
        assert df["dofs"].tolist() == [3, 27]
        assert df["cg_iters"].tolist() == [12, 12]
        assert pd.isna(df.loc[0, "h2_order"])
        assert df.loc[1, "h2_order"] == pytest.approx(2.0)
        assert df.loc[1, "seconds"] == pytest.approx(0.25)

    def test_without_orders(self, formatter, records):
        df = formatter.records_to_dataframe(records[:1])
        assert df["l2_order"].isna().all()

    def test_no_timing(self, records):
        df = OutputFormatter(no_timing=True).records_to_dataframe(records)
        assert (df["seconds"] == 0.0).all()

    def test_missing_report(self, formatter):
        df = formatter.records_to_dataframe([ErrorRecord(h=0.5, l2=1.0, h1=1.0, h2=1.0)])
        assert df.loc[0, "cg_iters"] == 0

    def test_interpolation_columns(self, formatter, records):
        extended = [r.with_interpolation(r) for r in records]
        df = formatter.records_to_dataframe(extended)
        assert list(df.columns) == CSV_COLUMNS + INTERPOLATION_COLUMNS
        assert df["pi_h2_err"].tolist() == [1.0, 0.25]


class TestCsv:
    """CSVテキスト"""

    def test_header_and_precision(self, formatter):
        record = ErrorRecord(h=0.1, l2=1 / 3, h1=0.0, h2=0.0, dofs=1, d=1, N=10)
        text = formatter.to_csv_text(formatter.records_to_dataframe([record]))
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert "0.33333333333333331" in lines[1]
        assert text.endswith("\n")

    def test_round_trip_through_pandas(self, formatter, records):
        df = formatter.rate_table_to_dataframe(rate_table(records))
        parsed = pd.read_csv(io.StringIO(formatter.to_csv_text(df)))
        assert parsed["h2_err"].tolist() == df["h2_err"].tolist()

    def test_save(self, formatter, records, tmp_path):
        path = tmp_path / "out" / "rates.csv"
        formatter.save_to_csv(formatter.records_to_dataframe(records), path)
        assert path.read_text(encoding="utf-8").startswith("d,N,h,dofs")


class TestReports:
    """検証結果の表示"""

    def test_lemma_reports(self, formatter):
        text = formatter.format_lemma_reports([
            LemmaReport("unisolvence", 4),
            LemmaReport("lemma24", 2, ("box #1: 1 != 2",)),
        ])
        assert "unisolvence" in text
        assert "PASS" in text
        assert "FAIL" in text
        assert "box #1" in text

    def test_identity19(self, formatter):
        report = Identity19Report(
            lhs=-1.5, rhs=-1.5, residual=0.0, terms={"T1": -1.0, "T2": -0.5}, defect=0.125, scale=1.5
        )
        text = formatter.format_identity19(report, threshold=1e-8)
        assert "T1" in text
        assert "a_h(uh,Pi_u)-(f,Pi_u)" in text
        assert "0.125" in text
        assert text.rstrip().endswith("PASS")
        failed = Identity19Report(lhs=-1.5, rhs=-1.0, residual=0.2)
        assert formatter.format_identity19(failed, threshold=1e-8).rstrip().endswith("FAIL")

    def test_lower_bound(self, formatter):
        report = LowerBoundReport((4, 8), (0.5, 0.6), 1.2, 4.0, True, "max/min = 1.2 ≤ 4")
        text = formatter.format_lower_bound(report)
        assert "0.5" in text
        assert "PASS" in text

    def test_leading_term(self, formatter):
        text = formatter.format_leading_term(LeadingTermReport(energy=2.0, predicted=2.0))
        assert "1.000000" in text

    def test_rate_table(self, formatter, records):
        text = formatter.format_rate_table(rate_table(records))
        assert "2.000" in text
        assert "-" in text


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
