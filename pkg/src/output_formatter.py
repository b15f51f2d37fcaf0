"""
出力フォーマッターモジュール

誤差記録・収束表をCSV（pandas）に、検証結果をテーブル（tabulate）に整形します。
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd
from tabulate import tabulate

from src.analysis import (
    INTERPOLATION_NORMS,
    NORMS,
    ErrorRecord,
    Identity19Report,
    LeadingTermReport,
    LemmaReport,
    LowerBoundReport,
    RateTable,
)

CSV_COLUMNS = [
    "d", "N", "h", "dofs",
    "l2_err", "h1_err", "h2_err",
    "l2_order", "h1_order", "h2_order",
    "cg_iters", "seconds",
]
INTERPOLATION_COLUMNS = ["pi_l2_err", "pi_h1_err", "pi_h2_err"]
FLOAT_FORMAT = "%.17g"


class OutputFormatter:
    """
    結果出力フォーマッタークラス
    """

    def __init__(self, no_timing: bool = False):
        """
        初期化

        Args:
            no_timing: True なら seconds 列を0にする（CSVをバイト単位で再現可能にする）
        """
        self.no_timing = no_timing

    def records_to_dataframe(
        self,
        records: Sequence[ErrorRecord],
        orders: Optional[Dict[str, Sequence[Optional[float]]]] = None
    ) -> pd.DataFrame:
        """
        誤差記録をCSV列順のDataFrameに変換

        Args:
            records: 誤差記録
            orders: ノルム名 -> 観測次数（先頭は None）

        Returns:
            DataFrame
        """
        with_interpolation = bool(records) and all(r.pi_l2 is not None for r in records)
        rows = []
        for k, record in enumerate(records):
            report = record.report
            row = {
                "d": record.d,
                "N": record.N,
                "h": record.h,
                "dofs": record.dofs,
                "l2_err": record.l2,
                "h1_err": record.h1,
                "h2_err": record.h2,
            }
            for norm in NORMS:
                row[f"{norm}_order"] = orders[norm][k] if orders else None
            row["cg_iters"] = getattr(report, "iterations", 0)
            row["seconds"] = 0.0 if self.no_timing else float(getattr(report, "seconds", 0.0))
            if with_interpolation:
                for norm, column in zip(INTERPOLATION_NORMS, INTERPOLATION_COLUMNS):
                    row[column] = record.error(norm)
            rows.append(row)

        columns = CSV_COLUMNS + (INTERPOLATION_COLUMNS if with_interpolation else [])
        df = pd.DataFrame(rows, columns=columns)
        for column in ("d", "N", "dofs", "cg_iters"):
            df[column] = df[column].astype(int)
        for column in ("l2_order", "h1_order", "h2_order"):
            df[column] = df[column].astype(float)
        return df

    def rate_table_to_dataframe(self, table: RateTable) -> pd.DataFrame:
        return self.records_to_dataframe(table.records, table.orders)

    def to_csv_text(self, df: pd.DataFrame) -> str:
        """ヘッダー1行、浮動小数点は有効数字17桁"""
        return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    def save_to_csv(self, df: pd.DataFrame, output_path: Union[str, Path]) -> None:
        """
        DataFrameをCSVファイルに保存

        Args:
            df: 出力するDataFrame
            output_path: 出力ファイルパス
        """
        target = Path(output_path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(self.to_csv_text(df), encoding="utf-8")

    def format_lemma_reports(self, reports: Sequence[LemmaReport]) -> str:
        """構造補題の検証結果テーブル"""
        table_data = []
        for report in reports:
            status = "PASS" if report.passed else "FAIL"
            detail = report.failures[0] if report.failures else ""
            table_data.append([report.name, report.trials, status, detail])
        headers = ["検証", "件数", "結果", "反例"]
        return tabulate(table_data, headers=headers, tablefmt="simple")

    def format_identity19(self, report: Identity19Report, threshold: float) -> str:
        rows = [[name, f"{value:.17g}"] for name, value in report.terms.items()]
        rows.append(["右辺", f"{report.rhs:.17g}"])
        rows.append(["左辺 (-f,u-uh)", f"{report.lhs:.17g}"])
        rows.append(["a_h(uh,Pi_u)-(f,Pi_u)", f"{report.defect:.17g}"])
        output = [tabulate(rows, headers=["項", "値"], tablefmt="simple")]
        status = "PASS" if report.residual <= threshold else "FAIL"
        output.append(f"\n相対残差: {report.residual:.3e}（基準: {threshold:g}以下） {status}")
        return "\n".join(output)

    def format_lower_bound(self, report: LowerBoundReport) -> str:
        rows = [[n, f"{r:.17g}"] for n, r in zip(report.Ns, report.scaled)]
        output = [tabulate(rows, headers=["N", "‖u-uh‖・N^2"], tablefmt="simple")]
        status = "PASS" if report.passed else "FAIL"
        output.append(f"\nL2下界: {report.message} {status}")
        return "\n".join(output)

    def format_leading_term(self, report: LeadingTermReport) -> str:
        rows = [
            ["a_h(u-Pi_u, Pi_u)", f"{report.energy:.17g}"],
            ["主要項", f"{report.predicted:.17g}"],
            ["比", f"{report.ratio:.6f}"],
        ]
        return tabulate(rows, headers=["量", "値"], tablefmt="simple")

    def format_rate_table(self, table: RateTable) -> str:
        """収束表の人間向け表示"""
        table_data: List[list] = []
        for k, record in enumerate(table.records):
            row = [record.N, f"{record.h:.4g}", record.dofs]
            for norm in NORMS:
                order = table.orders[norm][k]
                row.append(f"{record.error(norm):.4e}")
                row.append("-" if order is None else f"{order:.3f}")
            table_data.append(row)
        headers = ["N", "h", "dofs", "L2", "次数", "H1", "次数", "H2", "次数"]
        return tabulate(table_data, headers=headers, tablefmt="simple")
