"""
Экспорт отчетов оценки: CSV, XLSX и SVG.
"""

from __future__ import annotations
from pathlib import Path
from typing import List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

from ..models.report import AngleTrace, SuccessMatrix, traces_to_rows
from .debug_logger import get_logger

logger = get_logger(__name__)

MATRIX_COLUMNS = ['env', 'policy', 'joint_i', 'joint_j', 'trials', 'successes', 'rate']
DIAGONAL_NOTE = "diagonal (i, i) = joint i damaged alone; off-diagonal (i, j) = joints i and j damaged"


class ReportExporter:
    """Экспортер отчетов оценки"""

    @staticmethod
    def success_matrix_frame(matrix: SuccessMatrix) -> pd.DataFrame:
        rows = []
        for i, j, successes in matrix.cells():
            rows.append({
                'env': matrix.env_id,
                'policy': matrix.policy_id,
                'joint_i': i,
                'joint_j': j,
                'trials': matrix.trials_per_cell,
                'successes': successes,
                'rate': successes / matrix.trials_per_cell,
            })
        return pd.DataFrame(rows, columns=MATRIX_COLUMNS)

    @staticmethod
    def export_success_matrix_csv(matrix: SuccessMatrix, file_path: Path) -> Path:
        """CSV: одна строка на клетку, UTF-8, окончания строк LF"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        frame = ReportExporter.success_matrix_frame(matrix)
        frame.to_csv(file_path, index=False, encoding='utf-8', lineterminator='\n')
        return file_path

    @staticmethod
    def export_success_matrix_xlsx(matrix: SuccessMatrix, file_path: Path) -> Path:
        """XLSX: лист с клетками и лист с матрицей долей"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        cells = ReportExporter.success_matrix_frame(matrix)
        grid = pd.DataFrame(matrix.rates, index=[f"joint {i}" for i in range(matrix.n)],
                            columns=[f"joint {j}" for j in range(matrix.n)])
        with pd.ExcelWriter(file_path, engine='openpyxl') as writer:
            cells.to_excel(writer, sheet_name='cells', index=False)
            grid.to_excel(writer, sheet_name='rates')
        return file_path

    @staticmethod
    def export_success_matrix_svg(matrix: SuccessMatrix, file_path: Path, title: Optional[str] = None) -> Path:
        """Тепловая карта с фиксированной шкалой [0, 1]"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(6, 5))
        try:
            image = ax.imshow(matrix.rates, vmin=0.0, vmax=1.0, cmap='viridis', origin='upper')
            for i, j, successes in matrix.cells():
                ax.text(j, i, f"{successes / matrix.trials_per_cell:.1f}", ha='center', va='center',
                        fontsize=7, color='white' if successes / matrix.trials_per_cell < 0.6 else 'black')
            ax.set_xticks(range(matrix.n))
            ax.set_yticks(range(matrix.n))
            ax.set_xlabel("joint j")
            ax.set_ylabel("joint i")
            ax.set_title(title or f"{matrix.env_id} / {matrix.policy_id}: success rate "
                                  f"({matrix.trials_per_cell} trials per cell)", fontsize=9)
            fig.colorbar(image, ax=ax)
            fig.text(0.01, 0.01, DIAGONAL_NOTE, fontsize=6)
            fig.savefig(file_path, format='svg', bbox_inches='tight')
        finally:
            plt.close(fig)
        return file_path

    @staticmethod
    def export_traces_csv(traces: List[AngleTrace], file_path: Path) -> Path:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(traces_to_rows(traces), columns=['case', 'step', 'value'])
        frame.to_csv(file_path, index=False, encoding='utf-8', lineterminator='\n')
        return file_path

    @staticmethod
    def export_traces_svg(traces: List[AngleTrace], file_path: Path, value_label: str,
                          dt: float, target: Optional[float] = None) -> Path:
        """Сплошные линии - сценарии повреждений, черная пунктирная - без повреждений"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(7, 4))
        try:
            for trace in traces:
                times = [dt * (step + 1) for step in range(len(trace))]
                if trace.reference:
                    ax.plot(times, trace.values, 'k--', linewidth=1.5, label=trace.label)
                else:
                    ax.plot(times, trace.values, linewidth=1.0, label=f"{{{trace.label}}}")
            if target is not None:
                ax.axhline(target, color='grey', linewidth=0.5)
            ax.set_xlabel("time, s")
            ax.set_ylabel(value_label)
            ax.legend(fontsize=6, ncol=2)
            fig.savefig(file_path, format='svg', bbox_inches='tight')
        finally:
            plt.close(fig)
        return file_path
