import json
import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import pandas as pd
from pythonjsonlogger import jsonlogger

from moserlab.config import settings

logger = logging.getLogger(__name__)

RUN_LOGGER_NAME = "moserlab.runs"
SUMMARY_NAME = "summary"


def sanitize(payload: Any) -> Any:
    """Non-finite floats become the strings "inf", "-inf" and "nan"""
    if isinstance(payload, dict):
        return {k: sanitize(v) for k, v in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [sanitize(v) for v in payload]
    if isinstance(payload, float) and not math.isfinite(payload):
        return str(payload)
    return payload


def strip_runtimes(payload: Any) -> Any:
    """Drop every runtime_ms field so reruns compare byte for byte"""
    if isinstance(payload, dict):
        return {k: strip_runtimes(v) for k, v in payload.items() if k != "runtime_ms"}
    if isinstance(payload, list):
        return [strip_runtimes(v) for v in payload]
    return payload


class ReportStore:
    """
    Writes subcommand reports into an output directory
    JSON with sorted keys, CSV tables through pandas, and a JSON-lines run log
    """

    def __init__(self, out_dir: Optional[Union[str, Path]] = None, deterministic: bool = False):
        self.out_dir = Path(out_dir or settings.OUTPUT_DIR)
        self.deterministic = deterministic
        self.out_dir.mkdir(exist_ok=True, parents=True)

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        if self.deterministic:
            payload = strip_runtimes(payload)
        payload = sanitize(payload)
        path = self.out_dir / f"{name}.json"
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True, allow_nan=False, default=str)
            f.write("\n")
        logger.info(f"Wrote {path}")
        return path

    def write_csv(self, name: str, table: pd.DataFrame) -> Path:
        if self.deterministic and "runtime_ms" in table.columns:
            table = table.drop(columns=["runtime_ms"])
        path = self.out_dir / f"{name}.csv"
        table.to_csv(path, index=False)
        logger.info(f"Wrote {path}")
        return path

    def load_reports(self) -> Dict[str, Dict[str, Any]]:
        """Every prior *.json report except the summary itself"""
        reports = {}
        for path in sorted(self.out_dir.glob("*.json")):
            if path.stem == SUMMARY_NAME:
                continue
            try:
                with open(path, "r") as f:
                    reports[path.stem] = json.load(f)
            except json.JSONDecodeError:
                logger.warning(f"⚠️ Skipping unreadable report {path}")
        return reports

    def aggregate(self) -> Dict[str, Any]:
        """
        Combine earlier reports into summary.json and a one-row-per-report
        summary.csv (report, command, passed, failing_count)
        """
        reports = self.load_reports()
        rows = []
        for name, report in reports.items():
            failing = report.get("failing_labels", [])
            rows.append({
                "report": name,
                "command": report.get("command", name),
                "seed": report.get("seed"),
                "passed": bool(report.get("passed", False)),
                "failing_count": len(failing),
            })
        summary = {
            "command": "report",
            "reports": reports,
            "passed": all(r["passed"] for r in rows) if rows else False,
            "failing_labels": sorted(
                f"{name}:{label}" for name, report in reports.items()
                for label in report.get("failing_labels", [])
            ),
        }
        self.write_json(SUMMARY_NAME, summary)
        self.write_csv(SUMMARY_NAME, pd.DataFrame(rows, columns=["report", "command", "seed", "passed", "failing_count"]))
        return summary


# ==================== RUN LOG ====================
def get_run_logger(path: Optional[Union[str, Path]] = None) -> logging.Logger:
    """JSON-lines logger, one event per subcommand"""
    run_logger = logging.getLogger(RUN_LOGGER_NAME)
    if not run_logger.handlers:
        path = Path(path or settings.run_log_path)
        path.parent.mkdir(exist_ok=True, parents=True)
        handler = logging.FileHandler(path)
        handler.setFormatter(jsonlogger.JsonFormatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        run_logger.addHandler(handler)
        run_logger.setLevel(logging.INFO)
        run_logger.propagate = False
    return run_logger


def log_run(command: str, seed: int, passed: bool, failing_labels: Iterable[str] = ()) -> None:
    get_run_logger().info(
        "run finished",
        extra={
            "command": command,
            "seed": seed,
            "status": "pass" if passed else "fail",
            "failing_labels": list(failing_labels),
            "finished_at": datetime.now().isoformat(),
        },
    )
