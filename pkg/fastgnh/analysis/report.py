try:
    import pandas as pd
except ImportError:
    raise ImportError(
        "Please run `pip install fastgnh[analysis]` if you "
        "would like to use the fastgnh analysis module."
    )

import json

from dataclasses import dataclass, field

from fastgnh.util import jsonable


@dataclass
class ExperimentReport(object):
    """
    Attributes
    ----------
    experiment: str
    table: DataFrame
        One row per measurement
    summary: dict
        Derived numbers (fitted slopes, win rates, consistency checks)
    config: dict
        The fully resolved ExperimentConfig
    """

    experiment: str
    table: pd.DataFrame
    summary: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return jsonable(
            {
                "experiment": self.experiment,
                "config": self.config,
                "summary": self.summary,
                "rows": self.table.to_dict(orient="records"),
            }
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def save(self, output=None, report=None):
        """Writes the table as CSV to `output` and the JSON report to `report`"""
        if output:
            self.table.to_csv(output, index=False)
        if report:
            with open(report, "w") as fh:
                fh.write(self.to_json())
