"""Estimator output container and the per-iteration trace CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = ("iter", "node_kind", "node_id", "coord", "mean", "variance")


@dataclass
class BPResult:
    """Final beliefs plus the per-iteration trace of every coordinate.

    Trace arrays have shape ``(n_iter + 1, nodes, 2)``; row 0 holds the
    initialization used before the first iteration.
    """

    target_mean: np.ndarray
    target_var: np.ndarray
    receiver_mean: np.ndarray
    receiver_var: np.ndarray
    target_trace: np.ndarray
    target_var_trace: np.ndarray
    receiver_trace: np.ndarray
    receiver_var_trace: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def n_iter(self) -> int:
        return len(self.target_trace) - 1

    def trace_rows(self):
        for it in range(len(self.target_trace)):
            for kind, means, variances in (("target", self.target_trace, self.target_var_trace),
                                           ("receiver", self.receiver_trace, self.receiver_var_trace)):
                for node in range(means.shape[1]):
                    for c, coord in enumerate("xy"):
                        yield it, kind, node, coord, float(means[it, node, c]), float(variances[it, node, c])

    def write_trace_csv(self, fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in self.trace_rows():
            writer.writerow(row)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        self.write_trace_csv(buf)
        return buf.getvalue()
