from __future__ import annotations

import csv
from dataclasses import dataclass, field

TRACE_COLUMNS = ("iteration", "objective", "primal_residual", "max_edge_gap", "wall_ms")


@dataclass
class TraceRow:
    iteration: int
    objective: float
    primal_residual: float = 0.0
    max_edge_gap: float = 0.0
    wall_ms: float = 0.0


@dataclass
class ConvergenceTrace:
    """Per-iteration objective (negative ELBO), consensus residuals and timing."""

    rows: list = field(default_factory=list)
    converged: bool = False

    def append(self, row: TraceRow) -> None:
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    @property
    def objectives(self) -> list:
        return [r.objective for r in self.rows]

    @property
    def iterations(self) -> int:
        return self.rows[-1].iteration if self.rows else 0

    @property
    def final_objective(self) -> float:
        return self.rows[-1].objective

    def to_csv(self, path, config_hash: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if config_hash is not None:
                fh.write(f"# config_hash: {config_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for r in self.rows:
                writer.writerow([r.iteration, repr(r.objective), repr(r.primal_residual),
                                 repr(r.max_edge_gap), f"{r.wall_ms:.3f}"])
