"""Pass/fail reports shared by the configuration validators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    first_round: Optional[int] = None

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        where = f" (first offending round {self.first_round})" if self.first_round is not None else ""
        detail = f": {self.detail}" if self.detail else ""
        return f"[{status}] {self.name}{detail}{where}"


@dataclass
class ValidationReport:
    title: str
    checks: List[Check] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def add(self, name, passed, detail="", first_round=None):
        self.checks.append(Check(name, bool(passed), detail, first_round))

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def __str__(self):
        lines = [f"{self.title}: {'ok' if self.ok else 'FAILED'}"]
        lines += [f"  {c}" for c in self.checks]
        lines += [f"  [WARN] {w}" for w in self.warnings]
        return "\n".join(lines)
