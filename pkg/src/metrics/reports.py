from dataclasses import dataclass, field
import json

from jsonschema import Draft7Validator

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "MetricReport",
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "method", "metric", "value", "normalization", "config"],
    "properties": {
        "dataset": {"type": "string"},
        "method": {"type": "string"},
        "metric": {"type": "string", "enum": ["cmse", "surface", "mse-ndvi"]},
        "value": {"type": "number"},
        "normalization": {"type": ["string", "null"]},
        "config": {"type": "object"},
    },
}

_VALIDATOR = Draft7Validator(REPORT_SCHEMA)


def validate_report(document: dict) -> list:
    """Check a report document against REPORT_SCHEMA; returns the problems found."""
    errors = sorted(_VALIDATOR.iter_errors(document), key=lambda e: '.'.join(map(str, e.absolute_path)))
    return [f"{'.'.join(map(str, e.absolute_path)) or 'report'}: {e.message}" for e in errors]


@dataclass(frozen=True)
class MetricReport:
    dataset: str
    method: str
    metric: str
    value: float
    normalization: str | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "method": self.method,
            "metric": self.metric,
            "value": float(self.value),
            "normalization": self.normalization,
            "config": dict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)
