"""JSON schemas for every file the CLI reads or writes."""

import json
from importlib import resources

NAMES = ("counts", "dataset", "weights", "loss_eval", "gradcheck", "optimize_trace", "train_report", "metric_report")


def load_schema(name: str) -> dict:
    if name not in NAMES:
        raise KeyError(f"no schema named {name!r}")
    return json.loads(resources.files("reglab").joinpath(f"schemas/{name}.schema.json").read_text())
