import pytest

from seqmem.stream import Task


def make_tasks(n, prefix="q", category=None, target="42"):
    return [
        Task(id=f"{prefix}{i}", prompt=f"prompt {prefix}{i}", target=target,
             category=category or "default")
        for i in range(1, n + 1)
    ]


@pytest.fixture
def tasks10():
    return make_tasks(10)


def write_golden_config(directory, out="out", **schedule):
    """Write the golden scenario's dataset, hold-out file and YAML config."""
    import json
    import sys
    from pathlib import Path

    import yaml

    sys.path.insert(0, str(Path(__file__).parent / "golden"))
    import scenario

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, records in (("stream.jsonl", scenario.stream_records()), ("holdout.jsonl", scenario.holdout_records())):
        with open(directory / name, "w") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in records)
    cfg = {
        "method": "exp_recent_k1",
        "dataset": {"path": "stream.jsonl", "name": "golden"},
        "holdout": [{"name": "probe", "path": "holdout.jsonl", "distribution": "in_distribution"}],
        "policy": {"id": "exp_recent", "k": 1},
        "gateway": {"backend": "scripted", "rules": scenario.RULES, "default": "WRONG", "latency": 1.5},
        "schedule": {"checkpoints": list(range(1, len(scenario.TOPICS) + 1)),
                     "horizons": list(scenario.HORIZONS), **schedule},
        "seed": 0,
        "output_dir": out,
    }
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path


@pytest.fixture
def golden_config(tmp_path):
    return write_golden_config(tmp_path)
