import json
import os
import pathlib

import pytest

DEMO = pathlib.Path(os.environ.get(
    "CAPREWARD_DEMO_DIR", pathlib.Path(__file__).resolve().parents[2] / "data" / "demo"))


@pytest.fixture
def demo_config(tmp_path):
    """Demo config rewritten with absolute paths under tmp_path."""
    cfg = json.loads((DEMO / "config.json").read_text())
    cfg["listen_addr"] = "127.0.0.1:0"
    cfg["dataset_path"] = str(tmp_path / "dataset.jsonl")
    cfg["contribution_store_path"] = str(tmp_path / "contributions.jsonl")
    for ep in cfg["endpoints"]:
        if "fixtures" in ep:
            ep["fixtures"] = str(DEMO / ep["fixtures"])
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def demo_dir():
    return DEMO
