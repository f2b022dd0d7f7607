"""Run the full two-stage synthesis pipeline against scripted endpoints.

Everything is deterministic and offline: the generator, teacher and student
are substring-matched scripts, so the run is reproducible and a second
invocation is served entirely from the completion cache.

Run: python3 demos/mock_synthesis_run.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from promptgap import EndpointConfig, Gateway, PipelineConfig, run_pipeline

workdir = Path(tempfile.mkdtemp(prefix="synthesis-demo-"))
print("working in", workdir)

# Seed prompts and a small image pool.
img_dir = workdir / "imgs"
img_dir.mkdir()
rng = np.random.default_rng(0)
for i in range(3):
    arr = rng.integers(0, 256, (48, 48), dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(img_dir / f"chart{i}.png")

seeds = workdir / "seeds.jsonl"
seeds.write_text(json.dumps({"id": "s1", "text": "How many bars exceed 50?"}) + "\n")

# Scripted endpoints. The student disagrees with the teacher half the time,
# so every consistent candidate survives the rejection stage.
scripts = {
    "generator": {
        "rules": [{"contains": "Target Reasoning Skills",
                   "response": "Final Problem: Which two segments sum past the dashed line?"}],
        "default": "Final Problem: How many segments are taller than the median bar?",
    },
    "teacher": {
        "rules": [{"contains": "Generalizable Skill",
                   "response": "comparing stacked segments against a reference line"}],
        "default": "Final Answer: 3",
    },
    "student": {"default": ["Final Answer: 3", "Final Answer: 4"]},
}
endpoints = {}
for role, spec in scripts.items():
    path = workdir / f"{role}.json"
    path.write_text(json.dumps(spec))
    endpoints[role] = EndpointConfig.from_json_dict(
        role, {"base_url": "mock://script", "script_path": str(path)})

cfg = PipelineConfig(
    seed_dataset_paths=[str(seeds)],
    image_source_paths=[str(img_dir)],
    output_path=str(workdir / "curated.jsonl"),
    run_dir=str(workdir / "run"),
    k_rollouts=8,
    k_skills=1,
    n_stage1_candidates=4,
    n_stage2_candidates=4,
    endpoints=endpoints,
)

report = run_pipeline(cfg)
print()
print(report.render())

# A warm-cache re-run touches the network zero times.
gateway = Gateway(cfg.endpoints, Path(cfg.run_dir) / "cache")
run_pipeline(cfg, gateway=gateway)
print()
print("warm re-run:", gateway.stats)
print("curated dataset:", cfg.output_path)
