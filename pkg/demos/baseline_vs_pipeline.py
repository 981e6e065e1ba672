"""Where a 1 m proximity rule goes wrong and event matching does not.

Runs the 20-agent mixed scenario and lists, per truth crossing, what the
pipeline and the proximity baseline said.
"""

import tempfile
from pathlib import Path

from wardtrack import pipeline
from wardtrack.compliance import score_accuracy
from wardtrack.records import read_crossings, read_truth
from wardtrack.sim import generate_scenario

wd = Path(tempfile.mkdtemp(prefix="wardtrack_mixed_"))
cfg = generate_scenario("mixed", 0)
report = pipeline.run_all(wd, cfg)

tags = {a.agent_id: a.behaviour for a in cfg.agents}
_, truth = read_truth(wd / "truth.jsonl")
_, pred = read_crossings(wd / "crossings.jsonl")
_, base = read_crossings(wd / "baseline_crossings.jsonl")
by_pred = dict(score_accuracy(pred, truth).pairs)
by_base = dict(score_accuracy(base, truth).pairs)


def verdict(crossings, j):
    return "-" if j is None else ("yes" if crossings[j].compliant else "no")


print(f"{'agent':>5} {'behaviour':<13} {'door':<6} {'dir':<5} {'truth':<5} {'pipe':<5} base")
for i, g in enumerate(truth):
    print(
        f"{g.person_id:>5} {tags[g.person_id]:<13} {g.door_id:<6} {g.direction:<5} "
        f"{'yes' if g.washed else 'no':<5} {verdict(pred, by_pred.get(i)):<5} {verdict(base, by_base.get(i))}"
    )
print()
print(report.summary(), end="")
