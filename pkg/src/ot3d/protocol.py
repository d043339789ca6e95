"""Simulated teacher for open-ended evaluation (test-then-train).

Each iteration shows the agent an unseen view of a known category. The
agent answers; wrong answers trigger a correct action. Once the running
accuracy since the last introduction clears the threshold, a new category
is taught. The experiment ends when the teacher runs out of categories or
views (dataset-exhausted) or the agent stops progressing (stalled).

The running accuracy estimator is the fraction correct over all asks since
the last introduction, and an introduction additionally requires at least
``min_asks_factor * known`` asks; both choices are recorded in every trace
header and summary so results stay interpretable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import ViewProvider
from .learner import LearningAgent, bootstrap_generic_model
from .params import Params

ACCURACY_ESTIMATOR_NOTE = (
    "accuracy over all asks since the last category introduction; "
    "an introduction requires accuracy > tau and at least "
    "min_asks_factor * known_categories asks"
)

STATUS_STALLED = "stalled"
STATUS_EXHAUSTED = "dataset-exhausted"


@dataclass
class ProtocolConfig:
    dataset: ViewProvider
    params: Params
    tau: float = 0.67
    stall_window: int = 100
    accuracy_window: int | None = None  # None = all asks since last introduction
    min_asks_factor: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must be in (0, 1)")
        if self.stall_window < 1:
            raise ValueError("stall_window must be >= 1")

    def summary(self) -> dict:
        return {
            "tau": self.tau,
            "stall_window": self.stall_window,
            "accuracy_window": self.accuracy_window,
            "min_asks_factor": self.min_asks_factor,
            "seed": self.seed,
            "params": self.params.to_dict(),
        }


@dataclass
class IterationRecord:
    """One protocol step. ``action`` is teach, ask (answered correctly) or
    correct (answered wrongly, teacher corrected)."""

    index: int
    action: str
    category: str
    view: str | None
    predicted: str | None
    correct: bool | None
    known: int
    accuracy: float

    def to_json(self) -> dict:
        return {
            "type": "record", "i": self.index, "action": self.action,
            "category": self.category, "view": self.view,
            "predicted": self.predicted, "correct": self.correct,
            "known": self.known, "accuracy": self.accuracy,
        }


@dataclass
class ExperimentTrace:
    config: dict
    records: list[IterationRecord] = field(default_factory=list)
    status: str = ""

    def qci_records(self) -> list[IterationRecord]:
        return [r for r in self.records if r.action != "teach"]


@dataclass
class Metrics:
    qci: int
    alc: int
    aic: float
    gca: float
    apa: float

    def to_dict(self) -> dict:
        return {"QCI": self.qci, "ALC": self.alc, "AIC": self.aic,
                "GCA": self.gca, "APA": self.apa}


def running_accuracy(records: list[IterationRecord], window: int | None = None) -> float:
    """Fraction correct over the most recent asks since the last introduction.

    ``window`` caps how many of those asks count; zero asks yield 0.0 so a
    fresh category always sees at least one question before the next
    introduction can fire.
    """
    if window is not None and window < 1:
        raise ValueError("window must be >= 1")
    asks: list[bool] = []
    for rec in records:
        if rec.action == "teach":
            asks.clear()
        else:
            asks.append(bool(rec.correct))
    if window is not None:
        asks = asks[-window:]
    if not asks:
        return 0.0
    return sum(asks) / len(asks)


def run_experiment(config: ProtocolConfig, agent) -> ExperimentTrace:
    """Drive one full test-then-train experiment and return its trace.

    The agent must provide ``teach(name, [features])``,
    ``correct(name, features)`` and ``predict(features, vid=...) -> label``.
    Every view is used at most once.
    """
    provider = config.dataset
    all_categories = provider.categories()
    if not all_categories:
        raise ValueError("dataset has no categories")

    rng = np.random.default_rng(config.seed)
    intro_order = [all_categories[i] for i in rng.permutation(len(all_categories))]
    unseen = {c: list(provider.views(c)) for c in all_categories}
    if all(len(v) == 0 for v in unseen.values()):
        raise ValueError("dataset has no views")

    trace = ExperimentTrace(config={
        **config.summary(), "accuracy_estimator": ACCURACY_ESTIMATOR_NOTE})
    known: list[str] = []
    next_intro = 0
    asks_since_intro = 0
    index = 0

    def draw_view(category: str) -> str:
        views = unseen[category]
        vid = views.pop(int(rng.integers(len(views))))
        return vid

    def introduce() -> bool:
        nonlocal next_intro, asks_since_intro, index
        while next_intro < len(intro_order) and not unseen[intro_order[next_intro]]:
            next_intro += 1
        if next_intro >= len(intro_order):
            return False
        name = intro_order[next_intro]
        next_intro += 1
        vid = draw_view(name)
        agent.teach(name, [provider.features(vid)])
        known.append(name)
        asks_since_intro = 0
        # the accuracy window resets with the introduction, hence 0.0
        trace.records.append(IterationRecord(
            index, "teach", name, vid, None, None, len(known), 0.0))
        index += 1
        return True

    introduce()

    while True:
        drawable = [c for c in known if unseen[c]]
        if not drawable:
            trace.status = STATUS_EXHAUSTED
            break
        category = drawable[int(rng.integers(len(drawable)))]
        vid = draw_view(category)
        features = provider.features(vid)
        predicted = agent.predict(features, vid=vid)
        is_correct = predicted == category
        if not is_correct:
            agent.correct(category, features)
        asks_since_intro += 1
        action = "ask" if is_correct else "correct"
        rec = IterationRecord(index, action, category, vid, predicted,
                              is_correct, len(known), 0.0)
        trace.records.append(rec)
        rec.accuracy = running_accuracy(trace.records, config.accuracy_window)
        index += 1

        if (rec.accuracy > config.tau
                and asks_since_intro >= config.min_asks_factor * len(known)):
            if not introduce():
                trace.status = STATUS_EXHAUSTED
                break
        elif asks_since_intro >= config.stall_window:
            trace.status = STATUS_STALLED
            break

    return trace


def compute_metrics(trace: ExperimentTrace, final_store=None) -> Metrics:
    """Summarize a finished trace; the live store refines AIC when supplied."""
    if not trace.records:
        raise ValueError("trace has no records")
    qci_rows = trace.qci_records()
    teach_rows = [r for r in trace.records if r.action == "teach"]
    alc = trace.records[-1].known
    qci = len(qci_rows)
    if final_store is not None:
        counts = list(final_store.instance_counts().values())
        aic = float(np.mean(counts)) if counts else 0.0
    else:
        stored = len(teach_rows) + sum(1 for r in qci_rows if not r.correct)
        aic = stored / alc if alc else 0.0
    gca = (sum(1 for r in qci_rows if r.correct) / qci) if qci else 0.0
    apa = (sum(r.accuracy for r in qci_rows) / qci) if qci else 0.0
    return Metrics(qci=qci, alc=alc, aic=aic, gca=gca, apa=apa)


def pair_accuracy(trace: ExperimentTrace, pair: tuple[str, str]) -> float | None:
    """Classification accuracy over asks whose true category is in ``pair``."""
    rows = [r for r in trace.qci_records() if r.category in pair]
    if not rows:
        return None
    return sum(1 for r in rows if r.correct) / len(rows)


# ---------------------------------------------------------------------------
# Trace files (JSON lines, deterministic bytes), summaries and plots.
# ---------------------------------------------------------------------------

def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_trace(trace: ExperimentTrace, path: str | Path) -> None:
    lines = [_dump({"type": "header", "config": trace.config})]
    lines.extend(_dump(r.to_json()) for r in trace.records)
    lines.append(_dump({"type": "end", "status": trace.status}))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path: str | Path) -> ExperimentTrace:
    trace = ExperimentTrace(config={})
    for line in Path(path).read_text().splitlines():
        obj = json.loads(line)
        if obj["type"] == "header":
            trace.config = obj["config"]
        elif obj["type"] == "record":
            trace.records.append(IterationRecord(
                obj["i"], obj["action"], obj["category"], obj["view"],
                obj["predicted"], obj["correct"], obj["known"], obj["accuracy"]))
        elif obj["type"] == "end":
            trace.status = obj["status"]
    return trace


def run_protocol(config: ProtocolConfig, representation: str = "full"):
    """Bootstrap an agent from the dataset pool, run one experiment.

    Returns (trace, agent). The generic model is built from a seeded
    ``pool_fraction`` sample of all views, used without labels.
    """
    provider = config.dataset
    params = config.params.replace(seed=config.seed)
    vids = provider.all_view_ids()
    feature_sets = [provider.features(v) for v in vids]
    generic = bootstrap_generic_model(feature_sets, params)
    agent = LearningAgent(generic, params, representation=representation)
    trace = run_experiment(config, agent)
    return trace, agent


def write_summary_csv(rows: list[dict], path: str | Path) -> None:
    """Per-seed metric rows plus a mean row, with the estimator note."""
    path = Path(path)
    fieldnames = ["seed", "status", "QCI", "ALC", "AIC", "GCA", "APA"]
    with path.open("w", newline="") as fh:
        fh.write(f"# accuracy estimator: {ACCURACY_ESTIMATOR_NOTE}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        if rows:
            mean = {"seed": "mean", "status": ""}
            for key in fieldnames[2:]:
                mean[key] = float(np.mean([float(r[key]) for r in rows]))
            writer.writerow(mean)


def plot_accuracy_curves(traces: list[ExperimentTrace], path: str | Path) -> None:
    """Accuracy-vs-known-categories curves, one per trace, rendered to SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for t, trace in enumerate(traces):
        xs = [r.known for r in trace.qci_records()]
        ys = [r.accuracy for r in trace.qci_records()]
        ax.plot(xs, ys, alpha=0.6, linewidth=1.2, label=f"run {t}")
    tau = traces[0].config.get("tau") if traces else None
    if tau:
        ax.axhline(tau, color="gray", linestyle="--", linewidth=1,
                   label=f"threshold {tau}")
    ax.set_xlabel("known categories")
    ax.set_ylabel("protocol accuracy")
    ax.set_ylim(-0.02, 1.02)
    if len(traces) <= 12:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
