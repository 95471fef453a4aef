"""Simulated-user experiment: noisy feedback, scenarios A-D, model grid.

Each session picks a target group, seeds the model with two positive
examples (locked: they are the query, not feedback to second-guess), and
then loops for a fixed number of steps: fit, emit the top-50 list, score
it with F1, surface one highlight (except scenario A), apply the
scenario's response, and append one noisy feedback.  Observations carry
the documents' TF-IDF vectors directly, so ranking reduces to the
posterior-mean score of every document.

Scenario semantics for a highlighted entry:
  A: nothing is highlighted, nothing revised.
  B: wrong value -> revised to the truth; correct value -> locked.
  C: wrong value -> revised; correct value -> ignored.
  D: wrong value -> ignored; correct value -> locked.
"""

from __future__ import annotations

import csv
import enum
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import CorpusIndex
from .errors import ValidationError
from .inference import ModelKind, fit
from .model import SIMULATION, Hyperparameters, WeightMode
from .ranking import RankedList, rank_by_posterior
from .session import FeedbackSource, HighlightPolicy, SessionState


class Scenario(enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


class SimModel(enum.Enum):
    ARD = "ard"
    LG = "lg"
    ORACLE = "oracle"

    @property
    def model_kind(self) -> ModelKind:
        return ModelKind.ARD if self is SimModel.ARD else ModelKind.LG

    @property
    def highlight_policy(self) -> HighlightPolicy:
        return {
            SimModel.ARD: HighlightPolicy.LOWEST_WEIGHT,
            SimModel.LG: HighlightPolicy.UNIFORM_RANDOM,
            SimModel.ORACLE: HighlightPolicy.ORACLE_TRUTH,
        }[self]


@dataclass(frozen=True)
class NoiseProfile:
    """Noisy-feedback generator settings."""

    p_positive: float = 0.70
    p_negative: float = 0.10
    p_random: float = 0.20
    p_random_high: float = 0.875  # random picks get value 1.0 this often
    value_positive: float = 1.0
    value_negative: float = 0.0

    def __post_init__(self):
        total = self.p_positive + self.p_negative + self.p_random
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"branch probabilities sum to {total}, not 1")
        for name in ("p_positive", "p_negative", "p_random", "p_random_high"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} outside [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    model: SimModel = SimModel.ARD
    scenario: Scenario = Scenario.A
    list_size: int = 50
    steps: int = 100
    sessions: int = 200
    group_size: int = 100
    rng_seed: int = 0
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    hyper: Hyperparameters = SIMULATION
    seed_positives: int = 2
    exempt_seeds: bool = True
    recency_window: int = 1

    def __post_init__(self):
        for name in ("list_size", "steps", "sessions", "group_size", "seed_positives"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class FeedbackDraw:
    doc_id: str
    value: float
    branch: str  # positive | negative | random


def simulate_step_feedback(
    ranked: RankedList,
    positive_ids: set[str],
    noise: NoiseProfile,
    rng: np.random.Generator,
) -> FeedbackDraw:
    """One noisy feedback on the presented list.

    Falls back to the random branch when the list lacks a positive (or
    negative) example for the drawn branch.
    """
    doc_ids = ranked.doc_ids
    positives = [d for d in doc_ids if d in positive_ids]
    negatives = [d for d in doc_ids if d not in positive_ids]
    u = rng.random()
    if u < noise.p_positive and positives:
        return FeedbackDraw(
            positives[int(rng.integers(len(positives)))], noise.value_positive, "positive"
        )
    if u < noise.p_positive + noise.p_negative and negatives:
        return FeedbackDraw(
            negatives[int(rng.integers(len(negatives)))], noise.value_negative, "negative"
        )
    doc = doc_ids[int(rng.integers(len(doc_ids)))]
    value = noise.value_positive if rng.random() < noise.p_random_high else noise.value_negative
    return FeedbackDraw(doc, value, "random")


def f1_of_list(ranked: RankedList, target_group: str, corpus: CorpusIndex, group_size: int) -> float:
    """F1 of the presented list against the target group."""
    hits = sum(1 for d in ranked.doc_ids if corpus.document(d).label == target_group)
    if hits == 0:
        return 0.0
    precision = hits / len(ranked.doc_ids)
    recall = hits / group_size
    return 2 * precision * recall / (precision + recall)


@dataclass
class SessionResult:
    f1: np.ndarray            # per-step F1
    fit_seconds: np.ndarray   # per-step wall clock around fit() only
    target_group: str
    error: str | None = None


def run_session(config: SimConfig, corpus: CorpusIndex, rng: np.random.Generator) -> SessionResult:
    """One simulated search session."""
    labels = sorted({d.label for d in corpus.documents})
    target = labels[int(rng.integers(len(labels)))]
    positive_ids = {d for d, l in zip(corpus.doc_ids, corpus.labels) if l == target}

    state = SessionState(
        "sim",
        hyper=config.hyper,
        model_kind=config.model.model_kind,
        rng_seed=int(rng.integers(2**63)),
        recency_window=config.recency_window,
        auto_refit=False,
        oracle_truth_fit=config.model is SimModel.ORACLE,
    )

    seeds = rng.choice(sorted(positive_ids), size=config.seed_positives, replace=False)
    for doc_id in seeds:
        state.append_entry(
            doc_id, 1.0, FeedbackSource.SIMULATED,
            features=corpus.matrix[corpus.row(doc_id)],
            weight_mode=WeightMode.LOCKED,
            exempt_from_highlight=config.exempt_seeds,
            truth=1.0,
        )

    f1 = np.zeros(config.steps)
    fit_seconds = np.zeros(config.steps)
    for step in range(config.steps):
        request = state.build_fit_request()
        t0 = time.perf_counter()
        posterior = fit(request)
        fit_seconds[step] = time.perf_counter() - t0
        state.posterior = posterior
        state._stamp_highlights()

        ranked = rank_by_posterior(posterior, corpus, top_m=config.list_size)
        f1[step] = f1_of_list(ranked, target, corpus, config.group_size)

        if config.scenario is not Scenario.A:
            entry_id = state.select_highlight_for_simulation(config.model.highlight_policy, rng)
            if entry_id is not None:
                entry = state._find_entry(entry_id)
                wrong = entry.truth is not None and entry.value != entry.truth
                if wrong and config.scenario in (Scenario.B, Scenario.C):
                    state.update_entry_value(entry_id, entry.truth)
                elif not wrong and config.scenario in (Scenario.B, Scenario.D):
                    state.lock_feedback(entry_id)

        draw = simulate_step_feedback(ranked, positive_ids, config.noise, rng)
        state.append_entry(
            draw.doc_id, draw.value, FeedbackSource.SIMULATED,
            features=corpus.matrix[corpus.row(draw.doc_id)],
            truth=1.0 if draw.doc_id in positive_ids else 0.0,
        )
    return SessionResult(f1=f1, fit_seconds=fit_seconds, target_group=target)


MODEL_ORDER = (SimModel.ARD, SimModel.LG, SimModel.ORACLE)
SCENARIO_ORDER = (Scenario.A, Scenario.B, Scenario.C, Scenario.D)


def session_rng(root_seed: int, model: SimModel, scenario: Scenario, session: int) -> np.random.Generator:
    """Counter-based seed split: every cell and session independently
    reproducible from the experiment seed."""
    key = (MODEL_ORDER.index(model), SCENARIO_ORDER.index(scenario), session)
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=key))


@dataclass
class CellResult:
    model: SimModel
    scenario: Scenario
    mean_f1: np.ndarray
    stderr_f1: np.ndarray
    mean_step_seconds: np.ndarray
    n_sessions: int
    n_failures: int

    @property
    def final_f1(self) -> float:
        return float(self.mean_f1[-1])


def run_cell(config: SimConfig, corpus: CorpusIndex) -> CellResult:
    """All sessions of one (model, scenario) cell."""
    results, failures = [], 0
    for s in range(config.sessions):
        rng = session_rng(config.rng_seed, config.model, config.scenario, s)
        try:
            results.append(run_session(config, corpus, rng))
        except Exception as exc:  # noqa: BLE001 - recorded, excluded from means
            failures += 1
            results.append(SessionResult(
                f1=np.full(config.steps, np.nan),
                fit_seconds=np.full(config.steps, np.nan),
                target_group="", error=str(exc),
            ))
    f1 = np.array([r.f1 for r in results])
    secs = np.array([r.fit_seconds for r in results])
    ok = ~np.isnan(f1[:, 0])
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise ValidationError(f"every session failed in cell {config.model}/{config.scenario}")
    return CellResult(
        model=config.model,
        scenario=config.scenario,
        mean_f1=f1[ok].mean(axis=0),
        stderr_f1=f1[ok].std(axis=0, ddof=1) / np.sqrt(n_ok) if n_ok > 1 else np.zeros(config.steps),
        mean_step_seconds=secs[ok].mean(axis=0),
        n_sessions=n_ok,
        n_failures=failures,
    )


def run_experiment(
    base: SimConfig,
    corpus: CorpusIndex,
    models: list[SimModel],
    scenarios: list[Scenario],
) -> list[CellResult]:
    cells = []
    for model in models:
        for scenario in scenarios:
            cells.append(run_cell(replace(base, model=model, scenario=scenario), corpus))
    return cells


def write_results_csv(cells: list[CellResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "scenario", "step", "mean_f1", "stderr_f1", "mean_step_seconds"])
        for cell in cells:
            for step in range(len(cell.mean_f1)):
                writer.writerow([
                    cell.model.value, cell.scenario.value, step + 1,
                    f"{cell.mean_f1[step]:.6f}",
                    f"{cell.stderr_f1[step]:.6f}",
                    f"{cell.mean_step_seconds[step]:.6f}",
                ])


def write_failures_summary(cells: list[CellResult], path: str | Path) -> None:
    import json

    payload = [
        {
            "model": c.model.value, "scenario": c.scenario.value,
            "sessions_ok": c.n_sessions, "sessions_failed": c.n_failures,
        }
        for c in cells
    ]
    Path(path).write_text(json.dumps(payload, indent=2))


def pivot_plotdata(results_csv: str | Path, out_csv: str | Path, value: str = "mean_f1") -> None:
    """Pivot the long results table into one column per (model, scenario)
    curve, ready for external plotting."""
    with open(results_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if value not in ("mean_f1", "stderr_f1", "mean_step_seconds"):
        raise ValidationError(f"unknown value column {value!r}")
    curves: dict[str, dict[int, str]] = {}
    steps: set[int] = set()
    for row in rows:
        curve = f"{row['model']}_{row['scenario']}"
        step = int(row["step"])
        curves.setdefault(curve, {})[step] = row[value]
        steps.add(step)
    ordered_steps = sorted(steps)
    ordered_curves = sorted(curves)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + ordered_curves)
        for step in ordered_steps:
            writer.writerow([step] + [curves[c].get(step, "") for c in ordered_curves])
