"""Linear-chain CRF over BMES labels.

Feature semantics follow the usual CRF-toolkit convention: every discrete
(template-id, value) pair observed in training is crossed with all four
output labels to form indicator weights, plus the 16 label-to-label
transition weights.  Unseen feature values score 0 at test time.

Training maximizes the L2-regularized mean log-likelihood with exact
gradients from forward-backward, run in the log domain so sequences of
thousands of positions cannot overflow.  The optimizer is a batch
quasi-Newton method (L-BFGS-B) with deterministic behavior: identical
data and config reproduce bit-identical weights.

Viterbi ties are broken toward the lexicographically smallest sequence
under the label order B < M < E < S at the earliest differing position.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize

from .char_features import FeatureVector
from .corpus import LABELS

N_LABELS = len(LABELS)
_LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}

_PICKLE_PROTOCOL = 4
_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Training produced a non-finite objective or was misconfigured."""


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 0.1
    max_iterations: int = 300
    tolerance: float = 1e-6
    feature_cutoff: int = 1


@dataclass(frozen=True)
class TrainingInstance:
    """Per-position feature vectors plus the gold BMES labels."""

    features: tuple[FeatureVector, ...]
    gold: tuple[str, ...]
    source_id: str = ""

    def __post_init__(self) -> None:
        if len(self.features) != len(self.gold):
            raise ValueError(f"instance {self.source_id!r}: features/gold length mismatch")
        if not self.features:
            raise ValueError(f"instance {self.source_id!r}: empty sequence")


class FeatureRegistry:
    """Dense ids for emission and transition weights.

    Each registered (template-id, value) pair owns a block of four
    consecutive emission weights, one per label; the 16 transition
    weights sit after all emission blocks.  The registry freezes when
    training begins.
    """

    def __init__(self) -> None:
        self._slots: dict[tuple[str, str], int] = {}
        self.frozen = False

    @property
    def n_slots(self) -> int:
        return len(self._slots)

    @property
    def n_weights(self) -> int:
        return self.n_slots * N_LABELS + N_LABELS * N_LABELS

    def add(self, template_id: str, value: str) -> int:
        if self.frozen:
            raise ValueError("registry is frozen")
        key = (template_id, value)
        if key not in self._slots:
            self._slots[key] = len(self._slots)
        return self._slots[key]

    def slot(self, template_id: str, value: str) -> int | None:
        return self._slots.get((template_id, value))

    def emission_index(self, template_id: str, value: str, label: str) -> int | None:
        s = self._slots.get((template_id, value))
        if s is None:
            return None
        return s * N_LABELS + _LABEL_INDEX[label]

    def transition_index(self, prev_label: str, label: str) -> int:
        return (
            self.n_slots * N_LABELS
            + _LABEL_INDEX[prev_label] * N_LABELS
            + _LABEL_INDEX[label]
        )

    def slot_items(self) -> list[tuple[tuple[str, str], int]]:
        return list(self._slots.items())

    @classmethod
    def from_slot_list(cls, pairs: Sequence[tuple[str, str]]) -> "FeatureRegistry":
        reg = cls()
        for template_id, value in pairs:
            reg.add(template_id, value)
        reg.frozen = True
        return reg


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _first_argmax(values: np.ndarray) -> int:
    return int(np.flatnonzero(values == values.max())[0])


class CrfModel:
    """A trained (or zero-initialized) CRF: registry plus weight vector."""

    def __init__(
        self,
        registry: FeatureRegistry,
        weights: np.ndarray,
        config: TrainConfig = TrainConfig(),
        manifest: dict | None = None,
    ):
        if len(weights) != registry.n_weights:
            raise ValueError("weight vector length does not match registry")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        self.registry = registry
        self.weights = np.asarray(weights, dtype=np.float64)
        self.config = config
        self.manifest = dict(manifest or {})

    @property
    def labels(self) -> tuple[str, ...]:
        return LABELS

    def _emission_weights(self) -> np.ndarray:
        return self.weights[: self.registry.n_slots * N_LABELS].reshape(-1, N_LABELS)

    def _transition_weights(self) -> np.ndarray:
        return self.weights[self.registry.n_slots * N_LABELS :].reshape(N_LABELS, N_LABELS)

    def _position_slots(self, features: Sequence[FeatureVector]) -> list[np.ndarray]:
        reg = self.registry
        out = []
        for fv in features:
            slots = [s for s in (reg.slot(t, v) for t, v in fv) if s is not None]
            out.append(np.asarray(slots, dtype=np.intp))
        return out

    def _emission_matrix(self, features: Sequence[FeatureVector]) -> np.ndarray:
        w_e = self._emission_weights()
        e = np.zeros((len(features), N_LABELS))
        for t, slots in enumerate(self._position_slots(features)):
            if len(slots):
                e[t] = w_e[slots].sum(axis=0)
        return e

    def score_sequence(self, features: Sequence[FeatureVector], labels: Sequence[str]) -> float:
        """Linear score of one labeling: emissions plus transitions."""
        if len(features) != len(labels):
            raise ValueError("features and labels differ in length")
        e = self._emission_matrix(features)
        w_t = self._transition_weights()
        idx = [_LABEL_INDEX[lab] for lab in labels]
        score = float(e[np.arange(len(idx)), idx].sum())
        score += float(sum(w_t[idx[t], idx[t + 1]] for t in range(len(idx) - 1)))
        return score

    def viterbi(self, features: Sequence[FeatureVector]) -> list[str]:
        """Highest-scoring labeling; ties resolve to the lexicographically
        smallest sequence under B < M < E < S.

        Runs the max recursion backward and reads the sequence out
        forward, greedily taking the smallest label that still attains
        the optimum; breaking ties at backpointers instead would minimize
        late positions rather than early ones.
        """
        n = len(features)
        if n == 0:
            raise ValueError("cannot decode an empty sequence")
        e = self._emission_matrix(features)
        w_t = self._transition_weights()
        best_from = np.empty((n, N_LABELS))
        best_from[n - 1] = e[n - 1]
        for t in range(n - 2, -1, -1):
            best_from[t] = e[t] + (w_t + best_from[t + 1][None, :]).max(axis=1)
        labels = [_first_argmax(best_from[0])]
        for t in range(n - 1):
            cand = w_t[labels[-1]] + best_from[t + 1]
            labels.append(_first_argmax(cand))
        return [LABELS[i] for i in labels]

    def log_partition(self, features: Sequence[FeatureVector]) -> float:
        e = self._emission_matrix(features)
        w_t = self._transition_weights()
        log_alpha = e[0]
        for t in range(1, len(features)):
            log_alpha = e[t] + _logsumexp(log_alpha[:, None] + w_t, axis=0)
        return float(_logsumexp(log_alpha, axis=0))

    def marginals(self, features: Sequence[FeatureVector]) -> np.ndarray:
        """Per-position posterior over labels, each row summing to one."""
        n = len(features)
        e = self._emission_matrix(features)
        w_t = self._transition_weights()
        log_alpha = np.empty((n, N_LABELS))
        log_alpha[0] = e[0]
        for t in range(1, n):
            log_alpha[t] = e[t] + _logsumexp(log_alpha[t - 1][:, None] + w_t, axis=0)
        log_beta = np.zeros((n, N_LABELS))
        for t in range(n - 2, -1, -1):
            log_beta[t] = _logsumexp(w_t + (e[t + 1] + log_beta[t + 1])[None, :], axis=1)
        log_z = _logsumexp(log_alpha[n - 1], axis=0)
        return np.exp(log_alpha + log_beta - log_z)

    def save(self, path: str | Path) -> None:
        """Versioned container; round-trips bit-exactly."""
        payload = {
            "format": "patseg-crf",
            "version": _FORMAT_VERSION,
            "labels": list(LABELS),
            "slots": [list(key) for key, _ in self.registry.slot_items()],
            "weights": self.weights,
            "config": {
                "l2": self.config.l2,
                "max_iterations": self.config.max_iterations,
                "tolerance": self.config.tolerance,
                "feature_cutoff": self.config.feature_cutoff,
            },
            "manifest": self.manifest,
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh, protocol=_PICKLE_PROTOCOL)

    @classmethod
    def load(cls, path: str | Path) -> "CrfModel":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload.get("format") != "patseg-crf":
            raise ValueError(f"{path} is not a model file")
        if payload.get("version") != _FORMAT_VERSION:
            raise ValueError(f"unsupported model version {payload.get('version')}")
        if tuple(payload["labels"]) != LABELS:
            raise ValueError("model label set mismatch")
        registry = FeatureRegistry.from_slot_list([tuple(p) for p in payload["slots"]])
        config = TrainConfig(**payload["config"])
        return cls(registry, payload["weights"], config, payload.get("manifest"))


class _CompiledBatch:
    """Training instances flattened into arrays for vectorized passes.

    Instances are stably sorted by length, longest first, so at every
    time step the still-active sequences form a prefix of the batch.
    Slot occurrences are kept twice, once grouped by position (emission
    build) and once grouped by slot (gradient scatter), both as
    reduceat segment lists.
    """

    def __init__(self, registry: FeatureRegistry, instances: Sequence[TrainingInstance]):
        order = sorted(range(len(instances)), key=lambda i: (-len(instances[i].gold), i))
        self.order = order
        self.instances = [instances[i] for i in order]
        self.n = len(self.instances)
        self.lengths = np.array([len(inst.gold) for inst in self.instances], dtype=np.intp)
        self.l_max = int(self.lengths.max())
        # number of active sequences at each time step t (length >= t+1)
        self.active = np.array(
            [int(np.searchsorted(-self.lengths, -(t + 1), side="right")) for t in range(self.l_max)],
            dtype=np.intp,
        )

        rows: list[int] = []
        slots: list[int] = []
        gold_rows: list[int] = []
        gold_labels: list[int] = []
        empirical = np.zeros(registry.n_weights)
        trans_base = registry.n_slots * N_LABELS
        for s, inst in enumerate(self.instances):
            prev = None
            for t, (fv, lab) in enumerate(zip(inst.features, inst.gold)):
                y = _LABEL_INDEX[lab]
                gold_rows.append(s * self.l_max + t)
                gold_labels.append(y)
                for template_id, value in fv:
                    slot = registry.slot(template_id, value)
                    if slot is not None:
                        rows.append(s * self.l_max + t)
                        slots.append(slot)
                        empirical[slot * N_LABELS + y] += 1.0
                if prev is not None:
                    empirical[trans_base + prev * N_LABELS + y] += 1.0
                prev = y
        self.rows = np.asarray(rows, dtype=np.intp)
        self.slots = np.asarray(slots, dtype=np.intp)
        self.gold_rows = np.asarray(gold_rows, dtype=np.intp)
        self.gold_labels = np.asarray(gold_labels, dtype=np.intp)
        self.empirical = empirical

        # segment boundaries for row-ordered occurrences (already sorted)
        self.row_starts = np.concatenate([[0], np.flatnonzero(np.diff(self.rows)) + 1]) if len(rows) else np.zeros(0, dtype=np.intp)
        self.row_ids = self.rows[self.row_starts] if len(rows) else np.zeros(0, dtype=np.intp)
        # occurrences re-sorted by slot for the gradient scatter
        by_slot = np.argsort(self.slots, kind="stable")
        self.slot_sorted = self.slots[by_slot]
        self.rows_by_slot = self.rows[by_slot]
        self.slot_starts = (
            np.concatenate([[0], np.flatnonzero(np.diff(self.slot_sorted)) + 1])
            if len(slots)
            else np.zeros(0, dtype=np.intp)
        )
        self.slot_ids = self.slot_sorted[self.slot_starts] if len(slots) else np.zeros(0, dtype=np.intp)

    def emission_matrix(self, w_e: np.ndarray) -> np.ndarray:
        e = np.zeros((self.n * self.l_max, N_LABELS))
        if len(self.rows):
            gathered = w_e[self.slots]
            e[self.row_ids] = np.add.reduceat(gathered, self.row_starts, axis=0)
        return e.reshape(self.n, self.l_max, N_LABELS)

    def forward_backward(self, w: np.ndarray, registry: FeatureRegistry):
        """Log-domain alpha/beta over the whole batch.

        Returns (log_z per instance, emission matrix, log_alpha,
        log_beta); padded cells hold -inf so downstream exponentials
        vanish there.
        """
        n_e = registry.n_slots * N_LABELS
        w_e = w[:n_e].reshape(-1, N_LABELS)
        w_t = w[n_e:].reshape(N_LABELS, N_LABELS)
        e = self.emission_matrix(w_e)

        log_alpha = np.full((self.n, self.l_max, N_LABELS), -np.inf)
        log_alpha[:, 0, :] = e[:, 0, :]
        for t in range(1, self.l_max):
            k = self.active[t]
            prev = log_alpha[:k, t - 1, :]
            log_alpha[:k, t, :] = e[:k, t, :] + _logsumexp(
                prev[:, :, None] + w_t[None, :, :], axis=1
            )
        log_z = _logsumexp(log_alpha[np.arange(self.n), self.lengths - 1, :], axis=1)

        log_beta = np.full((self.n, self.l_max, N_LABELS), -np.inf)
        log_beta[np.arange(self.n), self.lengths - 1, :] = 0.0
        for t in range(self.l_max - 2, -1, -1):
            k = self.active[t + 1]
            if k == 0:
                continue
            nxt = e[:k, t + 1, :] + log_beta[:k, t + 1, :]
            log_beta[:k, t, :] = _logsumexp(w_t[None, :, :] + nxt[:, None, :], axis=2)
        return log_z, e, log_alpha, log_beta, w_t


def log_likelihood_and_gradient(
    model: CrfModel, instances: Sequence[TrainingInstance], batch: _CompiledBatch | None = None
) -> tuple[float, np.ndarray]:
    """L2-regularized mean log-likelihood of the gold labelings, with its
    exact gradient (expected minus empirical counts, plus the regularizer,
    all negated into maximization form)."""
    registry = model.registry
    batch = batch or _CompiledBatch(registry, instances)
    w = model.weights
    log_z, e, log_alpha, log_beta, w_t = batch.forward_backward(w, registry)

    if not np.all(np.isfinite(log_z)):
        bad = int(np.flatnonzero(~np.isfinite(log_z))[0])
        raise TrainingError(
            f"non-finite partition function for instance {batch.instances[bad].source_id!r}"
        )

    # posterior marginals; padded cells exp(-inf) = 0
    gamma = np.exp(log_alpha + log_beta - log_z[:, None, None])
    expected = np.zeros_like(w)
    n_e = registry.n_slots * N_LABELS
    if len(batch.rows):
        gamma_flat = gamma.reshape(-1, N_LABELS)
        gathered = gamma_flat[batch.rows_by_slot]
        sums = np.add.reduceat(gathered, batch.slot_starts, axis=0)
        expected_e = expected[:n_e].reshape(-1, N_LABELS)
        expected_e[batch.slot_ids] += sums
    if batch.l_max > 1:
        xi_log = (
            log_alpha[:, :-1, :, None]
            + w_t[None, None, :, :]
            + e[:, 1:, None, :]
            + log_beta[:, 1:, None, :]
            - log_z[:, None, None, None]
        )
        expected[n_e:] += np.exp(xi_log).sum(axis=(0, 1)).reshape(-1)

    n = batch.n
    gold_score = float(w @ batch.empirical)
    log_likelihood = (gold_score - float(log_z.sum())) / n
    l2 = model.config.l2
    objective = log_likelihood - 0.5 * l2 * float(w @ w)
    gradient = (batch.empirical - expected) / n - l2 * w
    if not np.isfinite(objective):
        raise TrainingError("non-finite objective")
    return objective, gradient


def build_registry(instances: Sequence[TrainingInstance], feature_cutoff: int = 1) -> FeatureRegistry:
    """Register every (template-id, value) pair seen at least
    ``feature_cutoff`` times, in first-seen order."""
    registry = FeatureRegistry()
    if feature_cutoff <= 1:
        for inst in instances:
            for fv in inst.features:
                for template_id, value in fv:
                    registry.add(template_id, value)
    else:
        counts: dict[tuple[str, str], int] = {}
        for inst in instances:
            for fv in inst.features:
                for key in fv:
                    counts[key] = counts.get(key, 0) + 1
        for key, c in counts.items():
            if c >= feature_cutoff:
                registry.add(*key)
    registry.frozen = True
    return registry


def train(
    instances: Sequence[TrainingInstance],
    config: TrainConfig = TrainConfig(),
    manifest: dict | None = None,
) -> CrfModel:
    """Fit weights by maximizing the regularized mean log-likelihood.

    Deterministic: the registry is built in instance order, the start
    point is zero, and L-BFGS-B stops on relative objective change below
    ``config.tolerance`` or after ``config.max_iterations`` iterations.
    """
    if not instances:
        raise TrainingError("no training instances")
    registry = build_registry(instances, config.feature_cutoff)
    model = CrfModel(registry, np.zeros(registry.n_weights), config, manifest)
    batch = _CompiledBatch(registry, instances)

    def negated(w: np.ndarray) -> tuple[float, np.ndarray]:
        model.weights = w
        obj, grad = log_likelihood_and_gradient(model, instances, batch)
        return -obj, -grad

    result = scipy.optimize.minimize(
        negated,
        np.zeros(registry.n_weights),
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": config.max_iterations,
            "ftol": config.tolerance,
            "gtol": 1e-12,
            "maxcor": 10,
        },
    )
    weights = np.asarray(result.x, dtype=np.float64)
    if not np.all(np.isfinite(weights)):
        raise TrainingError("optimizer returned non-finite weights")
    model.weights = weights
    return model
