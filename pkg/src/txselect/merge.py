"""Merge per-(treatment, metric) cohort partitions into one common refinement.

Every output cohort is a non-empty intersection with exactly one cohort of
each source partition, and inherits that source cohort's effect estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohorts import CohortSet, EffectEstimate, probe_points
from .errors import ValidationError


@dataclass(frozen=True)
class EffectTable:
    """Effect estimates indexed by (cohort position, source position).

    ``sources[l]`` is the ``(treatment, metric)`` pair that source ``l`` encodes.
    """

    estimates: tuple[tuple[EffectEstimate, ...], ...]
    sources: tuple[tuple[int, int], ...]

    def __post_init__(self):
        est = tuple(tuple(row) for row in self.estimates)
        src = tuple((int(j), int(k)) for j, k in self.sources)
        if any(len(row) != len(src) for row in est):
            raise ValidationError("effect table is incomplete")
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "sources", src)

    @property
    def n_cohorts(self):
        return len(self.estimates)

    def get(self, cohort, treatment, metric):
        return self.estimates[cohort][self.sources.index((treatment, metric))]

    def arrays(self, n_treatments, n_metrics):
        """Dense ``(K+1, n, J)`` arrays of tau, var, var_treat, var_control,
        n_treat and n_control. Missing (treatment, metric) pairs raise."""
        n = self.n_cohorts
        shape = (n_metrics, n, n_treatments)
        out = {name: np.zeros(shape) for name in
               ("tau", "var", "var_treat", "var_control", "n_treat", "n_control")}
        for j in range(1, n_treatments + 1):
            for k in range(n_metrics):
                try:
                    l = self.sources.index((j, k))
                except ValueError:
                    raise ValidationError(f"no estimates for treatment {j}, metric {k}") from None
                for i in range(n):
                    e = self.estimates[i][l]
                    for name in out:
                        out[name][k, i, j - 1] = getattr(e, name)
        return out

    def to_list(self):
        return [[e.to_dict() for e in row] for row in self.estimates]


def default_source_order(n_treatments, n_metrics):
    """All treatments for metric 0, then metric 1, and so on."""
    return [(j, k) for k in range(n_metrics) for j in range(1, n_treatments + 1)]


def merge_cohort_sets(sources, labels=None, probe=None, seed=0):
    """Common refinement of ``sources``.

    ``sources`` is a list of ``(CohortSet, [EffectEstimate per cohort])``.
    ``labels`` gives the ``(treatment, metric)`` pair per source; by default
    sources are labelled ``(l + 1, 0)``. Each source is validated as a
    partition (exact overlap check, probe-point gap check) before merging.
    """
    if not sources:
        raise ValidationError("need at least one source partition")
    n_features = sources[0][0].n_features
    for cs, eff in sources:
        if cs.n_features != n_features:
            raise ValidationError("sources disagree on feature dimension")
        if len(eff) != len(cs):
            raise ValidationError("one effect estimate per cohort is required")
    if labels is None:
        labels = [(l + 1, 0) for l in range(len(sources))]
    if len(labels) != len(sources):
        raise ValidationError("one label per source is required")
    if probe is None:
        probe = probe_points([cs for cs, _ in sources], n_features, seed=seed)
    for cs, _ in sources:
        cs.check_partition(probe)

    first_cs, first_eff = sources[0]
    cohorts = list(first_cs.cohorts)
    effects = [[e] for e in first_eff]
    for cs, eff in sources[1:]:
        # each current cohort A is replaced by its non-empty refinements A & B
        new_cohorts, new_effects = [], []
        for a, ea in zip(cohorts, effects):
            for b, eb in zip(cs.cohorts, eff):
                c = a.intersect(b, n_features)
                if not c.is_empty(n_features):
                    new_cohorts.append(c)
                    new_effects.append(ea + [eb])
        cohorts, effects = new_cohorts, new_effects
    return CohortSet(tuple(cohorts), n_features), EffectTable(effects, labels)
