"""Helpers shared by the experiment scripts."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from surme import io


@dataclass
class StudyConfig:
    case: str = "I-1"
    estimator: str = "fgls"
    reps: int = 20
    seed: int = 2024
    workers: int | None = None
    mcmc: dict = field(default_factory=dict)
    out: str | None = None


def print_table(summary, names, truth=None):
    truth = truth or {}
    print(f"{'param':>10s} {'true':>8s} {'mean':>9s} {'re':>8s} {'sd':>8s} {'lower':>9s} {'upper':>9s}")
    for n in names:
        if n not in summary.mean:
            continue
        t = truth.get(n)
        re = summary.rel_error.get(n)
        print(f"{n:>10s} {t if t is not None else float('nan'):8.3f} {summary.mean[n]:9.4f} "
              f"{re if re is not None else float('nan'):8.3f} {summary.sd[n]:8.4f} "
              f"{summary.lower[n]:9.4f} {summary.upper[n]:9.4f}")


def save(summary, cfg: StudyConfig):
    if not cfg.out:
        return
    path = Path(cfg.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    io.save_json({"config": asdict(cfg), "summary": summary.to_dict()}, path)
    print(f"saved {path}")


PARAMS = ["beta11", "beta12", "beta13", "beta21", "beta22", "beta23", "gamma1", "gamma2",
          "sigma_z2", "sigma_u2", "sigma11", "sigma12", "sigma22"]


def dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
