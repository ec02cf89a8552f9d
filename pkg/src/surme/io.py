"""Reading and writing datasets, priors, chains and fit reports.

Formats:

* dataset: a comma-separated table with a header row plus a JSON manifest
  naming, per equation, the response column, the covariate columns (the
  marker ``__const__`` synthesizes an intercept) and the mismeasured reading;
* report: indented JSON with ``schema = "surme-report/1"``;
* chain: header row of parameter names, one row per retained draw;
* latent Z summary: rows ``i,m,mean,var`` (1-based indices).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import FitReport, PriorSpec, SurDataset, ValidationError, validate

CONST = "__const__"
FMT = "%.17g"


@dataclass
class EquationSpec:
    response: str
    covariates: list[str]
    reading: str


@dataclass
class DatasetManifest:
    path: Path
    equations: list[EquationSpec] = field(default_factory=list)
    exposure: bool = True

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "DatasetManifest":
        try:
            path = Path(d["data"])
            eqs = [EquationSpec(e["response"], list(e["covariates"]), e["reading"])
                   for e in d["equations"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError([f"malformed manifest: missing {exc}"]) from None
        if base is not None and not path.is_absolute():
            path = base / path
        if not eqs:
            raise ValidationError(["manifest must list at least one equation"])
        return cls(path, eqs, bool(d.get("exposure", True)))

    def to_dict(self, relative_to: Path | None = None) -> dict:
        path = self.path
        if relative_to is not None:
            try:
                path = path.relative_to(relative_to)
            except ValueError:
                pass
        return {
            "data": str(path),
            "exposure": self.exposure,
            "equations": [vars(e) for e in self.equations],
        }


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path) as fh:
        return DatasetManifest.from_dict(json.load(fh), base=path.parent)


def _read_table(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError([f"{path}: empty file"])
    header = [h.strip() for h in rows[0]]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise ValidationError([f"{path}: duplicate column(s) {dupes}"])
    body = [r for r in rows[1:] if r]
    out = np.empty((len(body), len(header)))
    problems = []
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            problems.append(f"{path}: row {i} has {len(row)} fields, header has {len(header)}")
            continue
        for j, cell in enumerate(row):
            try:
                out[i - 2, j] = float(cell)
            except ValueError:
                problems.append(f"{path}: non-numeric cell {cell!r} at row {i}, column {header[j]!r}")
    if problems:
        raise ValidationError(problems)
    return header, out


def load_dataset(manifest: DatasetManifest | str | Path, priors: PriorSpec | None = None) -> SurDataset:
    """Load and validate the dataset described by ``manifest``.

    Row numbers in error messages count the header as row 1.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = read_manifest(manifest)
    if not manifest.path.exists():
        raise ValidationError([f"data file {manifest.path} does not exist"])
    header, table = _read_table(manifest.path)
    index = {h: j for j, h in enumerate(header)}
    missing = []
    for e in manifest.equations:
        for name in [e.response, e.reading, *e.covariates]:
            if name != CONST and name not in index and name not in missing:
                missing.append(name)
    if missing:
        raise ValidationError([f"missing column {name!r} in {manifest.path}" for name in missing])
    n = table.shape[0]

    def col(name):
        return np.ones(n) if name == CONST else table[:, index[name]]

    y = np.column_stack([col(e.response) for e in manifest.equations])
    W = np.column_stack([col(e.reading) for e in manifest.equations])
    X = tuple(np.column_stack([col(c) for c in e.covariates]) for e in manifest.equations)
    names = {
        "response": [e.response for e in manifest.equations],
        "reading": [e.reading for e in manifest.equations],
        "covariates": [list(e.covariates) for e in manifest.equations],
    }
    data = SurDataset(y, X, W, names=names)
    if priors is None:
        priors = PriorSpec.default(data.k, data.M, manifest.exposure)
    validate(data, priors)
    return data


def save_dataset(data: SurDataset, directory, stem: str = "data", exposure: bool = True) -> Path:
    """Write ``<stem>.csv`` and ``<stem>.json`` (the manifest); returns the manifest path.

    Values are written with 17 significant digits so a reload is bit-exact.
    A leading all-ones covariate is written as the intercept marker.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cols, header, eqs = [], [], []
    for m in range(data.M):
        resp, read = f"y{m + 1}", f"w{m + 1}"
        covs = []
        for j in range(data.k[m]):
            x = data.X[m][:, j]
            if j == 0 and np.all(x == 1.0):
                covs.append(CONST)
                continue
            name = f"x{m + 1}{j + 1}"
            covs.append(name)
            header.append(name)
            cols.append(x)
        header += [resp, read]
        cols += [data.y[:, m], data.W[:, m]]
        eqs.append(EquationSpec(resp, covs, read))
    csv_path = directory / f"{stem}.csv"
    np.savetxt(csv_path, np.column_stack(cols), delimiter=",", fmt=FMT,
               header=",".join(header), comments="")
    manifest = DatasetManifest(csv_path, eqs, exposure)
    man_path = directory / f"{stem}.json"
    _dump_json(manifest.to_dict(relative_to=directory), man_path)
    return man_path


# ---------------------------------------------------------------------------
# reports and priors


def _clean(obj):
    """Recursively convert numpy scalars/arrays to plain Python for JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _dump_json(obj, path) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def save_report(report: FitReport, path) -> None:
    _dump_json(report.to_dict(), path)


def load_report(path) -> FitReport:
    with open(path) as fh:
        return FitReport.from_dict(json.load(fh))


def save_json(obj, path) -> None:
    _dump_json(obj, path)


_PRIOR_ARRAYS = ("beta0", "B0", "gamma0", "G0", "S0", "omega0", "O0", "mu0")


def save_priors(priors: PriorSpec, path) -> None:
    d = {name: getattr(priors, name) for name in _PRIOR_ARRAYS}
    d.update(nu0=priors.nu0, exposure=priors.exposure, sigma_mu2=priors.sigma_mu2,
             delta1=priors.delta1, delta2=priors.delta2, delta3=priors.delta3, delta4=priors.delta4)
    _dump_json(d, path)


def load_priors(path, data: SurDataset | None = None, exposure: bool = True) -> PriorSpec:
    """Read a prior file. With ``path=None`` the defaults for ``data`` are returned.

    Keys left out of the file fall back to the defaults. ``S0`` is the Wishart
    scale of the error precision; ``iw_scale`` may be given instead.
    """
    if data is None and path is None:
        raise ValueError("need a prior file or a dataset to size the defaults")
    base = PriorSpec.default(data.k, data.M, exposure) if data is not None else None
    if path is None:
        return base
    with open(path) as fh:
        d = json.load(fh)
    if "iw_scale" in d:
        if "S0" in d:
            raise ValidationError(["prior file gives both S0 and iw_scale"])
        d["S0"] = np.linalg.inv(np.asarray(d.pop("iw_scale"), dtype=float))
    kw = {}
    for name, val in d.items():
        if name in _PRIOR_ARRAYS:
            kw[name] = None if val is None else np.atleast_1d(np.asarray(val, dtype=float))
        elif name in ("nu0", "sigma_mu2", "delta1", "delta2", "delta3", "delta4"):
            kw[name] = float(val)
        elif name == "exposure":
            kw[name] = bool(val)
        else:
            raise ValidationError([f"unknown prior key {name!r}"])
    for name in ("B0", "G0", "S0", "O0"):
        if name in kw:
            kw[name] = np.atleast_2d(kw[name])
    if base is None:
        return PriorSpec(**kw)
    return base.replace(**kw)


# ---------------------------------------------------------------------------
# chains


def write_chain(series: dict[str, np.ndarray], path) -> None:
    names = list(series)
    mat = np.column_stack([np.asarray(series[n], dtype=float) for n in names]) if names else np.empty((0, 0))
    np.savetxt(path, mat, delimiter=",", fmt=FMT, header=",".join(names), comments="")


def read_chain(path) -> dict[str, np.ndarray]:
    header, table = _read_table(Path(path))
    return {name: table[:, j].copy() for j, name in enumerate(header)}


def write_z_table(z_mean: np.ndarray, z_var: np.ndarray, path) -> None:
    N, M = z_mean.shape
    ii, mm = np.meshgrid(np.arange(1, N + 1), np.arange(1, M + 1), indexing="ij")
    rows = np.column_stack([ii.ravel(), mm.ravel(), z_mean.ravel(), z_var.ravel()])
    with open(path, "w") as fh:
        fh.write("i,m,mean,var\n")
        for i, m, mu, v in rows:
            fh.write(f"{int(i)},{int(m)},{FMT % mu},{FMT % v}\n")


def read_z_table(path) -> tuple[np.ndarray, np.ndarray]:
    header, table = _read_table(Path(path))
    if header != ["i", "m", "mean", "var"]:
        raise ValidationError([f"{path}: expected header i,m,mean,var"])
    N, M = int(table[:, 0].max()), int(table[:, 1].max())
    mean, var = np.full((N, M), math.nan), np.full((N, M), math.nan)
    ii, mm = table[:, 0].astype(int) - 1, table[:, 1].astype(int) - 1
    mean[ii, mm] = table[:, 2]
    var[ii, mm] = table[:, 3]
    return mean, var
