"""Data ingestion, synthetic generators, experiment configuration and
result persistence.

An experiment is fully described by an :class:`ExperimentConfig`; rerunning
the same config with the same seed reproduces every output byte of the
metrics table.  The runner projects the data with each configured method,
fits the downstream head on the projected training samples, scores it on
the projected test samples, and persists metrics, features, train logs, a
config echo, and a hash manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .baselines import PCAReducer, SIRReducer
from .errors import ConfigError
from .estimator import StoNetSDR
from .heads import LinearHead, LogisticHead, evaluate
from .numerics import RngStream, StandardizationStats, standardize_columns
from .validation import as_matrix

METHODS = ("stonet", "pca", "sir")
_DATA_STREAM = 101


@dataclass
class Dataset:
    """Predictors, response, and ingestion metadata.

    ``y`` is an ``(n, d)`` float matrix for regression or an ``(n,)`` int
    label vector for classification.
    """

    X: np.ndarray
    y: np.ndarray
    task: str
    feature_names: list = field(default_factory=list)
    label_mapping: dict | None = None
    split: str | None = None
    n_rejected_rows: int = 0
    x_stats: StandardizationStats | None = None
    y_stats: StandardizationStats | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.task != "classification":
            raise ValueError("n_classes is defined for classification only")
        return int(self.y.max()) + 1


def load_csv(
    path,
    response_columns=None,
    label_column=None,
    has_header: bool = True,
) -> Dataset:
    """Parse a CSV file into a dataset.

    Exactly one of ``response_columns`` (regression) or ``label_column``
    (classification) must be given; columns are referenced by name when the
    file has a header, by 0-based index otherwise.  Rows containing missing
    or non-finite values are rejected and counted; rows with the wrong
    number of fields raise with their line number.  Labels are mapped to
    0..C-1 (numeric order when every label parses as a number, lexicographic
    otherwise) and the mapping is recorded.
    """
    if (response_columns is None) == (label_column is None):
        raise ConfigError("give exactly one of response_columns or label_column")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    if has_header:
        header = [c.strip() for c in rows[0]]
        body = rows[1:]
        first_line = 2
    else:
        header = list(range(len(rows[0])))
        body = rows
        first_line = 1

    def col_index(ref):
        if isinstance(ref, int) or (isinstance(ref, str) and not has_header):
            i = int(ref)
            if not 0 <= i < len(header):
                raise ConfigError(f"column index {i} out of range")
            return i
        if ref not in header:
            raise ConfigError(f"column {ref!r} not found in header {header}")
        return header.index(ref)

    task = "regression" if response_columns is not None else "classification"
    if task == "regression":
        y_idx = [col_index(c) for c in response_columns]
    else:
        y_idx = [col_index(label_column)]
    x_idx = [i for i in range(len(header)) if i not in y_idx]
    if not x_idx:
        raise ConfigError("no predictor columns left after removing the response")

    X_rows, y_raw, rejected = [], [], 0
    for offset, row in enumerate(body):
        line_no = first_line + offset
        if len(row) != len(header):
            raise ValueError(
                f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            x_vals = [float(row[i]) for i in x_idx]
        except ValueError as exc:
            raise ValueError(f"{path}:{line_no}: {exc}") from exc
        if task == "regression":
            try:
                y_vals = [float(row[i]) for i in y_idx]
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
            if not all(np.isfinite(v) for v in x_vals + y_vals):
                rejected += 1
                continue
            y_raw.append(y_vals)
        else:
            label = row[y_idx[0]].strip()
            if not all(np.isfinite(v) for v in x_vals) or label == "":
                rejected += 1
                continue
            y_raw.append(label)
        X_rows.append(x_vals)
    if not X_rows:
        raise ValueError(f"{path}: no usable rows ({rejected} rejected)")
    X = np.asarray(X_rows, dtype=np.float64)
    if rejected:
        warnings.warn(
            f"{path}: rejected {rejected} row(s) with missing values",
            RuntimeWarning,
            stacklevel=2,
        )

    mapping = None
    if task == "classification":
        values = set(y_raw)
        try:
            ordered = sorted(values, key=float)  # numeric labels sort by value
        except ValueError:
            ordered = sorted(values)
        mapping = {v: i for i, v in enumerate(ordered)}
        y = np.array([mapping[v] for v in y_raw], dtype=np.int64)
    else:
        y = np.asarray(y_raw, dtype=np.float64)
    names = (
        [header[i] for i in x_idx] if has_header else [f"x{i}" for i in x_idx]
    )
    return Dataset(
        X=X,
        y=y,
        task=task,
        feature_names=names,
        label_mapping=mapping,
        n_rejected_rows=rejected,
    )


def write_dataset_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    names = dataset.feature_names or [f"x{i + 1}" for i in range(dataset.p)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if dataset.task == "regression":
            y = np.atleast_2d(dataset.y)
            y = y if y.shape[0] == dataset.n else y.T
            y_names = [f"y{i + 1}" for i in range(y.shape[1])]
            if y.shape[1] == 1:
                y_names = ["y"]
            writer.writerow(list(names) + y_names)
            for xi, yi in zip(dataset.X, y):
                writer.writerow([repr(float(v)) for v in xi]
                                + [repr(float(v)) for v in yi])
        else:
            writer.writerow(list(names) + ["label"])
            for xi, yi in zip(dataset.X, dataset.y):
                writer.writerow([repr(float(v)) for v in xi] + [int(yi)])


def m1_index_vector() -> np.ndarray:
    """Unit index vector of the single-index benchmark: weight 1/sqrt(6) on
    the first six of 20 coordinates, zero elsewhere."""
    b = np.zeros(20)
    b[:6] = 1.0 / np.sqrt(6.0)
    return b


def gen_m1(
    n: int,
    stream: RngStream,
    noise_scale: float = float(np.sqrt(0.5)),
    noise_shape: float = 0.5,
) -> Dataset:
    """Synthetic single-index benchmark: 20 Gaussian predictors, response
    ``cos(x . b)`` plus heavy-tailed generalized-Gaussian noise, where ``b``
    puts weight ``1/sqrt(6)`` on the first six coordinates.

    ``noise_scale=0`` gives the noiseless variant.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = 20
    b = m1_index_vector()
    gen = stream.child(0).generator()
    X = gen.standard_normal((n, p))
    signal = np.cos(X @ b)
    if noise_scale > 0:
        from .numerics import sample_generalized_gaussian

        eps = sample_generalized_gaussian(
            stream.child(1), noise_scale, noise_shape, size=n
        )
    else:
        eps = np.zeros(n)
    y = (signal + eps)[:, None]
    return Dataset(
        X=X,
        y=y,
        task="regression",
        feature_names=[f"x{i + 1}" for i in range(p)],
    )


def gen_circle(
    n: int, stream: RngStream, p: int = 10, informative: int = 2
) -> Dataset:
    """Two classes separated by a circle in the first ``informative``
    coordinates of an isotropic Gaussian; the boundary radius makes the
    classes balanced in expectation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if informative < 1 or informative > p:
        raise ValueError("informative must be in [1, p]")
    gen = stream.child(0).generator()
    X = gen.standard_normal((n, p))
    r2 = np.sum(X[:, :informative] ** 2, axis=1)
    # Median of a chi-square with `informative` dof; for 2 dof it is 2 ln 2.
    if informative == 2:
        threshold = 2.0 * np.log(2.0)
    else:
        threshold = float(np.median(gen.chisquare(informative, size=200_001)))
    y = (r2 > threshold).astype(np.int64)
    return Dataset(
        X=X,
        y=y,
        task="classification",
        feature_names=[f"x{i + 1}" for i in range(p)],
    )


def split(dataset: Dataset, fraction: float, stream: RngStream):
    """Seeded permutation split; class-stratified for classification.

    Raises if any class ends up absent from either side.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    n = dataset.n
    gen = stream.generator()
    if dataset.task == "classification":
        train_idx, test_idx = [], []
        for c in np.unique(dataset.y):
            members = np.flatnonzero(dataset.y == c)
            members = members[gen.permutation(len(members))]
            k = int(round(len(members) * fraction))
            if k == 0 or k == len(members):
                raise ValueError(
                    f"class {c} would be absent from one side of the split"
                )
            train_idx.append(members[:k])
            test_idx.append(members[k:])
        train_idx = np.sort(np.concatenate(train_idx))
        test_idx = np.sort(np.concatenate(test_idx))
    else:
        perm = gen.permutation(n)
        k = int(round(n * fraction))
        if k == 0 or k == n:
            raise ValueError("split fraction leaves one side empty")
        train_idx = np.sort(perm[:k])
        test_idx = np.sort(perm[k:])

    def take(idx, tag):
        return Dataset(
            X=dataset.X[idx],
            y=dataset.y[idx],
            task=dataset.task,
            feature_names=list(dataset.feature_names),
            label_mapping=dataset.label_mapping,
            split=tag,
            x_stats=dataset.x_stats,
            y_stats=dataset.y_stats,
        )

    return take(train_idx, "train"), take(test_idx, "test")


def standardize_dataset(train: Dataset, test: Dataset | None = None):
    """Standardize predictors (and the response, for regression) using the
    training split's statistics; the stats are recorded on the datasets."""
    Xs, x_stats = standardize_columns(train.X)
    train.X = Xs
    train.x_stats = x_stats
    y_stats = None
    if train.task == "regression":
        ys, y_stats = standardize_columns(as_matrix(train.y, "y"))
        train.y = ys
        train.y_stats = y_stats
    if test is not None:
        test.X = x_stats.apply(test.X)
        test.x_stats = x_stats
        if y_stats is not None:
            test.y = y_stats.apply(as_matrix(test.y, "y"))
            test.y_stats = y_stats
    return train, test


@dataclass
class ExperimentConfig:
    """Complete, serializable description of one experiment run."""

    dataset: dict
    network: dict | None = None
    train: dict = field(default_factory=dict)
    methods: list = field(default_factory=lambda: ["stonet", "pca"])
    q: list = field(default_factory=lambda: [2])
    head: str | None = None
    n_slices: int = 10
    split_fraction: float = 0.8
    split_seed: int = 0
    seed: int = 0
    out_dir: str = "results"
    format: str = "csv"

    def __post_init__(self):
        self.methods = [str(m) for m in self.methods]
        self.q = [int(v) for v in self.q]
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        if any(v < 1 for v in self.q):
            raise ConfigError("q values must be >= 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must be in (0, 1)")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if "stonet" in self.methods and self.network is None:
            raise ConfigError("method 'stonet' needs a network section")
        if self.head is not None and self.head not in ("linear", "logistic"):
            raise ConfigError("head must be 'linear', 'logistic' or omitted")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(payload)

    def to_json(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )


@dataclass
class MetricRecord:
    method: str
    q: int
    seed: int
    metric: str
    value: float
    timestamp: float

    def to_row(self) -> list:
        return [self.method, self.q, self.seed, self.metric, repr(self.value)]


@dataclass
class ResultBundle:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    features: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    manifest: dict | None = None


def _load_dataset(config: ExperimentConfig) -> Dataset:
    spec = config.dataset
    if "synthetic" in spec:
        name = spec["synthetic"]
        n = int(spec.get("n", 100))
        stream = RngStream(config.seed).child(_DATA_STREAM)
        if name == "m1":
            return gen_m1(
                n,
                stream,
                noise_scale=float(spec.get("noise_scale", np.sqrt(0.5))),
                noise_shape=float(spec.get("noise_shape", 0.5)),
            )
        if name == "circle":
            return gen_circle(
                n,
                stream,
                p=int(spec.get("p", 10)),
                informative=int(spec.get("informative", 2)),
            )
        raise ConfigError(f"unknown synthetic dataset {name!r}")
    if "path" in spec:
        return load_csv(
            spec["path"],
            response_columns=spec.get("response_columns"),
            label_column=spec.get("label_column"),
            has_header=bool(spec.get("has_header", True)),
        )
    raise ConfigError("dataset needs either 'path' or 'synthetic'")


def _stonet_estimator(config: ExperimentConfig, dataset: Dataset, q: int) -> StoNetSDR:
    net = dict(config.network)
    widths = [int(w) for w in net["widths"]]
    if len(widths) < 3:
        raise ConfigError("network widths need at least one hidden layer")
    hidden = widths[1:-1]
    hidden[-1] = q
    train_kwargs = dict(config.train)
    train_kwargs.setdefault("seed", config.seed)
    noise = net.get("noise_vars")
    # TrainConfig normalizes list-valued schedule fields from JSON.
    return StoNetSDR(
        hidden_widths=tuple(hidden),
        activation=net.get("activation", "tanh"),
        task=dataset.task,
        noise_vars=tuple(noise) if noise is not None else None,
        random_state=train_kwargs.pop("seed"),
        **train_kwargs,
    )


def _head_for(config: ExperimentConfig, task: str):
    kind = config.head or ("logistic" if task == "classification" else "linear")
    if kind == "logistic":
        if task != "classification":
            raise ConfigError("logistic head needs a classification task")
        return LogisticHead()
    if task != "regression":
        raise ConfigError("linear head needs a regression task")
    return LinearHead()


def run_experiment(config: ExperimentConfig, write: bool = True) -> ResultBundle:
    """Reduce, fit the head, and score, for every (method, q) cell.

    Failures in one cell are recorded and do not block other cells; the
    bundle (with whatever cells completed) is persisted to
    ``config.out_dir`` unless ``write=False``.
    """
    started = time.perf_counter()
    bundle = ResultBundle(config=config)
    dataset = _load_dataset(config)
    train_ds, test_ds = split(
        dataset, config.split_fraction, RngStream(config.split_seed)
    )
    train_ds, test_ds = standardize_dataset(train_ds, test_ds)

    for method in config.methods:
        for q in config.q:
            cell = f"{method}_q{q}"
            try:
                if method == "stonet":
                    est = _stonet_estimator(config, train_ds, q)
                    Z_train = est.fit_transform(train_ds.X, train_ds.y)
                    Z_test = est.transform(test_ds.X)
                    bundle.reports[cell] = est.report_
                elif method == "pca":
                    est = PCAReducer(q=q).fit(train_ds.X)
                    Z_train = est.transform(train_ds.X)
                    Z_test = est.transform(test_ds.X)
                else:
                    est = SIRReducer(q=q, n_slices=config.n_slices).fit(
                        train_ds.X, train_ds.y
                    )
                    Z_train = est.transform(train_ds.X)
                    Z_test = est.transform(test_ds.X)
                head = _head_for(config, dataset.task)
                head.fit(Z_train, train_ds.y)
                metrics = evaluate(head, Z_test, test_ds.y)
                bundle.features[cell] = Z_train
                ts = time.time()
                for name, value in metrics.to_dict().items():
                    bundle.records.append(
                        MetricRecord(
                            method=method,
                            q=q,
                            seed=config.seed,
                            metric=name,
                            value=float(value),
                            timestamp=ts,
                        )
                    )
            except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
                bundle.errors[cell] = f"{type(exc).__name__}: {exc}"
    bundle.wall_clock = time.perf_counter() - started
    if write:
        bundle.manifest = write_results(bundle, config.out_dir)
    return bundle


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_results(bundle: ResultBundle, out_dir) -> dict:
    """Persist a result bundle; returns the file manifest (name -> sha256).

    The metrics table is schema-stable and timestamp-free so identical
    (config, seed) reruns produce byte-identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    metrics_path = out / ("metrics.csv" if bundle.config.format == "csv" else "metrics.json")
    rows = sorted(
        bundle.records, key=lambda r: (r.method, r.q, r.metric)
    )
    if bundle.config.format == "csv":
        with metrics_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "q", "seed", "metric", "value"])
            for rec in rows:
                writer.writerow(rec.to_row())
    else:
        payload = [
            {
                "method": r.method,
                "q": r.q,
                "seed": r.seed,
                "metric": r.metric,
                "value": r.value,
            }
            for r in rows
        ]
        metrics_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    written.append(metrics_path)

    from .sdr import write_features_csv

    for cell, Z in sorted(bundle.features.items()):
        fpath = out / f"features_{cell}.csv"
        write_features_csv(Z, fpath)
        written.append(fpath)

    for cell, report in sorted(bundle.reports.items()):
        lpath = out / f"train_log_{cell}.jsonl"
        lpath.write_text(report.to_jsonl() + "\n", encoding="utf-8")
        written.append(lpath)

    echo_path = out / "config_echo.json"
    bundle.config.to_json(echo_path)
    written.append(echo_path)

    summary_path = out / "summary.json"
    summary_path.write_text(
        json.dumps(
            {
                "errors": dict(sorted(bundle.errors.items())),
                "wall_clock_seconds": bundle.wall_clock,
                "n_metric_records": len(bundle.records),
                "record_timestamps": {
                    f"{r.method}_q{r.q}_{r.metric}": r.timestamp
                    for r in bundle.records
                },
            },
            indent=2,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    written.append(summary_path)

    manifest = {p.name: _sha256(p) for p in written}
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    return manifest
