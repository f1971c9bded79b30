"""Dataset directory format and desk-scale synthetic classification data.

A dataset directory holds four plain files:

    edges.txt     one undirected edge per line, "i j", 0-based, '#' comments
    features.csv  one node per row, comma-separated floats
    labels.txt    one integer label per line (binary {0,1} for the metrics)
    sens.txt      one sensitive attribute per line, -1 or 1

Features are written with 17 significant digits so a write/load round trip
reproduces them to better than 1e-9.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MissingFile,
    NonBinaryLabel,
    NonBinarySensitive,
    RowCountMismatch,
)
from .graph import (
    Graph,
    SensitiveVector,
    build_graph,
    incident_vector,
    label_homophily,
    read_edge_list,
    sensitive_homophily,
    write_edge_list,
)
from .synth import SbmParams, sample_sbm

REQUIRED_FILES = ("edges.txt", "features.csv", "labels.txt", "sens.txt")


@dataclass
class DatasetBundle:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    sens: SensitiveVector
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.graph.n


def load_dataset(directory, verbose: bool = True) -> DatasetBundle:
    """Read and validate a dataset directory.

    Node count is defined by sens.txt; features and labels must match it
    row for row, and every edge index must fall inside it. Prints the label
    and sensitive homophily unless ``verbose`` is off.
    """
    directory = os.fspath(directory)
    missing = [f for f in REQUIRED_FILES if not os.path.exists(os.path.join(directory, f))]
    if missing:
        raise MissingFile(f"{directory} is missing {', '.join(missing)}")

    sens_raw = np.loadtxt(os.path.join(directory, "sens.txt"), dtype=np.int64, ndmin=1)
    if not np.isin(sens_raw, (-1, 1)).all():
        bad = sens_raw[~np.isin(sens_raw, (-1, 1))][0]
        raise NonBinarySensitive(f"sens.txt must contain only -1/1, found {bad}")
    n = sens_raw.shape[0]

    features = np.loadtxt(
        os.path.join(directory, "features.csv"), delimiter=",", dtype=np.float64, ndmin=2
    )
    if features.shape[0] != n:
        raise RowCountMismatch(
            f"features.csv has {features.shape[0]} rows, sens.txt has {n}"
        )
    labels = np.loadtxt(os.path.join(directory, "labels.txt"), dtype=np.int64, ndmin=1)
    if labels.shape[0] != n:
        raise RowCountMismatch(
            f"labels.txt has {labels.shape[0]} rows, sens.txt has {n}"
        )
    if not np.isin(labels, (0, 1)).all():
        raise NonBinaryLabel("labels must be binary {0,1} for the metric pipeline")

    graph = build_graph(read_edge_list(os.path.join(directory, "edges.txt")), n)
    sens = incident_vector(sens_raw)
    if verbose:
        try:
            lh = label_homophily(graph, labels)
            sh = sensitive_homophily(graph, sens)
            print(f"loaded {directory}: n={n} m={graph.num_edges} "
                  f"label_homophily={lh:.4f} sens_homophily={sh:.4f}")
        except Exception:
            print(f"loaded {directory}: n={n} m={graph.num_edges} (edgeless)")
    return DatasetBundle(graph=graph, features=features, labels=labels, sens=sens,
                         meta={"source": directory})


def write_dataset(directory, bundle: DatasetBundle) -> None:
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    write_edge_list(os.path.join(directory, "edges.txt"), bundle.graph)
    np.savetxt(os.path.join(directory, "features.csv"), bundle.features,
               delimiter=",", fmt="%.17g")
    np.savetxt(os.path.join(directory, "labels.txt"), bundle.labels, fmt="%d")
    np.savetxt(os.path.join(directory, "sens.txt"), bundle.sens.s, fmt="%d")


def make_biased_classification(
    n: int = 800,
    rho_d: float = 0.02,
    eps_sens: float = 0.95,
    c: float = 0.5,
    label_corr: float = 0.05,
    group_scale: float = 1.0,
    label_scale: float = 1.2,
    noise_dims: int = 2,
    seed: int = 0,
) -> DatasetBundle:
    """Labeled synthetic dataset with topology bias.

    The graph comes from the two-block family at the given sensitive
    homophily. Labels correlate with the group: P(y=1 | s=+1) = 0.5 +
    label_corr and P(y=1 | s=-1) = 0.5 - label_corr. Features carry one
    group-signal column (group_scale * s), one genuine label-signal column
    (label_scale * (2y-1)) and ``noise_dims`` pure-noise columns, all with
    unit Gaussian noise, so a fair classifier can stay accurate through the
    label column while ignoring the group column.
    """
    params = SbmParams(n=n, rho_d=rho_d, eps_sens=eps_sens, c=c)
    graph, sens = sample_sbm(params, seed)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 51]))
    p_pos = np.where(sens.s > 0, 0.5 + label_corr, 0.5 - label_corr)
    labels = (rng.random(n) < p_pos).astype(np.int64)
    cols = [
        group_scale * sens.s.astype(np.float64),
        label_scale * (2.0 * labels - 1.0),
    ] + [np.zeros(n)] * noise_dims
    features = np.stack(cols, axis=1) + rng.standard_normal((n, 2 + noise_dims))
    meta = {
        "generator": "biased_classification",
        "n": n, "rho_d": rho_d, "eps_sens": eps_sens, "c": c,
        "label_corr": label_corr, "group_scale": group_scale,
        "label_scale": label_scale, "noise_dims": noise_dims, "seed": int(seed),
    }
    return DatasetBundle(graph=graph, features=features, labels=labels, sens=sens, meta=meta)
