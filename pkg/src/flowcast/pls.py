"""Covariance-maximizing latent projections for partial-day flow prediction.

Given per-day predictor samples Z (morning flows) and predicted samples Y
(rest-of-day flows), the fit extracts score directions that maximize the
empirical covariance between linear combinations of Z and Y columns, then
deflates and repeats.  Each iteration:

1. take the leading singular pair (r, s) of ``Zc.T @ Yc``;
2. normalize the score ``w = Zc r / ||Zc r||``;
3. project loadings ``p = Zc.T w`` and ``c = Yc.T w``;
4. deflate ``Zc <- Zc - w p.T`` and ``Yc <- Yc - w c.T``.

Prediction for a new sample z is ``(z - z_mean) @ pinv(P.T) @ C.T + y_mean``.

Two fit routes share this contract: :func:`fit_pls` forms the cross-product
matrix explicitly, while :func:`fit_pls_kernel` works only with the day-by-day
kernel matrices ``Zc @ Zc.T`` and ``Yc @ Yc.T``, which is much cheaper when
days are scarce relative to intervals.  The score equals the leading
eigenvector of ``Kz @ Ky``, found by power iteration.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flowdata import FlowDataset, SplitSpec, split_at

# Power iteration controls (kernel route).
_POWER_TOL = 1e-10
_POWER_MAX_ITER = 10_000
_RESTART_SEED = 0x5EED

# A singular direction is treated as degenerate when the score norm falls
# below this fraction of the initial predictor scale.
_DEGENERATE_REL = 1e-12


@dataclass
class PlsModel:
    """Fitted latent-projection model.

    Attributes
    ----------
    predictor_loadings : (dim_z, N) array, one column per component.
    predicted_loadings : (dim_y, N) array.
    scores : (D, N) array of unit-norm, mutually orthogonal day scores.
    mean_z, mean_y : training column means.
    split : SplitSpec or None
        The day split the model was fitted on, when known.
    n_dropped : int
        Components requested but abandoned because no covariance direction
        remained (degenerate deflation).
    """

    predictor_loadings: np.ndarray
    predicted_loadings: np.ndarray
    scores: np.ndarray
    mean_z: np.ndarray
    mean_y: np.ndarray
    split: SplitSpec | None = None
    n_dropped: int = 0
    z_residual_norm: float = 0.0
    y_residual_norm: float = 0.0
    _pinv_pt: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self._pinv_pt is None:
            # Cached once: prediction is a fixed affine map.
            self._pinv_pt = np.linalg.pinv(self.predictor_loadings.T)

    @property
    def n_components(self) -> int:
        return self.predictor_loadings.shape[1]


def _first_nonzero_sign_fix(omega, p, c):
    """Flip (omega, p, c) together so the first nonzero entry of p is positive."""
    mags = np.abs(p)
    scale = mags.max()
    if scale == 0:
        return omega, p, c
    idx = int(np.argmax(mags > 1e-12 * scale))
    if p[idx] < 0:
        return -omega, -p, -c
    return omega, p, c


def _validate_fit_args(z, y, n_components):
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.ndim != 2 or y.ndim != 2:
        raise ValueError("Z and Y must be 2-D (days x features)")
    if z.shape[0] != y.shape[0]:
        raise ValueError(f"Z has {z.shape[0]} days but Y has {y.shape[0]}")
    d = z.shape[0]
    if d < 2:
        raise ValueError("fitting requires at least 2 days")
    if not (1 <= n_components <= d - 1):
        raise ValueError(f"n_components={n_components} outside [1, {d - 1}] for {d} days")
    return z, y


def fit_pls(z: np.ndarray, y: np.ndarray, n_components: int,
            split: SplitSpec | None = None) -> PlsModel:
    """Fit by explicitly forming the cross-product matrix each iteration.

    Parameters
    ----------
    z : (D, dim_z) array of predictor samples, one day per row.
    y : (D, dim_y) array of predicted samples.
    n_components : int in [1, D-1].
    split : optional SplitSpec recorded on the model.

    Returns
    -------
    PlsModel — with fewer than ``n_components`` components (and a warning)
    if deflation runs out of covariance directions early.
    """
    z, y = _validate_fit_args(z, y, n_components)
    mean_z, mean_y = z.mean(axis=0), y.mean(axis=0)
    zc, yc = z - mean_z, y - mean_y
    z_scale = np.linalg.norm(zc)

    omegas, ps, cs = [], [], []
    dropped = 0
    for i in range(n_components):
        cross = zc.T @ yc
        u, s, _vt = np.linalg.svd(cross, full_matrices=False)
        r = u[:, 0]
        t_raw = zc @ r
        norm = np.linalg.norm(t_raw)
        if norm <= _DEGENERATE_REL * max(z_scale, 1.0) or s[0] == 0.0:
            dropped = n_components - i
            warnings.warn(
                f"stopping after {i} components: no covariance direction left "
                f"({dropped} dropped)",
                stacklevel=2,
            )
            break
        omega = t_raw / norm
        p = zc.T @ omega
        c = yc.T @ omega
        omega, p, c = _first_nonzero_sign_fix(omega, p, c)
        omegas.append(omega)
        ps.append(p)
        cs.append(c)
        zc = zc - np.outer(omega, p)
        yc = yc - np.outer(omega, c)

    return _assemble(z, omegas, ps, cs, mean_z, mean_y, split, dropped, zc, yc)


def _assemble(z, omegas, ps, cs, mean_z, mean_y, split, dropped, zc_final, yc_final):
    d = z.shape[0]
    n = len(omegas)
    model = PlsModel(
        predictor_loadings=np.column_stack(ps) if n else np.zeros((z.shape[1], 0)),
        predicted_loadings=np.column_stack(cs) if n else np.zeros((mean_y.size, 0)),
        scores=np.column_stack(omegas) if n else np.zeros((d, 0)),
        mean_z=np.asarray(mean_z, dtype=float),
        mean_y=np.asarray(mean_y, dtype=float),
        split=split,
        n_dropped=dropped,
        z_residual_norm=float(np.linalg.norm(zc_final)),
        y_residual_norm=float(np.linalg.norm(yc_final)),
    )
    return model


def _power_leading_score(kz: np.ndarray, ky: np.ndarray,
                         tiny: float) -> tuple[np.ndarray | None, float]:
    """Leading eigenvector of ``kz @ ky`` by power iteration.

    Starts from the first canonical basis vector; restarts once from a fixed
    seeded random vector if the iteration stagnates (no convergence, or the
    eigenvalue estimate collapses to zero).  ``tiny`` is an absolute floor for
    iterate norms, derived from the *undeflated* kernels so that deflation
    residue (float junk left after projecting a direction out) cannot pass as
    signal.  Returns (vector, eigenvalue), or (None, 0.0) when no direction
    with positive eigenvalue exists.
    """
    d = kz.shape[0]

    def run(v0):
        v = v0
        lam_prev = np.inf
        for _ in range(_POWER_MAX_ITER):
            w = kz @ (ky @ v)
            norm = np.linalg.norm(w)
            if norm <= tiny:
                return None, 0.0, True
            v = w / norm
            lam = float(v @ (kz @ (ky @ v)))
            if abs(lam - lam_prev) <= _POWER_TOL * max(1.0, abs(lam)):
                return v, lam, False
            lam_prev = lam
        return v, lam_prev, True  # did not converge: stagnation

    v0 = np.zeros(d)
    v0[0] = 1.0
    v, lam, stagnated = run(v0)
    if stagnated:
        rng = np.random.default_rng(_RESTART_SEED)
        v0 = rng.standard_normal(d)
        v0 /= np.linalg.norm(v0)
        v2, lam2, _ = run(v0)
        if v2 is not None and (v is None or lam2 >= lam):
            v, lam = v2, lam2
    if v is None or lam <= tiny:
        return None, 0.0
    return v, lam


def fit_pls_kernel(z: np.ndarray, y: np.ndarray, n_components: int,
                   split: SplitSpec | None = None) -> PlsModel:
    """Fit via day-by-day kernel matrices; contract identical to :func:`fit_pls`.

    The (dim_z x dim_y) cross-product matrix is never formed.  Scores come
    from power iteration on ``Kz @ Ky`` (both D x D); deflation projects the
    kernels onto the orthogonal complement of each score.  Loadings are
    recovered from the original centered matrices, which is exact because the
    scores are mutually orthogonal.
    """
    z, y = _validate_fit_args(z, y, n_components)
    mean_z, mean_y = z.mean(axis=0), y.mean(axis=0)
    zc, yc = z - mean_z, y - mean_y
    kz = zc @ zc.T
    ky = yc @ yc.T
    kz_cur, ky_cur = kz.copy(), ky.copy()
    z_scale = np.linalg.norm(zc)
    tiny = np.finfo(float).eps * float(np.linalg.norm(kz) * np.linalg.norm(ky))

    omegas, ps, cs = [], [], []
    dropped = 0
    for i in range(n_components):
        omega, _lam = _power_leading_score(kz_cur, ky_cur, tiny)
        if omega is not None:
            # Same degeneracy rule as the direct route: no predictor mass
            # left along the direction.  Measured on the deflated kernel so
            # projection residue of earlier components cannot pass as signal.
            t_norm = float(np.sqrt(max(omega @ kz_cur @ omega, 0.0)))
            if t_norm <= _DEGENERATE_REL * max(z_scale, 1.0):
                omega = None
        if omega is None:
            dropped = n_components - i
            warnings.warn(
                f"stopping after {i} components: no covariance direction left "
                f"({dropped} dropped)",
                stacklevel=2,
            )
            break
        p = zc.T @ omega
        c = yc.T @ omega
        omega, p, c = _first_nonzero_sign_fix(omega, p, c)
        omegas.append(omega)
        ps.append(p)
        cs.append(c)
        proj = np.eye(len(omega)) - np.outer(omega, omega)
        kz_cur = proj @ kz_cur @ proj
        ky_cur = proj @ ky_cur @ proj

    # Residual norms follow from the deflated kernels' traces.
    z_res = float(np.sqrt(max(np.trace(kz_cur), 0.0)))
    y_res = float(np.sqrt(max(np.trace(ky_cur), 0.0)))
    model = _assemble(z, omegas, ps, cs, mean_z, mean_y, split, dropped,
                      np.zeros((0, 0)), np.zeros((0, 0)))
    model.z_residual_norm = z_res
    model.y_residual_norm = y_res
    return model


def predict(model: PlsModel, z_sample: np.ndarray) -> np.ndarray:
    """Predict the rest-of-day sample(s) for new predictor sample(s).

    Accepts a single (dim_z,) vector or a (k, dim_z) matrix; the output
    matches.  The map is affine: ``(z - mean_z) @ pinv(P.T) @ C.T + mean_y``.
    Predicting the training predictor mean returns the training target mean.
    """
    zs = np.asarray(z_sample, dtype=float)
    single = zs.ndim == 1
    zs2 = np.atleast_2d(zs)
    if zs2.shape[1] != model.mean_z.size:
        raise ValueError(
            f"predictor sample has {zs2.shape[1]} features, model expects "
            f"{model.mean_z.size}"
        )
    scores = (zs2 - model.mean_z) @ model._pinv_pt
    out = scores @ model.predicted_loadings.T + model.mean_y
    return out[0] if single else out


@dataclass(frozen=True)
class LoocvRecord:
    """Held-out-day evaluation: one-norm errors and their normalized decrease."""

    date: str
    e_pred: float
    e_base: float
    decrease: float


def loocv(ds: FlowDataset, spec: SplitSpec, n_components: int,
          fitter=fit_pls_kernel) -> list[LoocvRecord]:
    """Leave-one-out evaluation over every day of the dataset.

    Each fold refits on the remaining days (fold means exclude the held-out
    day).  ``e_pred`` is the one-norm prediction error on the held-out day's
    predicted window; ``e_base`` the one-norm error of the fold's mean target.
    ``decrease`` is ``(e_base - e_pred) / e_base`` and defined as 0 when the
    baseline error is 0.
    """
    if ds.n_days < 3:
        raise ValueError("leave-one-out evaluation requires at least 3 days")
    z, y = split_at(ds, spec)
    records = []
    for d in range(ds.n_days):
        z_f = np.delete(z, d, axis=0)
        y_f = np.delete(y, d, axis=0)
        model = fitter(z_f, y_f, n_components, split=spec)
        y_hat = predict(model, z[d])
        e_pred = float(np.abs(y[d] - y_hat).sum())
        e_base = float(np.abs(y[d] - y_f.mean(axis=0)).sum())
        decrease = 0.0 if e_base == 0.0 else (e_base - e_pred) / e_base
        records.append(LoocvRecord(ds.days[d].date, e_pred, e_base, decrease))
    return records


def pls_to_json(model: PlsModel, path: str | Path | None = None,
                manifest_hash: str | None = None) -> dict:
    """Serialize to a versioned JSON document (optionally written to disk)."""
    doc = {
        "format_version": 1,
        "kind": "pls_model",
        "predictor_loadings": model.predictor_loadings.tolist(),
        "predicted_loadings": model.predicted_loadings.tolist(),
        "scores": model.scores.tolist(),
        "mean_z": model.mean_z.tolist(),
        "mean_y": model.mean_y.tolist(),
        "n_dropped": model.n_dropped,
        "z_residual_norm": model.z_residual_norm,
        "y_residual_norm": model.y_residual_norm,
        "split": None if model.split is None else {
            "cutoff_index": model.split.cutoff_index,
            "predict_from": model.split.predict_from,
            "predict_to": model.split.predict_to,
            "predictor_stride": model.split.predictor_stride,
            "predicted_stride": model.split.predicted_stride,
        },
    }
    if manifest_hash:
        doc["manifest_hash"] = manifest_hash
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
    return doc


def pls_from_json(source: str | Path | dict) -> PlsModel:
    """Load a model serialized by :func:`pls_to_json`."""
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    if doc.get("kind") != "pls_model" or doc.get("format_version") != 1:
        raise ValueError("not a version-1 pls_model document")
    split = None
    if doc["split"] is not None:
        split = SplitSpec(**doc["split"])
    return PlsModel(
        predictor_loadings=np.asarray(doc["predictor_loadings"], dtype=float),
        predicted_loadings=np.asarray(doc["predicted_loadings"], dtype=float),
        scores=np.asarray(doc["scores"], dtype=float),
        mean_z=np.asarray(doc["mean_z"], dtype=float),
        mean_y=np.asarray(doc["mean_y"], dtype=float),
        split=split,
        n_dropped=int(doc["n_dropped"]),
        z_residual_norm=float(doc["z_residual_norm"]),
        y_residual_norm=float(doc["y_residual_norm"]),
    )
