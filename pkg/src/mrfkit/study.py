"""Dictionary-density study: reconstruction error versus subsampling.

For each subsampling factor the full dictionary is strided down and used
two ways: to train a network, and directly as the matching template set.
Both reconstructors then face the same noisy test set (the full-density
dictionary's entries, freshly corrupted per repetition) and their T1/T2
RMSEs are tabulated. A least-squares line through the network's RMSE
versus factor summarizes its degradation rate.

Noise convention: the canonical study corrupts signals with absolute
(signal-independent) Gaussian noise, like scanner thermal noise, with
percentages referenced to the full dictionary's maximum magnitude. This
is what makes template matching fragile on weak signals: normalization
amplifies a fixed noise floor. Per-atom-scaled noise (the training
augmentation default elsewhere) would corrupt every atom proportionally
and erase exactly the effect this experiment measures.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace

import numpy as np

from .dictionary import Dictionary, absolute_noise, normalize, scaled_noise, subsample
from .maps import fmt
from .matcher import match_signals
from .network import OutputScaler, forward_many
from .training import TrainConfig, clamp_batch, train

# Training longer than this per subsampled net is pointless; accuracy
# saturates well before (measured on the 50 ms desk grid).
MAX_STUDY_EPOCHS = 20000


def steps_matched_epochs(target_steps: int, n_entries: int, batch_size: int) -> int:
    """Epochs needed for a set of ``n_entries`` to see ``target_steps``
    optimizer steps, capped at :data:`MAX_STUDY_EPOCHS`."""
    steps_per_epoch = int(np.ceil(n_entries / batch_size))
    return min(int(np.ceil(target_steps / steps_per_epoch)), MAX_STUDY_EPOCHS)


def _component_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def derive_rng(base_seed: int, *parts) -> np.random.Generator:
    """Independent generator for one job of a seeded experiment tree."""
    entropy = [int(base_seed)] + [_component_int(p) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(base_seed: int, *parts) -> int:
    """Scalar child seed (for configs that carry a single integer)."""
    entropy = [int(base_seed)] + [_component_int(p) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class StudyRow:
    factor: int
    method: str  # "nn" or "match"
    rep: int
    rmse_t1: float
    rmse_t2: float


@dataclass(frozen=True)
class StudySummaryRow:
    factor: int
    method: str
    mean_rmse_t1: float
    std_rmse_t1: float
    mean_rmse_t2: float
    std_rmse_t2: float


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float


@dataclass
class StudyResult:
    rows: list[StudyRow]
    summary: list[StudySummaryRow]
    fits: dict[str, LineFit]  # keys "nn_t1", "nn_t2"

    def summary_for(self, factor: int, method: str) -> StudySummaryRow:
        for row in self.summary:
            if row.factor == factor and row.method == method:
                return row
        raise KeyError(f"no summary row for factor={factor} method={method}")


def linear_fit(x, y) -> LineFit:
    """Least-squares line plus its coefficient of determination."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else float("nan")
    return LineFit(slope=float(slope), intercept=float(intercept), r2=r2)


def density_study(
    full_dict: Dictionary,
    factors,
    test_noise_sigma: float,
    repetitions: int,
    train_config: TrainConfig,
    scaler: OutputScaler | None = None,
    noise_reference: str = "dict_max",
    steps_matched: bool = True,
) -> StudyResult:
    """Run the full density-versus-error sweep.

    Per (factor, repetition): subsample, train a network on the
    subsampled dictionary, corrupt the full dictionary's atoms with
    fresh Gaussian test noise, and reconstruct them with both the
    network and direct matching against the same subsampled dictionary.
    Seeds for training and test noise derive from ``train_config.seed``
    and the (factor, repetition) pair, so the whole table is
    reproducible and each job is independent.

    ``noise_reference`` fixes what the percentages mean: ``"dict_max"``
    (canonical) applies ``sigma * max|atoms|`` of the full dictionary as
    one absolute standard deviation to both the training augmentation
    and the test corruption; ``"per_atom"`` scales noise to each atom's
    own maximum instead. With ``steps_matched`` (default), each
    subsampled training runs enough epochs to see the same number of
    optimizer steps as the full-dictionary configuration, so sparser
    dictionaries are not silently undertrained; the epoch count is
    capped at ``MAX_STUDY_EPOCHS``.
    """
    factors = [int(f) for f in factors]
    if not factors:
        raise ValueError("need at least one subsampling factor")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if noise_reference not in ("dict_max", "per_atom"):
        raise ValueError(f"unknown noise_reference {noise_reference!r}")

    true_params = np.column_stack([full_dict.t1_ms, full_dict.t2_ms])
    base_seed = train_config.seed
    dict_max = float(np.max(np.abs(full_dict.atoms)))
    target_steps = train_config.epochs * int(
        np.ceil(full_dict.n_entries / train_config.batch_size)
    )
    rows: list[StudyRow] = []
    for factor in factors:
        sub = subsample(full_dict, factor)
        sub_normalized = normalize(sub)
        for rep in range(repetitions):
            cfg = replace(
                clamp_batch(train_config, sub.n_entries),
                seed=derive_seed(base_seed, factor, rep, "train"),
            )
            if noise_reference == "dict_max":
                cfg = replace(
                    cfg, noise_mode="absolute", noise_sigma=cfg.noise_sigma * dict_max
                )
            if steps_matched:
                cfg = replace(
                    cfg,
                    epochs=steps_matched_epochs(
                        target_steps, sub.n_entries, cfg.batch_size
                    ),
                )
            net, _ = train(sub, cfg, scaler=scaler)

            test_rng = derive_rng(base_seed, factor, rep, "test")
            if test_noise_sigma > 0.0:
                if noise_reference == "dict_max":
                    noise = absolute_noise(
                        test_rng, full_dict.atoms, test_noise_sigma * dict_max
                    )
                else:
                    noise = scaled_noise(test_rng, full_dict.atoms, test_noise_sigma)
                noisy = full_dict.atoms + noise
            else:
                noisy = full_dict.atoms

            nn_pred = forward_many(net, noisy)
            match_pred, _ = match_signals(sub_normalized, noisy)
            for method, pred in (("nn", nn_pred), ("match", match_pred)):
                err = pred - true_params
                rows.append(
                    StudyRow(
                        factor=factor,
                        method=method,
                        rep=rep,
                        rmse_t1=float(np.sqrt(np.mean(err[:, 0] ** 2))),
                        rmse_t2=float(np.sqrt(np.mean(err[:, 1] ** 2))),
                    )
                )

    summary: list[StudySummaryRow] = []
    for factor in factors:
        for method in ("nn", "match"):
            r1 = [r.rmse_t1 for r in rows if r.factor == factor and r.method == method]
            r2 = [r.rmse_t2 for r in rows if r.factor == factor and r.method == method]
            ddof = 1 if len(r1) > 1 else 0
            summary.append(
                StudySummaryRow(
                    factor=factor,
                    method=method,
                    mean_rmse_t1=float(np.mean(r1)),
                    std_rmse_t1=float(np.std(r1, ddof=ddof)),
                    mean_rmse_t2=float(np.mean(r2)),
                    std_rmse_t2=float(np.std(r2, ddof=ddof)),
                )
            )

    nn_means = [s for s in summary if s.method == "nn"]
    fits = {
        "nn_t1": linear_fit(factors, [s.mean_rmse_t1 for s in nn_means]),
        "nn_t2": linear_fit(factors, [s.mean_rmse_t2 for s in nn_means]),
    }
    return StudyResult(rows=rows, summary=summary, fits=fits)


def nearest_kept_rmse(full_dict: Dictionary, kept: Dictionary) -> tuple[float, float]:
    """Quantization floor of matching a coarsened dictionary.

    For every full-density entry, the distance to the nearest kept entry
    on each parameter axis lower-bounds any matcher's error there (a
    matcher must answer with some kept entry). Returns the RMS of those
    per-axis minima.
    """
    d1 = np.abs(full_dict.t1_ms[:, None] - kept.t1_ms[None, :])
    d2 = np.abs(full_dict.t2_ms[:, None] - kept.t2_ms[None, :])
    # Per-axis minima over kept entries; any matcher's per-entry error
    # on an axis is at least the distance to the nearest kept value.
    min_t1 = d1.min(axis=1)
    min_t2 = d2.min(axis=1)
    return (
        float(np.sqrt(np.mean(min_t1**2))),
        float(np.sqrt(np.mean(min_t2**2))),
    )


def write_study_rows_csv(result: StudyResult, path) -> None:
    """Per-repetition table: ``factor,method,rep,rmse_t1,rmse_t2``."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("factor,method,rep,rmse_t1,rmse_t2\n")
        for r in result.rows:
            f.write(f"{r.factor},{r.method},{r.rep},{fmt(r.rmse_t1)},{fmt(r.rmse_t2)}\n")


def write_study_summary_csv(result: StudyResult, path) -> None:
    """Per-factor means/stds plus the network RMSE line-fit parameters."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(
            "factor,method,mean_rmse_t1,std_rmse_t1,mean_rmse_t2,std_rmse_t2\n"
        )
        for s in result.summary:
            f.write(
                f"{s.factor},{s.method},{fmt(s.mean_rmse_t1)},{fmt(s.std_rmse_t1)},"
                f"{fmt(s.mean_rmse_t2)},{fmt(s.std_rmse_t2)}\n"
            )
    fit_path = str(path)
    fit_path = fit_path[:-4] + "_fit.csv" if fit_path.endswith(".csv") else fit_path + "_fit.csv"
    with open(fit_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("method,parameter,slope,intercept,r2\n")
        for key, fit in result.fits.items():
            method, param = key.split("_")
            f.write(f"{method},{param},{fmt(fit.slope)},{fmt(fit.intercept)},{fmt(fit.r2)}\n")
