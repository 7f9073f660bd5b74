"""Deterministic training loop with per-sample modality dropout.

Every step draws one modality subset per sample uniformly from the 15
non-empty subsets, runs the student forward under that mask, and (when the
feature-transfer weight is positive) a gradient-detached teacher forward
under the full mask. The objective combines Dice on the student logits,
the voxel divergence term against smoothed labels, and the per-level
feature-transfer term between student and teacher taps.
"""

import numpy as np

from .distill import FeaturePair, gamma_schedule, mi_transfer_loss
from .divergences import HolderExponents, voxel_divergence_loss
from .errors import ConfigError, NumericError
from .losses import dice_loss, one_hot, smoothed_one_hot, total_loss
from .network import ALL_SUBSETS, ModalityMask, forward, forward_features, init_params
from .optim import Adam
from .tensor import Tape, Tensor, backward, softmax


def _load_split(manifest):
    samples = [manifest.load_sample(i) for i in range(len(manifest))]
    if not samples:
        raise ConfigError("training needs a non-empty split")
    return samples


def draw_masks(rng, n):
    """n modality masks drawn uniformly over the 15 non-empty subsets."""
    return [
        ModalityMask.from_indices(ALL_SUBSETS[j])
        for j in rng.integers(0, len(ALL_SUBSETS), size=n)
    ]


def train(config, manifest, log_hook=None):
    """Run the full schedule; returns (params, per-epoch log rows).

    Each log row is {"epoch", "dice", "mi", "hd", "total"}, the means over
    the epoch's steps. log_hook, when given, receives each row as it is
    finished (progress reporting). Aborts with the step index on any
    non-finite loss.
    """
    samples = _load_split(manifest)
    arch = config.arch
    params = init_params(config.seed, arch)
    adam = Adam(
        params,
        config.learning_rate,
        weight_decay=config.weight_decay,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    exponents = HolderExponents(config.alpha) if config.divergence == "holder" else None
    gammas = config.gammas or gamma_schedule(arch.levels)
    use_mi = config.lam_mi > 0
    use_hd = config.lam_hd > 0

    labels_oh = [Tensor(one_hot(s.labels.data, arch.num_classes)) for s in samples]
    labels_sm = [
        Tensor(smoothed_one_hot(s.labels.data, arch.num_classes, config.tau))
        for s in samples
    ]

    rng = np.random.default_rng(config.seed)
    full_mask = ModalityMask.full()
    log = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(samples))
        sums = {"dice": 0.0, "mi": 0.0, "hd": 0.0, "total": 0.0}
        n_steps = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            masks = draw_masks(rng, len(batch))
            step += 1
            # explicit finiteness checks report divergence; silence the
            # interim overflow warnings numpy emits on the way there
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                breakdown = _train_step(
                    params, adam, samples, labels_oh, labels_sm, batch, masks,
                    config, exponents, gammas, full_mask, use_mi, use_hd, step,
                )
            for key, val in breakdown.items():
                sums[key] += val
            n_steps += 1
        row = {"epoch": epoch}
        row.update({key: sums[key] / n_steps for key in ("dice", "mi", "hd", "total")})
        log.append(row)
        if log_hook is not None:
            log_hook(row)
    return params, log


def _train_step(
    params, adam, samples, labels_oh, labels_sm, batch, masks,
    config, exponents, gammas, full_mask, use_mi, use_hd, step,
):
    inv_b = 1.0 / len(batch)
    try:
        # teacher taps are recomputed per step, outside the tape: the
        # full-modality pass is a constant target for the current parameters
        teacher_taps = None
        if use_mi:
            teacher_taps = [
                forward_features(params, samples[idx].volumes, full_mask)
                for idx in batch
            ]
        with Tape() as tape:
            for _, t in params.items():
                tape.watch(t)
            heads = params.heads()
            dice_acc = None
            hd_acc = None
            batch_pairs = []
            for slot, idx in enumerate(batch):
                sample = samples[idx]
                out = forward(params, sample.volumes, masks[slot])
                probs = softmax(out.logits, axis=0)
                d = dice_loss(probs, labels_oh[idx])
                dice_acc = d if dice_acc is None else dice_acc + d
                if use_hd:
                    h = voxel_divergence_loss(
                        out.logits, labels_sm[idx], config.divergence, exponents
                    )
                    hd_acc = h if hd_acc is None else hd_acc + h
                if use_mi:
                    batch_pairs.append(
                        [
                            FeaturePair(k + 1, teacher_taps[slot][k], out.taps[k])
                            for k in range(len(out.taps))
                        ]
                    )
            dice = dice_acc * inv_b
            hd = hd_acc * inv_b if use_hd else 0.0
            mi = mi_transfer_loss(batch_pairs, heads, gammas) if use_mi else 0.0
            breakdown = total_loss(dice, mi, hd, config.lam_mi, config.lam_hd)
        grads = backward(tape, breakdown.total)
    except NumericError as exc:
        raise NumericError(f"training aborted at step {step}: {exc}") from None

    scalars = breakdown.scalars()
    if not all(np.isfinite(v) for v in scalars.values()):
        raise NumericError(
            f"training aborted at step {step}: non-finite loss {scalars}"
        )
    adam.step({name: grads[t] for name, t in params.items()})
    return scalars
