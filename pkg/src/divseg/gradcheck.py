"""Finite-difference verification of every gradient rule in the package.

Each case builds a scalar loss from named leaf inputs, runs one backward
pass, then compares against 64-bit central differences coordinate by
coordinate. A case passes when the relative error stays below REL_TOL at
every coordinate carrying signal (|analytic| + |numeric| > SIGNAL_FLOOR).
Large parameter sets are spot-checked on a deterministic random subset
of coordinates.
"""

import numpy as np

from .distill import FeaturePair, VariationalHead, gamma_schedule, mi_transfer_loss, variational_nll
from .divergences import (
    F_DIVERGENCES,
    HolderExponents,
    hpd,
    voxel_divergence_loss,
)
from .losses import dice_loss, one_hot, smoothed_one_hot, total_loss
from .network import ArchConfig, ModalityMask, ModelParams, forward, init_params
from .tensor import (
    Tape,
    Tensor,
    backward,
    conv3d,
    downsample2,
    group_norm,
    softmax,
    upsample_nn2,
)

REL_TOL = 1e-4
SIGNAL_FLOOR = 1e-8
DEFAULT_STEP = 1e-5

# every differentiable op the tape knows; the ndtensor suite must cover all
TENSOR_OPS = (
    "add",
    "sub",
    "mul",
    "div",
    "exp",
    "log",
    "pow",
    "clamp",
    "relu",
    "sum",
    "mean",
    "softmax",
    "reshape",
    "conv3d",
    "downsample2",
    "upsample_nn2",
    "group_norm",
)


def numeric_grad(f, x0, h=DEFAULT_STEP, indices=None):
    """Central-difference gradient of a scalar function at x0.

    f maps an ndarray of x0's shape to a float. Only the requested flat
    indices are evaluated (all, when indices is None); unevaluated entries
    come back NaN so they cannot silently pass a comparison.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    flat = x0.reshape(-1).copy()
    if indices is None:
        indices = range(flat.size)
    g = np.full(flat.size, np.nan)
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(flat.reshape(x0.shape).copy())
        flat[i] = orig - h
        fm = f(flat.reshape(x0.shape).copy())
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g.reshape(x0.shape)


class GradCheckCase:
    """One named loss whose analytic gradient gets checked against FD."""

    def __init__(self, suite, name, build, max_coords=None, h=DEFAULT_STEP):
        self.suite = suite
        self.name = name
        self.build = build  # build(rng) -> (inputs: {name: ndarray}, fn)
        self.max_coords = max_coords
        self.h = h


class CaseResult:
    __slots__ = ("suite", "name", "coords", "max_rel_err", "passed")

    def __init__(self, suite, name, coords, max_rel_err):
        self.suite = suite
        self.name = name
        self.coords = coords
        self.max_rel_err = max_rel_err
        self.passed = max_rel_err < REL_TOL


class GradCheckReport:
    def __init__(self, results):
        self.results = list(results)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def failures(self):
        return [r for r in self.results if not r.passed]

    def suite_max(self):
        out = {}
        for r in self.results:
            out[r.suite] = max(out.get(r.suite, 0.0), r.max_rel_err)
        return out

    def format(self):
        lines = ["suite        case                      coords  max_rel_err  status"]
        for r in self.results:
            lines.append(
                f"{r.suite:<12} {r.name:<25} {r.coords:>6}  {r.max_rel_err:>11.3e}  "
                + ("ok" if r.passed else "FAIL")
            )
        lines.append("")
        for suite, worst in self.suite_max().items():
            lines.append(f"suite {suite}: max rel err {worst:.3e}")
        lines.append(f"ops covered: {len(TENSOR_OPS)} ({', '.join(TENSOR_OPS)})")
        lines.append("RESULT: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def run_case(case, seed=0):
    rng = np.random.default_rng(seed)
    inputs, fn = case.build(rng)
    leaves = {k: Tensor(v, requires_grad=True) for k, v in inputs.items()}
    with Tape() as tape:
        for leaf in leaves.values():
            tape.watch(leaf)
        loss = fn(leaves)
    grads = backward(tape, loss)
    worst = 0.0
    checked = 0
    for k, leaf in leaves.items():
        analytic = grads[leaf].reshape(-1)
        if case.max_coords is not None and analytic.size > case.max_coords:
            idx = np.sort(rng.choice(analytic.size, size=case.max_coords, replace=False))
        else:
            idx = np.arange(analytic.size)

        def f(arr, _k=k):
            vals = dict(inputs)
            vals[_k] = arr
            return fn({kk: Tensor(vv) for kk, vv in vals.items()}).item()

        numeric = numeric_grad(f, inputs[k], h=case.h, indices=idx).reshape(-1)
        for i in idx:
            a, n = analytic[i], numeric[i]
            denom = abs(a) + abs(n)
            if denom > SIGNAL_FLOOR:
                worst = max(worst, abs(a - n) / denom)
            checked += 1
    return CaseResult(case.suite, case.name, checked, worst)


# case builders ---------------------------------------------------------


def _u(rng, shape, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=shape)


def _away_from(x, points, margin=0.02):
    # push values out of the FD window around non-differentiable points
    x = x.copy()
    for p in points:
        near = np.abs(x - p) < margin
        x[near] = p + margin * np.where(x[near] >= p, 1.0, -1.0) * 2.0
    return x


def _wsum(t, w):
    return (t * Tensor(w)).sum()


def _ndtensor_cases():
    cases = []

    def binary(name, op, b_lo=-2.0, b_hi=2.0, b_shape_fn=None):
        def build(rng):
            a = _u(rng, (3, 4))
            b_shape = b_shape_fn((3, 4)) if b_shape_fn else (3, 4)
            b = rng.uniform(b_lo, b_hi, size=b_shape)
            w = _u(rng, (3, 4))
            return {"a": a, "b": b}, lambda v: _wsum(op(v["a"], v["b"]), w)

        cases.append(GradCheckCase("ndtensor", name, build))

    binary("add", lambda a, b: a + b)
    binary("add_broadcast", lambda a, b: a + b, b_shape_fn=lambda s: (1, s[1]))
    binary("sub", lambda a, b: a - b)
    binary("mul", lambda a, b: a * b)
    binary("div", lambda a, b: a / b, b_lo=0.4, b_hi=2.0)

    def unary(name, fn_t, lo, hi, guard=()):
        def build(rng):
            x = _u(rng, (3, 4), lo, hi)
            if guard:
                x = _away_from(x, guard)
            w = _u(rng, (3, 4))
            return {"x": x}, lambda v: _wsum(fn_t(v["x"]), w)

        cases.append(GradCheckCase("ndtensor", name, build))

    unary("exp", lambda t: t.exp(), -2.0, 2.0)
    unary("log", lambda t: t.log(), 0.1, 3.0)
    unary("pow_frac", lambda t: t.pow(1.7), 0.1, 2.0)
    unary("pow_int", lambda t: t.pow(3), -2.0, 2.0)
    unary("clamp", lambda t: t.clamp(-0.5, 0.7), -2.0, 2.0, guard=(-0.5, 0.7))
    unary("relu", lambda t: t.relu(), -2.0, 2.0, guard=(0.0,))

    def reduce_case(name, red):
        def build(rng):
            x = _u(rng, (2, 3, 4))
            w_full = rng.uniform(0.5, 1.5)
            return {"x": x}, lambda v: red(v["x"]) * w_full

        cases.append(GradCheckCase("ndtensor", name, build))

    reduce_case("sum_all", lambda t: t.sum())
    reduce_case("mean_all", lambda t: t.mean())

    def reduce_axes(name, red, out_shape):
        def build(rng):
            x = _u(rng, (2, 3, 4))
            w = _u(rng, out_shape)
            return {"x": x}, lambda v: _wsum(red(v["x"]), w)

        cases.append(GradCheckCase("ndtensor", name, build))

    reduce_axes("sum_axes", lambda t: t.sum(axes=(0, 2)), (3,))
    reduce_axes("mean_keepdims", lambda t: t.mean(axes=1, keepdims=True), (2, 1, 4))

    def softmax_case(rng):
        x = _u(rng, (3, 5))
        w = _u(rng, (3, 5))
        return {"x": x}, lambda v: _wsum(softmax(v["x"], axis=1), w)

    cases.append(GradCheckCase("ndtensor", "softmax", softmax_case))

    def reshape_case(rng):
        x = _u(rng, (2, 3, 4))
        w = _u(rng, (4, 6))
        return {"x": x}, lambda v: _wsum(v["x"].reshape((4, 6)), w)

    cases.append(GradCheckCase("ndtensor", "reshape", reshape_case))

    def conv_case(rng):
        x = _u(rng, (1, 3, 3, 3), -1.0, 1.0)
        w = _u(rng, (2, 1, 3, 3, 3), -1.0, 1.0)
        m = _u(rng, (2, 3, 3, 3))
        return {"x": x, "w": w}, lambda v: _wsum(conv3d(v["x"], v["w"]), m)

    cases.append(GradCheckCase("ndtensor", "conv3d", conv_case))

    def conv_stride_case(rng):
        x = _u(rng, (1, 4, 4, 4), -1.0, 1.0)
        w = _u(rng, (2, 1, 3, 3, 3), -1.0, 1.0)
        m = _u(rng, (2, 2, 2, 2))
        return {"x": x, "w": w}, lambda v: _wsum(conv3d(v["x"], v["w"], stride=2), m)

    cases.append(GradCheckCase("ndtensor", "conv3d_stride2", conv_stride_case))

    def down_case(rng):
        x = _u(rng, (1, 4, 4, 4))
        m = _u(rng, (1, 2, 2, 2))
        return {"x": x}, lambda v: _wsum(downsample2(v["x"]), m)

    cases.append(GradCheckCase("ndtensor", "downsample2", down_case))

    def up_case(rng):
        x = _u(rng, (2, 2, 2, 2))
        m = _u(rng, (2, 4, 4, 4))
        return {"x": x}, lambda v: _wsum(upsample_nn2(v["x"]), m)

    cases.append(GradCheckCase("ndtensor", "upsample_nn2", up_case))

    def gn_case(rng):
        x = _u(rng, (4, 2, 2, 2))
        gain = _u(rng, (4,), 0.5, 1.5)
        bias = _u(rng, (4,), -0.5, 0.5)
        m = _u(rng, (4, 2, 2, 2))
        return (
            {"x": x, "gain": gain, "bias": bias},
            lambda v: _wsum(group_norm(v["x"], v["gain"], v["bias"], groups=2), m),
        )

    cases.append(GradCheckCase("ndtensor", "group_norm", gn_case))

    def chain_case(rng):
        x = _u(rng, (1, 2, 2, 2), -1.0, 1.0)
        w = _u(rng, (4, 1, 3, 3, 3), -0.7, 0.7)
        gain = _u(rng, (4,), 0.8, 1.2)
        bias = _u(rng, (4,), -0.2, 0.2)
        m = _u(rng, (4, 2, 2, 2))

        def fn(v):
            h = conv3d(v["x"], v["w"])
            h = group_norm(h, v["gain"], v["bias"], groups=2).relu()
            p = softmax(h, axis=0)
            return _wsum(p, m) + (v["x"] * v["x"]).mean()

        return {"x": x, "w": w, "gain": gain, "bias": bias}, fn

    cases.append(GradCheckCase("ndtensor", "op_chain", chain_case))
    return cases


def _divergence_cases():
    cases = []
    exps = HolderExponents(1.1)

    def voxel_case(kind):
        def build(rng):
            logits = _u(rng, (3, 2, 2, 2))
            labels = smoothed_one_hot(rng.integers(0, 3, size=(2, 2, 2)), 3)
            e = exps if kind == "holder" else None
            return (
                {"logits": logits},
                lambda v: voxel_divergence_loss(v["logits"], Tensor(labels), kind, e),
            )

        cases.append(GradCheckCase("divergences", f"voxel_{kind}", build))

    for kind in ("holder",) + tuple(F_DIVERGENCES):
        voxel_case(kind)

    def hpd_case(rng):
        p = _u(rng, (5,), 0.1, 1.0)
        q = _u(rng, (5,), 0.1, 1.0)
        return {"p": p, "q": q}, lambda v: hpd(v["p"], v["q"], exps)

    cases.append(GradCheckCase("divergences", "hpd_both_args", hpd_case))

    def fdiv_case(kind):
        def build(rng):
            p = _u(rng, (5,), 0.1, 1.0)
            # keep |p - q| off zero so total_variation stays FD-differentiable
            off = rng.uniform(0.05, 0.4, size=5) * rng.choice([-1.0, 1.0], size=5)
            q = np.clip(p + off, 0.05, 1.4)
            bad = np.abs(p - q) < 0.02
            q[bad] = p[bad] + 0.05
            fn = F_DIVERGENCES[kind]
            return {"p": p, "q": q}, lambda v: fn(v["p"], v["q"]).sum()

        cases.append(GradCheckCase("divergences", f"fdiv_{kind}", build))

    for kind in F_DIVERGENCES:
        fdiv_case(kind)
    return cases


def _distill_cases():
    cases = []

    def nll_case(rng):
        d_f = _u(rng, (3, 2, 2, 2))
        mu = _u(rng, (3, 2, 2, 2))
        ls = _u(rng, (3,), -0.5, 0.5)
        return (
            {"mu": mu, "log_sigma": ls},
            lambda v: variational_nll(Tensor(d_f), v["mu"], v["log_sigma"]),
        )

    cases.append(GradCheckCase("distill", "variational_nll", nll_case))

    def mi_case(rng):
        c1, c2 = 2, 3
        shapes = {1: (c1, 2, 2, 2), 2: (c2, 1, 1, 1)}
        inputs = {}
        teachers = {}
        for s in range(2):
            for k, shp in shapes.items():
                inputs[f"dm_s{s}_k{k}"] = _u(rng, shp, -1.0, 1.0)
                teachers[(s, k)] = _u(rng, shp, -1.0, 1.0)
        for k, c in ((1, c1), (2, c2)):
            inputs[f"mu_w_k{k}"] = _u(rng, (c, c, 1, 1, 1), -0.5, 0.5)
            inputs[f"mu_b_k{k}"] = _u(rng, (c,), -0.3, 0.3)
            inputs[f"log_sigma_k{k}"] = _u(rng, (c,), -0.4, 0.4)
        gammas = gamma_schedule(2)

        def fn(v):
            heads = [
                VariationalHead(v[f"mu_w_k{k}"], v[f"mu_b_k{k}"], v[f"log_sigma_k{k}"])
                for k in (1, 2)
            ]
            batch = [
                [
                    FeaturePair(k, Tensor(teachers[(s, k)]), v[f"dm_s{s}_k{k}"])
                    for k in (1, 2)
                ]
                for s in range(2)
            ]
            return mi_transfer_loss(batch, heads, gammas)

        return inputs, fn

    cases.append(GradCheckCase("distill", "mi_transfer_loss", mi_case))
    return cases


def _segloss_cases():
    cases = []

    def dice_probs_case(rng):
        probs = _u(rng, (3, 2, 2, 2), 0.05, 1.0)
        labels = one_hot(rng.integers(0, 3, size=(2, 2, 2)), 3)
        return {"probs": probs}, lambda v: dice_loss(v["probs"], Tensor(labels))

    cases.append(GradCheckCase("segloss", "dice_loss", dice_probs_case))

    def dice_softmax_case(rng):
        logits = _u(rng, (3, 2, 2, 2))
        labels = one_hot(rng.integers(0, 3, size=(2, 2, 2)), 3)
        return (
            {"logits": logits},
            lambda v: dice_loss(softmax(v["logits"], axis=0), Tensor(labels)),
        )

    cases.append(GradCheckCase("segloss", "dice_of_softmax", dice_softmax_case))

    def objective_case(rng):
        # dice + divergence on shared logits plus a small transfer term,
        # combined exactly as in training
        logits = _u(rng, (3, 2, 2, 2))
        lab = rng.integers(0, 3, size=(2, 2, 2))
        hard = one_hot(lab, 3)
        smooth = smoothed_one_hot(lab, 3)
        d_f = _u(rng, (2, 2, 2, 2))
        inputs = {
            "logits": logits,
            "mu": _u(rng, (2, 2, 2, 2)),
            "log_sigma": _u(rng, (2,), -0.3, 0.3),
        }
        e = HolderExponents(1.1)

        def fn(v):
            probs = softmax(v["logits"], axis=0)
            dice = dice_loss(probs, Tensor(hard))
            hd = voxel_divergence_loss(v["logits"], Tensor(smooth), "holder", e)
            mi = variational_nll(Tensor(d_f), v["mu"], v["log_sigma"]) * (1.0 / d_f.size)
            return total_loss(dice, mi, hd).total

        return inputs, fn

    cases.append(GradCheckCase("segloss", "combined_objective", objective_case))
    return cases


def _model_cases():
    # end-to-end checks on a 4^3 volume with the default architecture;
    # parameters are spot-checked on sampled coordinates to keep runtime low
    cases = []
    arch = ArchConfig()

    def setup(rng):
        seed_params = init_params(int(rng.integers(2**31)), arch)
        inputs = {}
        for name, t in seed_params.items():
            data = t.data.copy()
            if name.endswith((".b", ".log_sigma")):
                # lift zero-initialized leaves off the origin so FD sees signal
                data = data + rng.uniform(-0.05, 0.05, size=data.shape)
            inputs[name] = data
        vols = {i: rng.normal(size=(1, 4, 4, 4)) for i in range(1, 5)}
        lab = rng.integers(0, arch.num_classes, size=(4, 4, 4))
        return inputs, vols, lab

    def dice_case(rng):
        inputs, vols, lab = setup(rng)
        hard = one_hot(lab, arch.num_classes)
        mask = ModalityMask.from_indices((1, 3))
        tvols = {i: Tensor(v) for i, v in vols.items()}

        def fn(v):
            params = ModelParams(arch, dict(v))
            out = forward(params, tvols, mask)
            return dice_loss(softmax(out.logits, axis=0), Tensor(hard))

        return inputs, fn

    cases.append(GradCheckCase("model", "dice_of_forward", dice_case, max_coords=10))

    def objective_case(rng):
        inputs, vols, lab = setup(rng)
        hard = one_hot(lab, arch.num_classes)
        smooth = smoothed_one_hot(lab, arch.num_classes)
        mask = ModalityMask.from_indices((2, 4))
        tvols = {i: Tensor(v) for i, v in vols.items()}
        e = HolderExponents(1.1)

        # freeze the teacher taps once: the training objective treats them
        # as detached constants, so FD must too
        teacher = forward(
            ModelParams(arch, {k: Tensor(v) for k, v in inputs.items()}),
            tvols,
            ModalityMask.full(),
        )
        frozen_taps = [Tensor(t.data.copy()) for t in teacher.taps]
        gammas = gamma_schedule(arch.levels)

        def fn(v):
            params = ModelParams(arch, dict(v))
            out = forward(params, tvols, mask)
            pairs = [
                FeaturePair(k + 1, frozen_taps[k], out.taps[k])
                for k in range(arch.levels)
            ]
            mi = mi_transfer_loss(pairs, params.heads(), gammas)
            dice = dice_loss(softmax(out.logits, axis=0), Tensor(hard))
            hd = voxel_divergence_loss(out.logits, Tensor(smooth), "holder", e)
            return total_loss(dice, mi, hd).total

        return inputs, fn

    cases.append(GradCheckCase("model", "full_objective", objective_case, max_coords=8))
    return cases


_SUITE_BUILDERS = {
    "ndtensor": _ndtensor_cases,
    "divergences": _divergence_cases,
    "distill": _distill_cases,
    "segloss": _segloss_cases,
    "model": _model_cases,
}


def all_cases():
    cases = []
    for builder in _SUITE_BUILDERS.values():
        cases.extend(builder())
    return cases


def gradcheck(seed=0):
    """Run every registered finite-difference suite; see GradCheckReport."""
    results = []
    for j, case in enumerate(all_cases()):
        results.append(run_case(case, seed=seed + j))
    return GradCheckReport(results)
