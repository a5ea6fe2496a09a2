"""Finite-difference verification of every backward rule.

Each case freezes a set of leaf arrays (float64 values chosen to be exactly
float32-representable) and a scalar-producing graph builder. The analytic
gradient is compared against central differences taken in float64:

  * the float64 graph must agree to 1e-6 relative error,
  * the float32 graph, built from the same values, to 1e-3.

Relative error uses max(|analytic|, |fd|, floor) as the denominator, where
the floor is a small fraction of the leaf's largest gradient entry; without
it, coordinates whose true gradient sits at round-off level would dominate.
Inputs are sampled away from the kinks of abs/leaky_relu/max so the
difference quotient stays two-sided.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class OpCase:
    name: str
    arrays: list  # canonical float64 leaf values, f32-representable
    build: Callable  # list[Tensor] -> scalar Tensor


@dataclass
class CaseResult:
    name: str
    err_f32: float
    err_f64: float
    probes: int

    def passed(self, tol_f32: float = 1e-3, tol_f64: float = 1e-6) -> bool:
        return self.err_f32 <= tol_f32 and self.err_f64 <= tol_f64


def weighted_sum(y: Tensor, cot: np.ndarray) -> Tensor:
    """Contract an op output to a scalar with a fixed generic cotangent."""
    return ad.tsum(ad.mul(y, Tensor(cot.astype(y.dtype, copy=False))))


def _f32_representable(rng: np.random.Generator, shape, lo: float, hi: float) -> np.ndarray:
    return rng.uniform(lo, hi, size=shape).astype(np.float32).astype(np.float64)


def _loss_value(build: Callable, arrays: list) -> float:
    with ad.no_grad():
        leaves = [Tensor(a) for a in arrays]
        return build(leaves).item()


def _central_diff(build, arrays, flat, c, eps) -> float:
    saved = flat[c]
    flat[c] = saved + eps
    hi = _loss_value(build, arrays)
    flat[c] = saved - eps
    lo = _loss_value(build, arrays)
    flat[c] = saved
    return (hi - lo) / (2.0 * eps)


def _stable_central_diff(build, arrays, flat, c, floor) -> float | None:
    """Central difference with stencil refinement.

    Two estimates at h and h/3 agreeing to 1e-3 certify the loss is smooth
    within the stencil; on disagreement (a kink inside it, e.g. a leaky-relu
    corner) narrow and retry. None means the point itself is unresolvable.
    """
    h = 3e-6 * max(1.0, abs(flat[c]))
    prev = _central_diff(build, arrays, flat, c, h)
    for _ in range(3):
        nxt = _central_diff(build, arrays, flat, c, h / 3.0)
        if abs(prev - nxt) <= 1e-3 * max(abs(prev), abs(nxt), floor):
            return nxt
        prev, h = nxt, h / 3.0
    return None


def check_case(case: OpCase, probes: int = 24, seed: int = 0) -> CaseResult:
    """Compare analytic f64/f32 gradients against f64 central differences."""
    leaves64 = [Tensor(a.copy(), requires_grad=True) for a in case.arrays]
    ad.backward(case.build(leaves64))

    leaves32 = [Tensor(a.astype(np.float32), requires_grad=True) for a in case.arrays]
    ad.backward(case.build(leaves32))

    rng = np.random.default_rng(seed)
    err32 = 0.0
    err64 = 0.0
    probed = 0
    for i, base in enumerate(case.arrays):
        g64 = leaves64[i].grad
        g32 = leaves32[i].grad
        if g64 is None:
            raise AssertionError(f"{case.name}: leaf {i} received no gradient")
        gmax = float(np.max(np.abs(g64)))
        floor64 = max(1e-12, 1e-2 * gmax)
        floor32 = max(1e-6, 5e-2 * gmax)
        n = base.size
        count = min(probes, n)
        coords = rng.permutation(n)[: min(3 * probes, n)]
        flat = base.reshape(-1)
        hits = 0
        for c in coords:
            fd = _stable_central_diff(case.build, case.arrays, flat, c, floor64)
            if fd is None:
                continue  # probe sits on a kink; FD has no defined value there
            a64 = float(g64.reshape(-1)[c])
            a32 = float(g32.reshape(-1)[c])
            err64 = max(err64, abs(a64 - fd) / max(abs(a64), abs(fd), floor64))
            err32 = max(err32, abs(a32 - fd) / max(abs(a32), abs(fd), floor32))
            probed += 1
            hits += 1
            if hits == count:
                break
    return CaseResult(case.name, err32, err64, probed)


def op_cases(seed: int = 7) -> list[OpCase]:
    """One case per differentiable op, several for the convolution geometries."""
    rng = np.random.default_rng(seed)
    cases: list[OpCase] = []

    def u(shape, lo=-1.5, hi=1.5):
        return _f32_representable(rng, shape, lo, hi)

    def cot_for(build_y, arrays):
        with ad.no_grad():
            y = build_y([Tensor(a) for a in arrays])
        return _f32_representable(rng, y.shape, -1.0, 1.0)

    def case(name, arrays, build_y):
        cot = cot_for(build_y, arrays)
        cases.append(OpCase(name, arrays, lambda ls, b=build_y, c=cot: weighted_sum(b(ls), c)))

    case("add", [u((4, 9)), u((4, 9))], lambda ls: ad.add(ls[0], ls[1]))
    case("add_scalar", [u((4, 9))], lambda ls: ad.add(ls[0], 0.75))
    case("sub", [u((4, 9)), u((4, 9))], lambda ls: ad.sub(ls[0], ls[1]))
    case("mul", [u((4, 9)), u((4, 9))], lambda ls: ad.mul(ls[0], ls[1]))
    case("mul_scalar", [u((4, 9))], lambda ls: ad.mul(ls[0], -1.25))
    case("square", [u((5, 7))], lambda ls: ad.square(ls[0]))
    case("sqrt", [u((5, 7), 0.5, 3.0)], lambda ls: ad.sqrt(ls[0]))
    case("exp", [u((5, 7))], lambda ls: ad.exp(ls[0]))
    case("log", [u((5, 7), 0.5, 3.0)], lambda ls: ad.log(ls[0]))
    case("abs", [np.sign(u((5, 7))) * (np.abs(u((5, 7))) + 0.3)], lambda ls: ad.absolute(ls[0]))
    case("tanh", [u((5, 7))], lambda ls: ad.tanh(ls[0]))

    away = np.sign(u((5, 7))) * (np.abs(u((5, 7))) + 0.3)
    case("leaky_relu", [away], lambda ls: ad.leaky_relu(ls[0], 0.1))
    shifted = u((5, 7), 0.5, 2.5) * np.sign(u((5, 7)))
    case("maximum_const", [shifted], lambda ls: ad.maximum_const(ls[0], 0.2))

    case("snake", [u((6, 20)), u((6,), 0.3, 2.0)], lambda ls: ad.snake(ls[0], ls[1]))
    case("snake_3d", [u((3, 4, 10)), u((3,), 0.3, 2.0)], lambda ls: ad.snake(ls[0], ls[1]))

    case("reshape", [u((4, 6))], lambda ls: ad.reshape(ls[0], (2, 12)))
    case("transpose", [u((3, 4, 5))], lambda ls: ad.transpose(ls[0], (2, 0, 1)))
    case(
        "concat",
        [u((3, 5)), u((2, 5)), u((4, 5))],
        lambda ls: ad.concat(ls, axis=0),
    )
    case("narrow", [u((4, 12))], lambda ls: ad.narrow(ls[0], 1, 3, 6))
    case("pad1d", [u((3, 10))], lambda ls: ad.pad1d(ls[0], 2, 5))
    case("reflect_pad1d", [u((3, 10))], lambda ls: ad.reflect_pad1d(ls[0], 4, 3))
    case("zero_stuff2", [u((3, 8))], lambda ls: ad.zero_stuff2(ls[0]))
    case("decimate2", [u((3, 12))], lambda ls: ad.decimate2(ls[0]))
    case("tsum", [u((6, 7))], lambda ls: ad.tsum(ls[0]))
    case("tmean", [u((6, 7))], lambda ls: ad.tmean(ls[0]))
    case("matmul", [u((5, 4)), u((4, 6))], lambda ls: ad.matmul(ls[0], ls[1]))

    case(
        "conv1d_plain",
        [u((3, 21)), u((4, 3, 5)), u((4,))],
        lambda ls: ad.conv1d(ls[0], ls[1], ls[2]),
    )
    case(
        "conv1d_strided_dilated",
        [u((3, 30)), u((5, 3, 4)), u((5,))],
        lambda ls: ad.conv1d(ls[0], ls[1], ls[2], stride=3, dilation=2, padding=4),
    )
    case(
        "conv1d_pointwise",
        [u((6, 13)), u((2, 6, 1))],
        lambda ls: ad.conv1d(ls[0], ls[1]),
    )
    case(
        "conv_transpose1d",
        [u((4, 9)), u((4, 3, 8)), u((3,))],
        lambda ls: ad.conv_transpose1d(ls[0], ls[1], ls[2], stride=4, padding=2),
    )
    case(
        "conv2d",
        [u((2, 9, 8)), u((3, 2, 3, 2)), u((3,))],
        lambda ls: ad.conv2d(ls[0], ls[1], ls[2], stride=(2, 1), padding=(1, 1)),
    )
    case("avg_pool1d", [u((3, 17))], lambda ls: ad.avg_pool1d(ls[0], 4, 2))

    fir = np.array([0.1, -0.25, 0.6, -0.25, 0.1])
    case("fir1d", [u((3, 14))], lambda ls: ad.fir1d(ls[0], fir))

    case("frame_overlap", [u((64,))], lambda ls: ad.frame_signal(ls[0], 16, 4, 13))
    case("frame_gapped", [u((70,))], lambda ls: ad.frame_signal(ls[0], 6, 10, 7))
    case("rdft_even", [u((5, 16))], lambda ls: ad.rdft(ls[0]))
    case("rdft_odd", [u((4, 15))], lambda ls: ad.rdft(ls[0]))

    def composite(ls):
        h = ad.conv1d(ls[0], ls[1], stride=1, padding=2)
        h = ad.snake(h, ls[2])
        h = ad.add(h, ls[0])
        fr = ad.frame_signal(ad.reshape(ad.narrow(h, 0, 0, 1), (24,)), 8, 4, 5)
        spec = ad.rdft(fr)
        return ad.tmean(ad.square(spec))

    cases.append(
        OpCase(
            "composite_residual_spectral",
            [u((1, 24)), u((1, 1, 5)), u((1,), 0.3, 2.0)],
            composite,
        )
    )
    return cases


class _Slot:
    """Duck-typed stand-in for Parameter: forwards only the .tensor field."""

    __slots__ = ("tensor",)

    def __init__(self, tensor: Tensor):
        self.tensor = tensor


def _const(arr: np.ndarray, dtype) -> _Slot:
    return _Slot(Tensor(arr.astype(dtype)))


def model_cases(seed: int = 11) -> list[OpCase]:
    """Finite-difference checks through whole model graphs.

    Leaves are the sample input plus a subset of each model's parameter
    arrays; remaining parameters enter as constants cast to the leaf dtype
    so both precision passes run a pure-dtype graph.
    """
    from .codec import CodecConfig
    from .discriminators import build_discriminators, discriminate
    from .generator import (
        AMPBlockConfig,
        GeneratorConfig,
        GeneratorModel,
        amp_block_forward,
        build_generator,
        generator_forward_tensor,
    )
    from .signal import MelConfig, SpectralConfig

    rng = np.random.default_rng(seed)
    cases: list[OpCase] = []

    def u(shape, lo, hi):
        return _f32_representable(rng, shape, lo, hi)

    # --- one AMP block, both branches live, resampling guard on ---
    c, t, k = 6, 16, 3
    amp_consts = {
        "la1": u((c,), -0.3, 0.3),
        "w1": u((c, c, k), -0.4, 0.4),
        "b1": u((c,), -0.2, 0.2),
    }
    amp_cot = u((c, t), -1.0, 1.0)

    def build_amp(ls):
        x, la0, w0, b0 = ls
        cfg = AMPBlockConfig(channels=c, dilations=(1, 3), kernel=k, use_resampling=True)
        cfg.alphas = [_Slot(la0), _const(amp_consts["la1"], x.dtype)]
        cfg.weights = [_Slot(w0), _const(amp_consts["w1"], x.dtype)]
        cfg.biases = [_Slot(b0), _const(amp_consts["b1"], x.dtype)]
        return weighted_sum(amp_block_forward(x, cfg), amp_cot)

    cases.append(
        OpCase(
            "model_amp_block",
            [u((c, t), -1.0, 1.0), u((c,), -0.3, 0.3), u((c, c, k), -0.4, 0.4), u((c,), -0.2, 0.2)],
            build_amp,
        )
    )

    # --- full generator graph on the shipped tiny preset ---
    from .presets import tiny_generator_config

    gen_cfg = tiny_generator_config("Z")
    proto = build_generator(gen_cfg, codec=None, seed=int(rng.integers(1 << 30)))
    gen_consts = {name: p.data.astype(np.float64) for name, p in proto.params.items()}
    for name in gen_consts:
        if name.startswith("encoder.amp") and name.endswith(".w"):
            gen_consts[name] = u(gen_consts[name].shape, -0.15, 0.15)
        elif name.endswith(".b") or name.endswith(".log_alpha"):
            gen_consts[name] = u(gen_consts[name].shape, -0.1, 0.1)
    gen_leaf_names = (
        "encoder.stem.w",
        "encoder.amp0.d0.w",
        "encoder.amp1.d2.w",
        "encoder.head.w",
        "decoder.up0.w",
    )
    mel_cfg = MelConfig(
        spectral=SpectralConfig(n_fft=512, win_length=512, hop_length=256),
        n_mels=gen_cfg.mel_bins,
    )
    gen_t = 2048
    gen_cot = u((gen_t,), -1.0, 1.0)

    def make_gen_builder(leaf_names, skip_enabled, extra_consts):
        def build(ls):
            x = ls[0]
            slots = {}
            for cname, arr in gen_consts.items():
                override = extra_consts.get(cname)
                slots[cname] = _const(arr if override is None else override, x.dtype)
            for lname, leaf in zip(leaf_names, ls[1:]):
                slots[lname] = _Slot(leaf)
            blocks = []
            for i in range(gen_cfg.n_amp_blocks):
                block = AMPBlockConfig(
                    channels=gen_cfg.c0,
                    dilations=gen_cfg.dilations,
                    kernel=gen_cfg.amp_kernel,
                    use_resampling=True,
                )
                for j in range(len(gen_cfg.dilations)):
                    block.alphas.append(slots[f"encoder.amp{i}.d{j}.log_alpha"])
                    block.weights.append(slots[f"encoder.amp{i}.d{j}.w"])
                    block.biases.append(slots[f"encoder.amp{i}.d{j}.b"])
                blocks.append(block)
            g = GeneratorModel(
                config=gen_cfg,
                params=slots,
                amp_blocks=blocks,
                mode=proto.mode,
                up_proj=proto.up_proj,
                skip_enabled=skip_enabled,
            )
            return weighted_sum(generator_forward_tensor(x, g, mel_cfg), gen_cot)

        return build

    gen_arrays = [u((gen_t,), -0.6, 0.6)] + [
        u(gen_consts[name].shape, -0.3, 0.3) for name in gen_leaf_names
    ]
    cases.append(OpCase("model_generator_full", gen_arrays, make_gen_builder(gen_leaf_names, False, {})))

    skip_names = ("skip.proj.w",)
    skip_arrays = [u((gen_t,), -0.6, 0.6), u(gen_consts["skip.proj.w"].shape, -0.3, 0.3)]
    cases.append(OpCase("model_generator_skip", skip_arrays, make_gen_builder(skip_names, True, {})))

    # --- both discriminator families through logits ---
    disc = build_discriminators(seed=int(rng.integers(1 << 30)))
    disc_consts = {name: p.data.astype(np.float64) for name, p in disc.params.items()}
    disc_leaf_names = ("mpd0.conv0.w", "mpd4.post.w", "mrsd0.band0.conv0.w", "mrsd2.band4.post.w")
    disc_t = 1536
    with ad.no_grad():
        probe = discriminate(Tensor(u((disc_t,), -0.8, 0.8)), disc)
    disc_cots = [u(l.shape, -1.0, 1.0) for l in probe.logits]

    def build_disc(ls):
        x = ls[0]
        slots = {name: _const(arr, x.dtype) for name, arr in disc_consts.items()}
        for lname, leaf in zip(disc_leaf_names, ls[1:]):
            slots[lname] = _Slot(leaf)
        model = type(disc)(mpd=disc.mpd, mrsd=disc.mrsd, params=slots)
        out = discriminate(x, model)
        total = None
        for logit, cot in zip(out.logits, disc_cots):
            term = weighted_sum(logit, cot)
            total = term if total is None else ad.add(total, term)
        return total

    disc_arrays = [u((disc_t,), -0.8, 0.8)] + [
        u(disc_consts[name].shape, -0.3, 0.3) for name in disc_leaf_names
    ]
    cases.append(OpCase("model_discriminators", disc_arrays, build_disc))
    return cases


def run_cases(cases: list[OpCase], probes: int = 24, seed: int = 0) -> list[CaseResult]:
    return [check_case(c, probes=probes, seed=seed + i) for i, c in enumerate(cases)]
