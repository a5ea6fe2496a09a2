"""Command-line surface.

Subcommands: gen-data, train-codec, train, infer, eval, gradcheck. Every
run writes a ``run.json`` manifest recording the command, package version,
and fully resolved parameters, so a run can be reproduced from its output
directory alone. Train configs come from a JSON file (schema in the
README); command-line flags override file values.
"""

import dataclasses
import json
import os
import sys

import click
import numpy as np

from . import __version__
from .codec import CodecTrainConfig, load_codec, save_codec, train_codec
from .discriminators import MPDConfig, MRSDConfig, build_discriminators
from .errors import ConfigError, DataError, MelvoxError
from .evaluate import MetricConfig, evaluate_model, write_report
from .generator import build_generator, generator_forward, load_generator
from .gradcheck import model_cases, op_cases, run_cases
from .presets import (
    CODEC_PRESETS,
    GENERATOR_PRESETS,
    TRAIN_PRESETS,
    codec_preset,
    generator_preset,
    preset_mel_config,
    train_preset,
)
from .synth import SyntheticDatasetSpec, synth_dataset
from .training import TrainState, load_train_checkpoint, make_train_models, train
from .wavio import read_wav, write_wav

# TrainConfig keys a config file may set; anything else is rejected.
_TRAIN_FILE_KEYS = {
    "lr",
    "beta1",
    "beta2",
    "gamma",
    "clip_threshold",
    "weight_decay",
    "segment_length",
    "batch_size",
    "stage_switch_step",
    "total_steps",
    "mel_n_fft",
    "n_scales",
    "seed",
}


def _fail(e: Exception) -> None:
    click.echo(f"error: {e}", err=True)
    sys.exit(1)


def _write_run_manifest(out_dir: str, command: str, params: dict, filename: str = "run.json") -> str:
    os.makedirs(out_dir or ".", exist_ok=True)
    path = os.path.join(out_dir, filename)
    payload = {"command": command, "version": __version__, "params": params}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _load_corpus(data_dir: str) -> list:
    names = sorted(f for f in os.listdir(data_dir) if f.endswith(".wav"))
    if not names:
        raise DataError(f"no .wav files in {data_dir}")
    return [read_wav(os.path.join(data_dir, n)) for n in names]


@click.group()
@click.version_option(__version__, prog_name="melvox")
def main():
    """Mel-spectrogram vocoder: data synthesis, training, inference, evaluation."""


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path(), help="Output corpus directory.")
@click.option("--clips", default=64, show_default=True, help="Number of clips.")
@click.option("--seconds", default=2.0, show_default=True, help="Clip duration.")
@click.option("--sample-rate", default=44100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--percussive-rate", default=4.0, show_default=True, help="Mean bursts per second.")
@click.option("--noise-floor", default=1e-3, show_default=True)
@click.option("--min-voices", default=1, show_default=True)
@click.option("--max-voices", default=8, show_default=True)
def gen_data(out, clips, seconds, sample_rate, seed, percussive_rate, noise_floor, min_voices, max_voices):
    """Write a deterministic synthetic corpus of WAV clips."""
    try:
        spec = SyntheticDatasetSpec(
            n_clips=clips,
            clip_seconds=seconds,
            sample_rate=sample_rate,
            min_voices=min_voices,
            max_voices=max_voices,
            percussive_rate=percussive_rate,
            noise_floor=noise_floor,
            seed=seed,
        )
        paths = synth_dataset(spec, out)
        _write_run_manifest(out, "gen-data", dataclasses.asdict(spec))
        click.echo(f"wrote {len(paths)} clips to {out}")
    except (MelvoxError, OSError) as e:
        _fail(e)


@main.command("train-codec")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--preset", default="desk", show_default=True,
              type=click.Choice(sorted(CODEC_PRESETS)), help="Codec architecture preset.")
@click.option("--steps", default=800, show_default=True)
@click.option("--segment", default=16384, show_default=True, help="Training segment length.")
@click.option("--seed", default=0, show_default=True)
@click.option("--log-every", default=25, show_default=True)
def train_codec_cmd(data, out, preset, steps, segment, seed, log_every):
    """Fit the teacher codec on a WAV corpus and save its checkpoint."""
    try:
        clips = _load_corpus(data)
        os.makedirs(out, exist_ok=True)
        cfg = CodecTrainConfig(
            model=codec_preset(preset),
            steps=steps,
            segment_len=segment,
            seed=seed,
            log_path=os.path.join(out, "codec_log.jsonl"),
            log_every=log_every,
        )
        params = dataclasses.asdict(cfg)
        params["preset"] = preset
        params["data"] = str(data)
        _write_run_manifest(out, "train-codec", params)
        model = train_codec(clips, cfg)
        ckpt = os.path.join(out, "codec.ckpt")
        save_codec(ckpt, model)
        click.echo(f"trained codec for {steps} steps; checkpoint at {ckpt}")
    except (MelvoxError, OSError) as e:
        _fail(e)


def _resolve_train_config(config_path, preset, overrides):
    """Precedence: CLI flags > config file > named preset defaults."""
    file_cfg = {}
    if config_path:
        with open(config_path) as f:
            file_cfg = json.load(f)
        if not isinstance(file_cfg, dict):
            raise ConfigError("train config file must hold a JSON object")
    preset = preset or file_cfg.pop("preset", None) or "desk"
    gen_name = overrides.pop("gen_preset", None) or file_cfg.pop("generator", None) or "tiny"
    mode = overrides.pop("mode", None) or file_cfg.pop("mode", None) or "Z"
    unknown = set(file_cfg) - _TRAIN_FILE_KEYS
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    cfg = train_preset(preset)
    merged = {k: v for k, v in file_cfg.items()}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if merged:
        cfg = dataclasses.replace(cfg, **merged)
    return cfg, gen_name, mode


@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--codec", "codec_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Frozen teacher codec checkpoint.")
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON config file; flags override its values.")
@click.option("--preset", type=click.Choice(sorted(TRAIN_PRESETS)), help="Schedule preset.")
@click.option("--gen-preset", type=click.Choice(sorted(GENERATOR_PRESETS)),
              help="Generator architecture preset.")
@click.option("--mode", type=click.Choice(["Z", "QL"]), help="Bottleneck alignment target.")
@click.option("--steps", type=int, help="Override total_steps.")
@click.option("--switch", type=int, help="Override stage_switch_step.")
@click.option("--batch", type=int, help="Override batch_size.")
@click.option("--segment", type=int, help="Override segment_length.")
@click.option("--seed", type=int, help="Override seed.")
@click.option("--checkpoint-every", default=0, show_default=True,
              help="Also snapshot training state every N steps.")
@click.option("--resume", is_flag=True, help="Continue from OUT/train_state.ckpt.")
def train_cmd(data, codec_path, out, config_path, preset, gen_preset, mode, steps, switch,
              batch, segment, seed, checkpoint_every, resume):
    """Run the two-stage vocoder training loop."""
    try:
        teacher = load_codec(codec_path)
        teacher.freeze()
        clips = _load_corpus(data)
        state_path = os.path.join(out, "train_state.ckpt")
        if resume and os.path.exists(state_path):
            tm, state, cfg = load_train_checkpoint(state_path, teacher)
            if steps is not None:
                cfg = dataclasses.replace(cfg, total_steps=steps)
            gen_name, gen_mode = "resumed", tm.generator.mode.variant
        else:
            overrides = {
                "gen_preset": gen_preset,
                "mode": mode,
                "total_steps": steps,
                "stage_switch_step": switch,
                "batch_size": batch,
                "segment_length": segment,
                "seed": seed,
            }
            cfg, gen_name, gen_mode = _resolve_train_config(config_path, preset, overrides)
            gen_cfg = dataclasses.replace(generator_preset(gen_name, gen_mode), codec=teacher.config)
            gen = build_generator(gen_cfg, codec=teacher, seed=cfg.seed)
            discs = build_discriminators(MPDConfig(), MRSDConfig(), seed=cfg.seed + 1)
            tm = make_train_models(gen, discs, teacher, cfg)
            state = TrainState(rng=np.random.default_rng(cfg.seed))
        params = dataclasses.asdict(cfg)
        params.update({
            "generator": gen_name,
            "mode": gen_mode,
            "data": str(data),
            "codec": str(codec_path),
            "resume": bool(resume),
            "checkpoint_every": checkpoint_every,
        })
        _write_run_manifest(out, "train", params)
        summary = train(tm, state, cfg, clips, out, checkpoint_every=checkpoint_every)
        click.echo(
            f"trained to step {summary['steps']} (stage {summary['stage']}); "
            f"checkpoints in {out}"
        )
    except (MelvoxError, OSError) as e:
        _fail(e)


@main.command("infer")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Generator checkpoint.")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Input WAV; resynthesized through mel analysis.")
@click.option("--output", required=True, type=click.Path())
@click.option("--mel-n-fft", default=1024, show_default=True)
@click.option("--fmt", default="f32", show_default=True, type=click.Choice(["f32", "pcm16"]))
def infer(checkpoint, input_path, output, mel_n_fft, fmt):
    """Resynthesize a WAV file through the vocoder."""
    try:
        gen = load_generator(checkpoint)
        seg = read_wav(input_path)
        sr = gen.config.codec.sample_rate
        if seg.sample_rate != sr:
            raise DataError(f"input sample rate {seg.sample_rate} != model rate {sr}")
        n = len(seg.samples) - len(seg.samples) % 512
        if n < 2048:
            raise DataError(f"input too short: need at least 2048 samples, usable {n}")
        mel_cfg = preset_mel_config(gen.config, n_fft=mel_n_fft)
        wave = generator_forward(seg.samples[:n].astype(np.float32), gen, mel_cfg)
        write_wav(output, wave, fmt=fmt)
        _write_run_manifest(
            os.path.dirname(output),
            "infer",
            {
                "checkpoint": str(checkpoint),
                "input": str(input_path),
                "output": str(output),
                "mel_n_fft": mel_n_fft,
                "fmt": fmt,
                "samples": int(n),
            },
            filename=os.path.basename(output) + ".run.json",
        )
        click.echo(f"wrote {n} samples to {output}")
    except (MelvoxError, OSError) as e:
        _fail(e)


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--mel-n-fft", default=1024, show_default=True)
@click.option("--no-figures", is_flag=True, help="Skip figure rendering.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              help="Training manifest.jsonl for the loss-curve figure.")
def eval_cmd(checkpoint, data, out, mel_n_fft, no_figures, manifest_path):
    """Compute MR-STFT / MR-MEL over a corpus and write the report."""
    try:
        gen = load_generator(checkpoint)
        mel_cfg = preset_mel_config(gen.config, n_fft=mel_n_fft)
        report = evaluate_model(gen, mel_cfg, data, MetricConfig())
        if not report.rows:
            raise DataError(f"no clip evaluated; skipped: {report.skipped}")
        paths = write_report(
            report, out, figures=not no_figures, manifest_path=manifest_path, mel_cfg=mel_cfg
        )
        _write_run_manifest(out, "eval", {
            "checkpoint": str(checkpoint),
            "data": str(data),
            "mel_n_fft": mel_n_fft,
            "figures": not no_figures,
            "manifest": str(manifest_path) if manifest_path else None,
            "clips": len(report.rows),
            "skipped": len(report.skipped),
        })
        for metric, stats in report.summary().items():
            click.echo(f"{metric}: {stats['mean']:.4f} +/- {stats['std']:.4f}")
        for kind, path in sorted(paths.items()):
            click.echo(f"{kind}: {path}")
    except (MelvoxError, OSError) as e:
        _fail(e)


@main.command("gradcheck")
@click.option("--probes", default=24, show_default=True, help="FD probes per case.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="gradcheck", show_default=True, type=click.Path(),
              help="Directory for the result table and run manifest.")
def gradcheck_cmd(probes, seed, out):
    """Check analytic gradients against finite differences; exit 1 on failure."""
    try:
        results = run_cases(op_cases() + model_cases(), probes=probes, seed=seed)
    except (MelvoxError, OSError) as e:
        _fail(e)
    lines = []
    failed = 0
    for r in results:
        ok = r.passed()
        failed += 0 if ok else 1
        line = (
            f"{'PASS' if ok else 'FAIL'}\t{r.name}\t"
            f"f32 {r.err_f32:.3e}\tf64 {r.err_f64:.3e}\tprobes {r.probes}"
        )
        click.echo(line)
        lines.append(line)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "results.tsv"), "w") as f:
        f.write("\n".join(lines) + "\n")
    _write_run_manifest(out, "gradcheck", {"probes": probes, "seed": seed})
    click.echo(f"{len(results) - failed}/{len(results)} cases passed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
