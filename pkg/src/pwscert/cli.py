"""Command-line front end for reproducible certification experiments.

Subcommands: gen-scenes, train, project, partition, certify, attack,
report.  Radii take unit suffixes (mm/m for translations, deg/rad for
rotations) and convert to SI at the boundary.  Module errors exit with
status 1 and a single ``kind: message`` line on stderr; configuration
errors exit with status 2.  ``PWS_THREADS`` caps worker fan-out.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import math
import time
from pathlib import Path

import click
import numpy as np

from .certify import (
    IntervalConfig,
    Verdict,
    certify,
    empirical_attack,
    frame_budget_comparison,
)
from .classifier import builtin_train, load_model, save_model
from .errors import ConfigError, PwsError
from .geometry import Axis, CameraModel, MotionSpec, MotionValue
from .intervals import (
    CertMethod,
    DeltaConvexity,
    build_partition,
)
from .certify import compute_delta_alpha
from .rasterizer import render, save_image
from .scenes import ShapeClass, generate_scene, load_corpus, save_corpus
from .smoothing import SmoothingConfig

_AXES = {a.value: a for a in Axis}


def parse_radius(text: str, axis: Axis) -> float:
    """'10mm' -> 0.01 m, '0.25deg' -> radians; unit must match the axis."""
    text = text.strip().lower()
    units = {"mm": 1e-3, "m": 1.0, "deg": math.pi / 180.0, "rad": 1.0}
    for suffix in ("mm", "rad", "deg", "m"):
        if text.endswith(suffix):
            try:
                value = float(text[: -len(suffix)])
            except ValueError as exc:
                raise ConfigError(f"bad radius {text!r}") from exc
            if axis.is_rotation != (suffix in ("deg", "rad")):
                raise ConfigError(
                    f"unit {suffix!r} does not fit axis {axis.value!r}"
                )
            return value * units[suffix]
    raise ConfigError(f"radius {text!r} needs a unit suffix (mm, m, deg, rad)")


def _spec_from(axis_name: str, radius_text: str) -> MotionSpec:
    axis = _AXES.get(axis_name.lower())
    if axis is None:
        raise ConfigError(f"unknown axis {axis_name!r}")
    radius = parse_radius(radius_text, axis)
    if radius <= 0:
        raise ConfigError("radius must be positive")
    return MotionSpec(axis, radius)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(
        json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    os.replace(tmp, path)


def _interval_config(resolution, quantile, delta_px, background=0.5):
    convexity = DeltaConvexity(delta_px) if delta_px is not None else None
    return IntervalConfig(
        resolution=resolution,
        quantile=quantile,
        convexity=convexity,
        background=background,
    )


def _fail(err: PwsError):
    click.echo(f"{err.kind}: {err}", err=True)
    sys.exit(2 if isinstance(err, ConfigError) else 1)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except PwsError as err:
            _fail(err)


@click.group(cls=_Group)
def main():
    """Certify image classifiers against one-axis camera motion."""


@main.command("gen-scenes")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--profile", type=click.Choice(["demo", "churn", "random"]),
              default="demo", show_default=True,
              help="demo/churn: frozen drift-aware corpora; random: free placement")
@click.option("--classes", default=4, show_default=True)
@click.option("--per-class", default=3, show_default=True)
@click.option("--points", default=3000, show_default=True, help="random profile only")
@click.option("--grid", default=32, show_default=True, help="random profile only")
@click.option("--channels", default=1, show_default=True, help="random profile only")
@click.option("--depth", default="1.6:2.4", show_default=True,
              help="LO:HI meters, random profile only")
@click.option("--focal", default=None, type=float, help="random profile only")
@click.option("--layered/--no-layered", default=True, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_gen_scenes(out, profile, classes, per_class, points, grid, channels, depth,
                   focal, layered, seed):
    """Write a synthetic labeled corpus."""
    if not 2 <= classes <= len(ShapeClass):
        raise ConfigError(f"classes must be 2..{len(ShapeClass)}")
    scenes = []
    if profile in ("demo", "churn"):
        from .demo import build_demo_scene, demo_camera

        variant = "trend" if profile == "demo" else "churn"
        cam = demo_camera()
        for cls in list(ShapeClass)[:classes]:
            for rep in range(per_class):
                scenes.append(build_demo_scene(cls, seed * 1000 + rep, variant))
    else:
        try:
            lo, hi = (float(part) for part in depth.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad depth range {depth!r}") from exc
        f = focal if focal is not None else grid * 1.0
        cam = CameraModel(
            fx=f, fy=f, cx=grid / 2, cy=grid / 2, width=grid, height=grid
        )
        for cls in list(ShapeClass)[:classes]:
            for rep in range(per_class):
                scenes.append(
                    generate_scene(
                        cls, points, (lo, hi), seed * 1000 + rep, cam,
                        channels=channels, layered=layered,
                    )
                )
    save_corpus(out, scenes, cam)
    click.echo(f"wrote {len(scenes)} scenes to {out}")


@main.command("train")
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--sigma", default=0.5, show_default=True)
@click.option("--augment", default=4, show_default=True)
@click.option("--downsample", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_train(corpus, out, sigma, augment, downsample, seed):
    """Train the built-in classifier on reference renders of a corpus."""
    scenes, cam = load_corpus(corpus)
    dataset = [
        (render(s.cloud, MotionValue(MotionSpec(Axis.TX, 1.0), 0.0), cam), s.label)
        for s in scenes
    ]
    clf = builtin_train(dataset, noise_sigma=sigma, augment_count=augment,
                        seed=seed, downsample=downsample)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, clf)
    correct = sum(
        1 for (img, lab) in dataset if int(np.argmax(clf.predict(img))) == lab
    )
    click.echo(f"trained on {len(dataset)} scenes, clean accuracy "
               f"{correct / len(dataset):.3f}, model at {out}")


@main.command("partition")
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--scene", "scene_name", default=None, help="default: first scene")
@click.option("--axis", required=True)
@click.option("--radius", required=True)
@click.option("--method", type=click.Choice([m.value for m in CertMethod]),
              default="exact", show_default=True)
@click.option("--resolution", default=2001, show_default=True)
@click.option("--quantile", default=0.995, show_default=True)
@click.option("--delta", "delta_px", default=None, type=float,
              help="convexity slack in pixels (one-frame only)")
@click.option("--json-out", default=None, type=click.Path(path_type=Path))
def cmd_partition(corpus, scene_name, axis, radius, method, resolution, quantile,
                  delta_px, json_out):
    """Print the admissible spacing and partition size for one scene."""
    scenes, cam = load_corpus(corpus)
    scene = _pick_scene(scenes, scene_name)
    spec = _spec_from(axis, radius)
    cfg = _interval_config(resolution, quantile, delta_px)
    delta, _ = compute_delta_alpha(
        scene.cloud, spec, cam, CertMethod(method), cfg
    )
    plan = build_partition(delta, spec, CertMethod(method), quantile)
    click.echo(f"delta_alpha={delta:.8g} n={plan.count} method={method}")
    if json_out is not None:
        _write_json(json_out, plan.to_json())


def _pick_scene(scenes, name):
    if name is None:
        return scenes[0]
    for scene in scenes:
        if scene.name == name:
            return scene
    raise ConfigError(f"scene {name!r} not in corpus")


@main.command("project")
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--scene", "scene_name", default=None)
@click.option("--axis", required=True)
@click.option("--radius", required=True)
@click.option("--method", type=click.Choice([m.value for m in CertMethod]),
              default="exact", show_default=True)
@click.option("--resolution", default=2001, show_default=True)
@click.option("--quantile", default=0.995, show_default=True)
@click.option("--delta", "delta_px", default=None, type=float)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def cmd_project(corpus, scene_name, axis, radius, method, resolution, quantile,
                delta_px, out):
    """Render the partition frames of one scene to PWSI1 files."""
    scenes, cam = load_corpus(corpus)
    scene = _pick_scene(scenes, scene_name)
    spec = _spec_from(axis, radius)
    cfg = _interval_config(resolution, quantile, delta_px)
    delta, _ = compute_delta_alpha(scene.cloud, spec, cam, CertMethod(method), cfg)
    plan = build_partition(delta, spec, CertMethod(method), quantile)
    out.mkdir(parents=True, exist_ok=True)
    for i, value in enumerate(plan.values):
        frame = render(scene.cloud, MotionValue(spec, float(value)), cam)
        save_image(out / f"{scene.name}_{i:05d}.pwsi", frame)
    _write_json(out / "partition.json", plan.to_json())
    click.echo(f"wrote {plan.count} frames to {out}")


@main.command("certify")
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--model", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--axis", required=True)
@click.option("--radius", required=True)
@click.option("--sigma", default=0.5, show_default=True)
@click.option("--n-samples", default=10000, show_default=True)
@click.option("--alpha", default=0.001, show_default=True)
@click.option("--method", type=click.Choice([m.value for m in CertMethod]),
              default="exact", show_default=True)
@click.option("--resolution", default=2001, show_default=True)
@click.option("--quantile", default=0.995, show_default=True)
@click.option("--delta", "delta_px", default=None, type=float)
@click.option("--seed", default=0, show_default=True)
@click.option("--scene", "only", multiple=True, help="restrict to named scenes")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def cmd_certify(corpus, model, axis, radius, sigma, n_samples, alpha, method,
                resolution, quantile, delta_px, seed, only, out):
    """Certify every corpus scene; write per-sample reports and a summary."""
    scenes, cam = load_corpus(corpus)
    if only:
        scenes = [s for s in scenes if s.name in set(only)]
        if not scenes:
            raise ConfigError("scene filter matched nothing")
    clf = load_model(model)
    spec = _spec_from(axis, radius)
    smoothing = SmoothingConfig(
        sigma=sigma, n_samples=n_samples, confidence_alpha=alpha, seed=seed
    )
    cfg = _interval_config(resolution, quantile, delta_px)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    samples = {}
    for scene in scenes:
        try:
            report = certify(scene.cloud, spec, cam, clf, smoothing,
                             CertMethod(method), cfg)
        except PwsError as err:
            samples[scene.name] = {
                "error": f"{err.kind}: {err}",
                "true_label": scene.label,
            }
            continue
        payload = report.to_json()
        payload["scene"] = scene.name
        payload["true_label"] = scene.label
        _write_json(out / f"{scene.name}.cert.json", payload)
        samples[scene.name] = {
            "verdict": report.verdict.value,
            "top_label": report.top_label,
            "true_label": scene.label,
            "n_partitions": report.n_partitions,
            "ratio_vs_baseline": frame_budget_comparison(report),
            "min_radius": report.min_radius,
            "max_adjacent_error": report.max_adjacent_error,
        }
    certified_ok = sum(
        1
        for s in samples.values()
        if s.get("verdict") == Verdict.CERTIFIED.value
        and s.get("top_label") == s.get("true_label")
    )
    summary = {
        "config": {
            "axis": spec.axis.value,
            "radius_b": spec.radius_b,
            "radius_text": radius,
            "sigma": sigma,
            "n_samples": n_samples,
            "confidence_alpha": alpha,
            "method": method,
            "resolution": resolution,
            "quantile": quantile,
            "convexity_delta": delta_px,
            "seed": seed,
        },
        "samples": samples,
        "certified_accuracy": certified_ok / len(samples),
        "timing": {"wall_time_s": time.perf_counter() - t0},
    }
    _write_json(out / "summary.json", summary)
    click.echo(
        f"certified accuracy {summary['certified_accuracy']:.3f} "
        f"over {len(samples)} scenes; reports in {out}"
    )


@main.command("attack")
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--model", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--axis", required=True)
@click.option("--radius", required=True)
@click.option("--sigma", default=0.5, show_default=True)
@click.option("--poses", default=100, show_default=True)
@click.option("--n-samples", default=10000, show_default=True)
@click.option("--alpha", default=0.001, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--scene", "only", multiple=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def cmd_attack(corpus, model, axis, radius, sigma, poses, n_samples, alpha, seed,
               only, out):
    """Sweep poses looking for smoothed-prediction label changes."""
    scenes, cam = load_corpus(corpus)
    if only:
        scenes = [s for s in scenes if s.name in set(only)]
        if not scenes:
            raise ConfigError("scene filter matched nothing")
    clf = load_model(model)
    spec = _spec_from(axis, radius)
    smoothing = SmoothingConfig(
        sigma=sigma, n_samples=n_samples, confidence_alpha=alpha, seed=seed
    )
    out.mkdir(parents=True, exist_ok=True)
    robust = 0
    for scene in scenes:
        report = empirical_attack(scene.cloud, spec, cam, clf, smoothing, poses)
        payload = report.to_json()
        payload["scene"] = scene.name
        payload["true_label"] = scene.label
        _write_json(out / f"{scene.name}.attack.json", payload)
        robust += int(report.empirically_robust)
    click.echo(f"{robust}/{len(scenes)} scenes empirically robust; reports in {out}")


@main.command("report")
@click.option("--runs", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
def cmd_report(runs, out):
    """Aggregate certify summaries under a directory into one CSV."""
    rows = []
    for summary_path in sorted(Path(runs).rglob("summary.json")):
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        cfg = summary["config"]
        samples = [s for s in summary["samples"].values() if "verdict" in s]
        if not samples:
            continue
        rows.append(
            {
                "radius": cfg["radius_text"],
                "axis": cfg["axis"],
                "method": cfg["method"],
                "sigma": cfg["sigma"],
                "certified_accuracy": summary["certified_accuracy"],
                "mean_N": float(np.mean([s["n_partitions"] for s in samples])),
                "mean_ratio": float(
                    np.mean([s["ratio_vs_baseline"] for s in samples])
                ),
            }
        )
    if not rows:
        raise ConfigError(f"no certify summaries under {runs}")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "radius", "axis", "method", "sigma",
                "certified_accuracy", "mean_N", "mean_ratio",
            ],
        )
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
