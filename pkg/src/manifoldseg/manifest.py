"""Study manifests: channel files, mask, and pipeline parameters.

Two input syntaxes are accepted: a flat key=value file (one entry per line,
'#' comments, channels spelled ``channel.<name> = <path>``) or a JSON object
with a "channels" mapping and the same parameter names at the top level.
Unknown keys are rejected. Parameters outside their documented ranges are
rejected unless force is set.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import ManifestSyntaxError, MissingChannel, OutOfRangeParam
from .io_formats import read_mpv
from .pipeline import PipelineConfig, StudyInput
from .volume import LabelMap

# name -> (parse, default, range check, range text)
_RANGES = {
    "k": (int, 40, lambda v: 20 <= v <= 80, "[20, 80]"),
    "sigma": (float, 80.0, lambda v: 60 <= v <= 100, "[60, 100]"),
    "d": (int, 3, lambda v: 1 <= v <= 3, "[1, 3]"),
    "k1": (int, 3, lambda v: 3 <= v <= 13, "[3, 13]"),
    "k2": (int, 13, lambda v: 3 <= v <= 13, "[3, 13]"),
    "h": (int, 10, lambda v: 3 <= v <= 13, "[3, 13]"),
    "t": (float, 0.75, lambda v: 0 < v < 1, "(0, 1)"),
    "m": (int, 2000, lambda v: v >= 2, "[2, inf)"),
    "seed": (int, 1, lambda v: True, ""),
    "diffusion_time": (int, 1, lambda v: v >= 1, "[1, inf)"),
}
_CHOICES = {
    "method": ("isomap", ("isomap", "lle", "diffusion")),
    "normalize": ("zscore", ("zscore", "minmax", "none")),
    "perfusion_polarity": (None, ("cbf", "ttp")),
}
_KNOWN_KEYS = set(_RANGES) | set(_CHOICES) | {"mask", "spacing"}

REQUIRED_CHANNELS = ("adc", "t2")
PERFUSION_CHANNELS = ("cbf", "ttp")


@dataclass
class StudyManifest:
    channels: dict[str, str]
    mask: str | None = None
    spacing: tuple[float, float] | None = None
    perfusion_polarity: str = "cbf"
    method: str = "isomap"
    normalize: str = "zscore"
    params: dict = field(default_factory=dict)

    def to_config(self, **overrides) -> PipelineConfig:
        p = dict(self.params)
        p.update(overrides)
        return PipelineConfig(
            method=self.method,
            k=p["k"], sigma=p["sigma"], d=p["d"],
            diffusion_time=p["diffusion_time"],
            k1=p["k1"], k2=p["k2"], H=p["h"],
            threshold=p["t"], landmarks=p["m"],
            normalize=self.normalize, seed=p["seed"],
        )


def _validate(manifest: StudyManifest, force: bool) -> StudyManifest:
    for name in REQUIRED_CHANNELS:
        if name not in manifest.channels:
            raise MissingChannel(f"required channel '{name}' missing from manifest")
    perf = [c for c in PERFUSION_CHANNELS if c in manifest.channels]
    if not perf:
        raise MissingChannel("a perfusion channel ('cbf' or 'ttp') is required")
    if manifest.perfusion_polarity is None:
        manifest.perfusion_polarity = perf[0]
    if not force:
        for name, (_, _, check, rng) in _RANGES.items():
            v = manifest.params[name]
            if not check(v):
                raise OutOfRangeParam(
                    f"{name}={v} outside documented range {rng} (pass force to override)"
                )
        if manifest.params["k1"] > manifest.params["k2"]:
            raise OutOfRangeParam("k1 must not exceed k2")
    return manifest


def parse_manifest(text: str, force: bool = False) -> StudyManifest:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        entries = _parse_json(text)
    else:
        entries = _parse_keyvalue(text)

    channels = entries.pop("channels")
    params = {}
    for name, (conv, default, _, _) in _RANGES.items():
        raw = entries.pop(name, default)
        try:
            params[name] = conv(raw)
        except (TypeError, ValueError):
            raise ManifestSyntaxError(f"cannot parse {name}={raw!r}")
    choices = {}
    for name, (default, allowed) in _CHOICES.items():
        val = entries.pop(name, default)
        if val is not None and val not in allowed:
            raise OutOfRangeParam(f"{name}={val!r} not one of {allowed}")
        choices[name] = val
    mask = entries.pop("mask", None)
    spacing = entries.pop("spacing", None)
    if spacing is not None:
        try:
            parts = spacing if isinstance(spacing, (list, tuple)) else str(spacing).split(",")
            spacing = (float(parts[0]), float(parts[1]))
        except (ValueError, IndexError):
            raise ManifestSyntaxError(f"cannot parse spacing={spacing!r}")
    if entries:
        raise ManifestSyntaxError(f"unknown manifest keys: {sorted(entries)}")

    polarity = choices["perfusion_polarity"]
    if polarity is None:
        polarity = "ttp" if "ttp" in channels else "cbf"
    manifest = StudyManifest(
        channels=channels,
        mask=mask,
        spacing=spacing,
        perfusion_polarity=polarity,
        method=choices["method"],
        normalize=choices["normalize"],
        params=params,
    )
    return _validate(manifest, force)


def _parse_json(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestSyntaxError(str(exc.msg), line=exc.lineno)
    if not isinstance(doc, dict):
        raise ManifestSyntaxError("manifest JSON must be an object")
    channels = doc.pop("channels", None)
    if not isinstance(channels, dict) or not channels:
        raise MissingChannel("manifest needs a non-empty 'channels' mapping")
    doc["channels"] = {str(k): str(v) for k, v in channels.items()}
    return doc


def _parse_keyvalue(text: str) -> dict:
    entries: dict = {}
    channels: dict[str, str] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestSyntaxError(f"expected key=value, got {line!r}", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith("channel."):
            channels[key[len("channel."):]] = value
            continue
        if key not in _KNOWN_KEYS:
            raise ManifestSyntaxError(f"unknown key {key!r}", line=lineno)
        if key in entries:
            raise ManifestSyntaxError(f"duplicate key {key!r}", line=lineno)
        entries[key] = value
    if not channels:
        raise MissingChannel("manifest defines no channel.<name> entries")
    entries["channels"] = channels
    return entries


def serialize_manifest(manifest: StudyManifest) -> str:
    """Canonical JSON form with sorted keys."""
    doc = {
        "channels": dict(manifest.channels),
        "perfusion_polarity": manifest.perfusion_polarity,
        "method": manifest.method,
        "normalize": manifest.normalize,
    }
    if manifest.mask is not None:
        doc["mask"] = manifest.mask
    if manifest.spacing is not None:
        doc["spacing"] = list(manifest.spacing)
    doc.update(manifest.params)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_study(manifest: StudyManifest, base_dir: str = ".") -> StudyInput:
    """Read the referenced MPV files into a StudyInput."""
    volumes = {}
    cache: dict[str, list] = {}
    for name, rel in manifest.channels.items():
        path = os.path.join(base_dir, rel)
        if path not in cache:
            cache[path] = read_mpv(path)
        vols = cache[path]
        match = [v for v in vols if v.name.split("[")[0] == name]
        if not match and len(vols) == 1:
            match = vols
        if not match:
            raise MissingChannel(f"channel '{name}' not found in {path}")
        vol = match[0]
        if manifest.spacing is not None:
            vol.spacing = manifest.spacing
        volumes[name] = vol
    mask = None
    if manifest.mask is not None:
        mvols = read_mpv(os.path.join(base_dir, manifest.mask))
        mask = LabelMap.from_mask(mvols[0].values != 0, spacing=mvols[0].spacing)
    perf = manifest.perfusion_polarity
    perf_channel = perf if perf in volumes else (
        "cbf" if "cbf" in volumes else "ttp"
    )
    return StudyInput(
        volumes=volumes,
        adc_channel="adc",
        perfusion_channel=perf_channel,
        t2_channel="t2",
        perfusion_polarity=perf,
        mask=mask,
    )
