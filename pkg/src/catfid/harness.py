"""Run configuration, sample ingestion, reporting, and manifests.

One JSONL schema carries samples for every instantiation; one JSON config
document drives evaluation runs; every report embeds a manifest that
makes reruns comparable (equal manifests minus timestamp imply
byte-identical reports).
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone

from . import __version__
from .core import (
    DeltaReport,
    DistinguisherFamily,
    Sample,
    SampleSet,
    ScoringFunction,
    bootstrap_delta_ci,
    delta as core_delta,
    estimate_resolution,
    verdict as core_verdict,
)
from .distinguishers import (
    ClassifierSpec,
    CompressionSpec,
    FeatureExtractor,
    ThresholdFamilySpec,
    advantage_to_delta,
    make_compression_distinguisher,
    make_exact_match,
    make_threshold_family,
    train_classifier_distinguisher,
)
from .errors import ConfigError, DataError, InvalidReport

SEED_ENV_VAR = "CATFID_SEED"


# --- sample JSONL ----------------------------------------------------------


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name}")


def sample_from_dict(doc: dict, line: int | None = None) -> Sample:
    if not isinstance(doc, dict):
        raise DataError("sample record must be an object", line)
    unknown = set(doc) - {"id", "codec", "payload", "features", "label"}
    if unknown:
        raise DataError(f"unknown sample keys {sorted(unknown)}", line)
    try:
        sid, codec, payload = doc["id"], doc["codec"], doc["payload"]
    except KeyError as e:
        raise DataError(f"missing sample key {e}", line) from None
    if not isinstance(sid, str):
        raise DataError("id must be a string", line)

    if codec == "utf8-text":
        if not isinstance(payload, str):
            raise DataError("utf8-text payload must be a string", line)
    elif codec == "opaque-bytes":
        if not isinstance(payload, str):
            raise DataError("opaque-bytes payload must be base64 text", line)
        try:
            payload = base64.b64decode(payload, validate=True)
        except (binascii.Error, ValueError):
            raise DataError("bad base64 payload", line) from None
    elif codec == "symbol-sequence":
        if not isinstance(payload, list) or any(
            not isinstance(s, int) or isinstance(s, bool) for s in payload
        ):
            raise DataError("symbol-sequence payload must be an integer array", line)
        payload = tuple(payload)
    elif codec == "scalar":
        if not isinstance(payload, (int, float)) or isinstance(payload, bool):
            raise DataError("scalar payload must be a number", line)
        if not math.isfinite(payload):
            raise DataError("scalar payload must be finite", line)
        payload = float(payload)
    else:
        raise DataError(f"unknown codec {codec!r}", line)

    features = doc.get("features", {})
    if not isinstance(features, dict):
        raise DataError("features must be an object", line)
    clean = {}
    for name, value in features.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise DataError(f"feature {name!r} must be a number", line)
        if not math.isfinite(value):
            raise DataError(f"feature {name!r} is not finite", line)
        clean[name] = float(value)

    label = doc.get("label")
    if label is not None and not isinstance(label, str):
        raise DataError("label must be a string", line)
    return Sample(id=sid, payload=payload, codec=codec, features=clean, label=label)


def sample_to_dict(x: Sample) -> dict:
    if x.codec == "opaque-bytes":
        payload = base64.b64encode(bytes(x.payload)).decode("ascii")
    elif x.codec == "symbol-sequence":
        payload = list(x.payload)
    else:
        payload = x.payload
    doc = {"id": x.id, "codec": x.codec, "payload": payload, "features": dict(x.features)}
    if x.label is not None:
        doc["label"] = x.label
    return doc


def load_sample_set(path, role: str = "original") -> SampleSet:
    items = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw, parse_constant=_reject_constant)
            except ValueError as e:
                raise DataError(f"bad JSON ({e})", lineno) from None
            sample = sample_from_dict(doc, lineno)
            if sample.id in seen:
                raise DataError(f"duplicate id {sample.id!r}", lineno)
            seen.add(sample.id)
            items.append(sample)
    if not items:
        raise DataError("file contains no samples")
    return SampleSet(items, role=role)


def save_sample_set(s: SampleSet, path):
    with open(path, "w", encoding="utf-8") as f:
        for x in s:
            f.write(json.dumps(sample_to_dict(x), sort_keys=True) + "\n")


# --- configuration ---------------------------------------------------------

_TOP_KEYS = {"family", "sigma", "epsilon", "seed", "resolution", "bootstrap", "suite", "output"}


@dataclass
class EvalConfig:
    raw: dict
    family_specs: list[dict]
    sigma: ScoringFunction
    epsilon: float
    seed: int
    n_splits: int | None
    n_boot: int | None
    boot_level: float
    suite_options: dict
    output: dict

    @classmethod
    def from_dict(cls, doc: dict, default_seed: int | None = None) -> "EvalConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "family" not in doc:
            raise ConfigError("config needs a family")
        specs = doc["family"]
        if isinstance(specs, dict):
            specs = [specs]
        if not isinstance(specs, list) or not specs:
            raise ConfigError("family must be an object or nonempty list")
        for spec in specs:
            _validate_family_spec(spec)
        if any(s["kind"] == "classifier" for s in specs) and len(specs) > 1:
            raise ConfigError("a classifier family cannot be combined with others")

        sigma_doc = doc.get("sigma", {"name": "mean"})
        unknown = set(sigma_doc) - {"name", "q"}
        if unknown:
            raise ConfigError(f"unknown sigma keys {sorted(unknown)}")
        try:
            sigma = ScoringFunction.from_dict(sigma_doc)
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad sigma: {e}") from None

        epsilon = doc.get("epsilon", 0.5)
        if not isinstance(epsilon, (int, float)) or not 0.0 <= epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0,1]")

        seed = doc.get("seed", default_seed)
        if seed is None:
            env = os.environ.get(SEED_ENV_VAR)
            seed = int(env) if env else 0
        if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

        res = doc.get("resolution", {"n_splits": 50})
        n_splits = None
        if res is not None:
            unknown = set(res) - {"n_splits"}
            if unknown:
                raise ConfigError(f"unknown resolution keys {sorted(unknown)}")
            n_splits = res.get("n_splits", 50)
            if not isinstance(n_splits, int) or n_splits < 1:
                raise ConfigError("n_splits must be a positive integer")

        boot = doc.get("bootstrap")
        n_boot = None
        boot_level = 0.95
        if boot is not None:
            unknown = set(boot) - {"n_boot", "level"}
            if unknown:
                raise ConfigError(f"unknown bootstrap keys {sorted(unknown)}")
            n_boot = boot.get("n_boot", 1000)
            boot_level = boot.get("level", 0.95)
            if not isinstance(n_boot, int) or n_boot < 100:
                raise ConfigError("n_boot must be an integer >= 100")
            if not 0.0 < boot_level < 1.0:
                raise ConfigError("bootstrap level must lie in (0,1)")

        suite_options = doc.get("suite", {})
        unknown = set(suite_options) - {"k_shot", "m_gen", "m_ref", "noise"}
        if unknown:
            raise ConfigError(f"unknown suite keys {sorted(unknown)}")

        output = doc.get("output", {})
        unknown = set(output) - {"json", "markdown"}
        if unknown:
            raise ConfigError(f"unknown output keys {sorted(unknown)}")

        return cls(
            raw=doc,
            family_specs=specs,
            sigma=sigma,
            epsilon=float(epsilon),
            seed=seed,
            n_splits=n_splits,
            n_boot=n_boot,
            boot_level=boot_level,
            suite_options=dict(suite_options),
            output=dict(output),
        )

    @property
    def is_classifier(self) -> bool:
        return self.family_specs[0]["kind"] == "classifier"

    def family_builder(self):
        """(S, S_hat) -> DistinguisherFamily for non-classifier configs."""
        specs = self.family_specs

        def build(s: SampleSet, s_hat: SampleSet) -> DistinguisherFamily:
            families = [_build_family(spec, s, s_hat) for spec in specs]
            if len(families) == 1:
                return families[0]
            members = [m for fam in families for m in fam]
            merged = DistinguisherFamily(
                key="union[" + "+".join(f.key for f in families) + "]",
                members=members,
                lower_bound=any(f.lower_bound for f in families),
                data_dependent=any(f.data_dependent for f in families),
            )
            return merged

        return build

    def classifier_spec(self) -> ClassifierSpec:
        spec = self.family_specs[0]
        return ClassifierSpec(
            split_fraction=spec.get("split_fraction", 0.5),
            seed=spec.get("seed", self.seed),
            learning_rate=spec.get("learning_rate", 0.5),
            iterations=spec.get("iterations", 400),
        )


_FAMILY_KINDS = {"threshold", "compression", "classifier", "exact-match"}


def _validate_family_spec(spec: dict):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("family spec must be an object with a kind")
    kind = spec["kind"]
    if kind not in _FAMILY_KINDS:
        raise ConfigError(f"unknown family kind {kind!r}")
    allowed = {
        "threshold": {"kind", "feature", "thresholds", "polarity"},
        "compression": {"kind"},
        "classifier": {"kind", "split_fraction", "seed", "learning_rate", "iterations"},
        "exact-match": {"kind", "target"},
    }[kind]
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown {kind} family keys {sorted(unknown)}")
    if kind == "threshold" and "feature" not in spec:
        raise ConfigError("threshold family needs a feature")
    if kind == "exact-match" and "target" not in spec:
        raise ConfigError("exact-match family needs a target sample")


def _build_family(spec: dict, s: SampleSet, s_hat: SampleSet) -> DistinguisherFamily:
    kind = spec["kind"]
    if kind == "threshold":
        try:
            feature = FeatureExtractor.from_dict(spec["feature"])
            thresholds = spec.get("thresholds", "midpoints")
            if isinstance(thresholds, list):
                thresholds = tuple(thresholds)
            tf_spec = ThresholdFamilySpec(
                feature=feature,
                thresholds=thresholds,
                polarity=spec.get("polarity", "geq"),
            )
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad threshold family: {e}") from None
        return make_threshold_family(tf_spec, s, s_hat)
    if kind == "compression":
        return DistinguisherFamily(
            key="compression", members=[make_compression_distinguisher(CompressionSpec())]
        )
    if kind == "exact-match":
        target = sample_from_dict(spec["target"])
        return DistinguisherFamily(key="exact-match", members=[make_exact_match(target)])
    raise ConfigError(f"family kind {kind!r} cannot be built as a plain family")


def config_from_file(path, default_seed: int | None = None) -> EvalConfig:
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except ValueError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
    return EvalConfig.from_dict(doc, default_seed=default_seed)


# --- manifests and reports -------------------------------------------------


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(config: EvalConfig, input_paths: dict) -> dict:
    digest = hashlib.sha256(
        json.dumps(config.raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return {
        "config_digest": digest,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "seeds": {"root": config.seed},
        "input_digests": {name: _sha256_file(p) for name, p in sorted(input_paths.items())},
    }


def run_eval(
    config: EvalConfig,
    original_path,
    generated_path,
) -> dict:
    """Full pipeline: ingest, gap, verdict, resolution, bootstrap, manifest."""
    s = load_sample_set(original_path, role="original")
    s_hat = load_sample_set(generated_path, role="generated")

    if config.is_classifier:
        cspec = config.classifier_spec()

        def delta_fn(a: SampleSet, b: SampleSet) -> float:
            _, advantage = train_classifier_distinguisher(a, b, cspec)
            return advantage_to_delta(advantage)

        member, advantage = train_classifier_distinguisher(s, s_hat, cspec)
        value = advantage_to_delta(advantage)
        report = DeltaReport(
            delta=value,
            argmax_key=member.key,
            per_member_gaps={member.key: value},
            sizes=(len(s), len(s_hat)),
            sigma=config.sigma,
            family_key="classifier",
            lower_bound=False,
            data_dependent=True,
        )
        family = None
    else:
        family = config.family_builder()
        delta_fn = None
        report = core_delta(s, s_hat, family, config.sigma)

    resolution = None
    if config.n_splits is not None and len(s) >= 2:
        resolution = estimate_resolution(
            s, family, config.sigma, config.n_splits, config.seed, delta_fn=delta_fn
        )

    bootstrap = None
    if config.n_boot is not None:
        lo, hi = bootstrap_delta_ci(
            s,
            s_hat,
            family,
            config.sigma,
            config.n_boot,
            config.boot_level,
            config.seed,
            delta_fn=delta_fn,
        )
        bootstrap = {
            "lo": lo,
            "hi": hi,
            "n_boot": config.n_boot,
            "level": config.boot_level,
            "seed": config.seed,
        }

    v = core_verdict(report, config.epsilon, resolution)
    return {
        "manifest": build_manifest(
            config, {"original": original_path, "generated": generated_path}
        ),
        "delta_report": report.to_dict(),
        "verdict": v.to_dict(),
        "resolution": resolution.to_dict() if resolution else None,
        "bootstrap": bootstrap,
    }


def render_suite_markdown(result: dict) -> str:
    """Markdown summary of a holdout evaluation result document."""
    lines = [
        "# Holdout evaluation",
        "",
        f"- generator: `{result['generator_key']}`",
        f"- epsilon: `{result['epsilon']!r}`",
        f"- mean delta over holdout categories: `{result['delta_mean']!r}`",
        f"- max delta: `{result['delta_max']!r}`",
        f"- overall: **{'pass' if result['all_pass'] else 'fail'}**",
        "",
        "| category | delta | verdict | argmax distinguisher |",
        "|---|---|---|---|",
    ]
    for row in result["rows"]:
        verdict = "pass" if row["verdict"]["pass"] else "fail"
        lines.append(
            f"| {row['label']} | {row['delta']!r} | {verdict} | `{row['argmax_key']}` |"
        )
    return "\n".join(lines) + "\n"


def render_report(report: dict, fmt: str) -> str:
    """Serialize a report; markdown spells out the caveat when the family
    cannot resolve the requested tolerance."""
    if not isinstance(report, dict) or not report.get("manifest"):
        raise InvalidReport("report has no manifest")
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")

    dr = report["delta_report"]
    v = report["verdict"]
    res = report.get("resolution")
    boot = report.get("bootstrap")
    lines = [
        "# Evaluation report",
        "",
        f"- delta: `{dr['delta']!r}`",
        f"- argmax distinguisher: `{dr['argmax_key']}`",
        f"- family: `{dr['family_key']}` (sizes {dr['sizes'][0]} vs {dr['sizes'][1]})",
        f"- epsilon: `{v['epsilon']!r}`",
        f"- verdict: **{'pass' if v['pass'] else 'fail'}**",
    ]
    if dr.get("lower_bound"):
        lines.append("- note: family is a finite grid; delta is a lower bound on the true sup")
    if dr.get("data_dependent"):
        lines.append("- note: family was constructed from the evaluated sets")
    if res is not None:
        lines.append(f"- epsilon_f (mean over {res['n_splits']} splits): `{res['epsilon_f_mean']!r}`")
    if v.get("resolution_caveat"):
        lines.append(
            "- **caveat**: the family's resolution floor meets or exceeds epsilon; "
            "an instrument cannot certify gaps finer than its own precision"
        )
    if boot is not None:
        lines.append(
            f"- bootstrap {boot['level']:.0%} interval: [`{boot['lo']!r}`, `{boot['hi']!r}`] "
            f"({boot['n_boot']} resamples)"
        )
    lines += ["", "## Per-member gaps", "", "| distinguisher | gap |", "|---|---|"]
    gaps = sorted(dr["per_member_gaps"].items(), key=lambda kv: (-kv[1], kv[0]))
    for key, gap in gaps:
        lines.append(f"| `{key}` | {gap!r} |")
    lines += [
        "",
        "## Manifest",
        "",
        f"- config digest: `{report['manifest']['config_digest']}`",
        f"- tool version: `{report['manifest']['tool_version']}`",
        f"- timestamp: `{report['manifest']['timestamp']}`",
        f"- seeds: `{report['manifest']['seeds']}`",
    ]
    return "\n".join(lines) + "\n"
