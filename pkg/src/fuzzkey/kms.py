"""Key Match Score engine and the weighted fuzzy entropy score.

The FIS has three inputs, ``cpu_usage`` on [0, 100], ``process_count``
on [0, 500] and ``timestamp_drift`` on [0, 10] s, and one output,
``key_match_score`` on [0, 1]. The shipped rule base lives in
``data/default_kms.yaml``; any file with the same schema can replace it
(see :func:`load_config`).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError, ValidationError
from .fuzzy import (
    DEFAULT_GRID_POINTS,
    FuzzyVariable,
    MembershipFunction,
    Rule,
    RuleBase,
    defuzzify_centroid,
    eval_membership,
    infer,
)
from .probe import ConditionVector, drift

CPU = "cpu_usage"
PROCESSES = "process_count"
DRIFT = "timestamp_drift"
OUTPUT = "key_match_score"
INPUT_DOMAINS = {CPU: (0.0, 100.0), PROCESSES: (0.0, 500.0), DRIFT: (0.0, 10.0)}
# plateau of each output term must sit inside its band
OUTPUT_BANDS = {"Low": (0.0, 0.4), "Medium": (0.4, 0.7), "High": (0.7, 1.0)}
DEFAULT_TAU = 0.5


@dataclass(frozen=True)
class EntropyWeights:
    w1: float = 0.4
    w2: float = 0.3
    w3: float = 0.3

    def __post_init__(self):
        ws = (self.w1, self.w2, self.w3)
        if any(not math.isfinite(w) or w < 0 for w in ws):
            raise ConfigError(f"entropy weights must be finite and non-negative: {ws}")
        if sum(ws) <= 0:
            raise ConfigError("entropy weights must not all be zero")


@dataclass(frozen=True)
class KeyMatchScore:
    value: float
    no_rule_fired: bool = False

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValidationError(f"key match score must lie in [0, 1], got {self.value}")

    def passes(self, tau: float) -> bool:
        """An indeterminate score (no rule fired) never passes."""
        return not self.no_rule_fired and self.value >= tau


@dataclass(frozen=True)
class KmsConfig:
    rulebase: RuleBase
    threshold_tau: float = DEFAULT_TAU
    weights: EntropyWeights = field(default_factory=EntropyWeights)
    # Low/Medium/High sets on [0, 10] used by the entropy-score memberships.
    entropy_sets: FuzzyVariable | None = None

    def __post_init__(self):
        if not 0.0 <= self.threshold_tau <= 1.0:
            raise ConfigError(f"threshold tau must lie in [0, 1], got {self.threshold_tau}")
        rb = self.rulebase
        if set(rb.inputs) != set(INPUT_DOMAINS):
            raise ConfigError(f"KMS inputs must be exactly {sorted(INPUT_DOMAINS)}, got {sorted(rb.inputs)}")
        for name, dom in INPUT_DOMAINS.items():
            if rb.inputs[name].domain != dom:
                raise ConfigError(f"{name} domain must be {list(dom)}, got {list(rb.inputs[name].domain)}")
        if rb.output.name != OUTPUT or rb.output.domain != (0.0, 1.0):
            raise ConfigError(f"output must be {OUTPUT} on [0, 1]")
        if set(rb.output.terms) != set(OUTPUT_BANDS):
            raise ConfigError(f"output terms must be {sorted(OUTPUT_BANDS)}")
        for term, (lo, hi) in OUTPUT_BANDS.items():
            mf = rb.output.terms[term]
            if mf.b < lo or mf.c > hi:
                raise ConfigError(f"output term {term} plateau [{mf.b}, {mf.c}] leaves band [{lo}, {hi}]")
        if self.entropy_sets is None:
            object.__setattr__(self, "entropy_sets", DEFAULT_ENTROPY_SETS)
        elif not {"Medium", "High"} <= set(self.entropy_sets.terms):
            raise ConfigError("entropy sets need Medium and High terms")

    def with_tau(self, tau: float) -> KmsConfig:
        return KmsConfig(self.rulebase, tau, self.weights, self.entropy_sets)


DEFAULT_ENTROPY_SETS = FuzzyVariable(
    "entropy_level",
    (0.0, 10.0),
    {
        "Low": MembershipFunction.trapezoid(0, 0, 2, 4),
        "Medium": MembershipFunction.trapezoid(3, 5, 6, 7),
        "High": MembershipFunction.trapezoid(6, 8, 10, 10),
    },
)


# --------------------------------------------------------------------------
# scoring


def compute_kms(config: KmsConfig, current: ConditionVector, t_enc: float) -> KeyMatchScore:
    """Score decryption-time conditions against the encryption timestamp."""
    inputs = {
        CPU: current.cpu_percent,
        PROCESSES: current.process_count,
        DRIFT: drift(t_enc, current.timestamp),
    }
    return score_inputs(config, inputs)


def score_inputs(config: KmsConfig, inputs: Mapping[str, float]) -> KeyMatchScore:
    value, no_rule_fired = defuzzify_centroid(infer(config.rulebase, inputs))
    return KeyMatchScore(value, no_rule_fired)


def entropy_score(mu_phi: float, mu_p: float, mu_t: float, w: EntropyWeights | None = None) -> float:
    """Weighted mean ``(w1*mu_phi + w2*mu_p + w3*mu_t) / (w1 + w2 + w3)``."""
    w = w or EntropyWeights()
    total = w.w1 + w.w2 + w.w3
    if total <= 0:
        raise ConfigError("entropy weights sum to zero")
    for mu in (mu_phi, mu_p, mu_t):
        if not 0.0 <= mu <= 1.0:
            raise ValidationError(f"membership degrees must lie in [0, 1], got {mu}")
    return (w.w1 * mu_phi + w.w2 * mu_p + w.w3 * mu_t) / total


def condition_membership(phi_level: float, sets: FuzzyVariable = DEFAULT_ENTROPY_SETS) -> float:
    """Degree of the High entropy set at an activity level on [0, 10]."""
    return eval_membership(sets.terms["High"], sets.clamp(phi_level))


def password_membership(password: bytes) -> float:
    """Strength heuristic in [0, 1].

    ``min(1, classes/4 * min(1, len/16) + H/8 * 0.5)`` where ``classes``
    counts lower, upper, digit and other bytes present and ``H`` is the
    Shannon entropy of the byte histogram in bits per byte.
    """
    if not password:
        raise ValidationError("password must not be empty")
    classes = set()
    for b in password:
        if 97 <= b <= 122:
            classes.add("lower")
        elif 65 <= b <= 90:
            classes.add("upper")
        elif 48 <= b <= 57:
            classes.add("digit")
        else:
            classes.add("other")
    n = len(password)
    h = -sum(c / n * math.log2(c / n) for c in Counter(password).values())
    return min(1.0, len(classes) / 4 * min(1.0, n / 16) + h / 8 * 0.5)


def timestamp_membership(t: float, sets: FuzzyVariable = DEFAULT_ENTROPY_SETS) -> float:
    """Medium entropy set evaluated at ten times the sub-second fraction of ``t``."""
    if not t > 0:
        raise ValidationError(f"timestamp must be positive, got {t}")
    return eval_membership(sets.terms["Medium"], 10.0 * (t - math.floor(t)))


def encryption_entropy(config: KmsConfig, cv: ConditionVector, password: bytes) -> float:
    """Fuzzy entropy score of an encryption context.

    The activity level fed to the condition membership is cpu_percent / 10.
    """
    sets = config.entropy_sets
    return entropy_score(
        condition_membership(cv.cpu_percent / 10.0, sets),
        password_membership(password),
        timestamp_membership(cv.timestamp, sets),
        config.weights,
    )


# --------------------------------------------------------------------------
# config files


class _UniqueKeyLoader(yaml.SafeLoader):
    pass


def _construct_unique_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} at line {key_node.start_mark.line + 1}")
        seen.add(key)
    return loader.construct_mapping(node, deep=deep)


_UniqueKeyLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_unique_mapping)


def _membership(node: Any, where: str) -> MembershipFunction:
    if not isinstance(node, (list, tuple)) or len(node) not in (3, 4):
        raise ConfigError(f"{where}: expected [a, peak, c] or [a, b, c, d], got {node!r}")
    try:
        params = [float(v) for v in node]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: parameters must be numbers, got {node!r}") from None
    if len(params) == 3:
        return MembershipFunction.triangle(*params)
    return MembershipFunction.trapezoid(*params)


def _variable(name: str, node: Any) -> FuzzyVariable:
    if not isinstance(node, dict) or "domain" not in node or "terms" not in node:
        raise ConfigError(f"variable {name}: needs 'domain' and 'terms'")
    dom = node["domain"]
    if not isinstance(dom, list) or len(dom) != 2:
        raise ConfigError(f"variable {name}: domain must be [lo, hi]")
    terms = node["terms"]
    if not isinstance(terms, dict) or not terms:
        raise ConfigError(f"variable {name}: terms must be a non-empty mapping")
    return FuzzyVariable(
        name,
        (float(dom[0]), float(dom[1])),
        {str(t): _membership(v, f"{name}.{t}") for t, v in terms.items()},
    )


def config_from_dict(doc: Mapping[str, Any]) -> KmsConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config root must be a mapping")
    try:
        inputs = {name: _variable(name, node) for name, node in doc["inputs"].items()}
        ((out_name, out_node),) = doc["output"].items()
        output = _variable(out_name, out_node)
        rules = []
        for i, r in enumerate(doc["rules"]):
            if not isinstance(r, dict) or set(r) != {"if", "then"}:
                raise ConfigError(f"rule {i + 1}: expected keys 'if' and 'then'")
            then = str(r["then"])
            # "key_match_score is High" and plain "High" are both accepted
            parts = then.split()
            if len(parts) == 3 and parts[1].lower() == "is":
                if parts[0] != output.name:
                    raise ConfigError(f"rule {i + 1}: consequent must refer to {output.name}")
                then = parts[2]
            rules.append(Rule.parse(str(r["if"]), then))
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed KMS config: {exc!r}") from None
    rb = RuleBase(inputs, rules, output, int(doc.get("grid_points", DEFAULT_GRID_POINTS)))
    entropy = doc.get("entropy", {}) or {}
    weights = EntropyWeights(*(float(w) for w in entropy.get("weights", (0.4, 0.3, 0.3))))
    sets = None
    if "sets" in entropy:
        sets = _variable("entropy_level", {"domain": [0, 10], "terms": entropy["sets"]})
    return KmsConfig(rb, float(doc.get("threshold", DEFAULT_TAU)), weights, sets)


def config_to_dict(config: KmsConfig) -> dict[str, Any]:
    def var(v: FuzzyVariable) -> dict[str, Any]:
        return {"domain": list(v.domain), "terms": {t: list(mf.params) for t, mf in v.terms.items()}}

    rb = config.rulebase
    w = config.weights
    return {
        "inputs": {name: var(v) for name, v in rb.inputs.items()},
        "output": {rb.output.name: var(rb.output)},
        "rules": [{"if": str(r.antecedent), "then": r.consequent} for r in rb.rules],
        "threshold": config.threshold_tau,
        "grid_points": rb.grid_points,
        "entropy": {"weights": [w.w1, w.w2, w.w3], "sets": var(config.entropy_sets)["terms"]},
    }


def loads_config(text: str) -> KmsConfig:
    try:
        doc = yaml.load(text, Loader=_UniqueKeyLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return config_from_dict(doc)


def dumps_config(config: KmsConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def load_config(path: str | Path | None = None) -> KmsConfig:
    """Load a KMS config file, or the shipped default when ``path`` is None."""
    if path is None:
        text = resources.files("fuzzkey").joinpath("data/default_kms.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return loads_config(text)


_default: KmsConfig | None = None


def default_config() -> KmsConfig:
    global _default
    if _default is None:
        _default = load_config()
    return _default
