import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzkey.errors import ConfigError, ValidationError
from fuzzkey.kms import (
    CPU,
    DRIFT,
    PROCESSES,
    EntropyWeights,
    KeyMatchScore,
    compute_kms,
    condition_membership,
    config_from_dict,
    config_to_dict,
    entropy_score,
    load_config,
    loads_config,
    password_membership,
    score_inputs,
    timestamp_membership,
)
from fuzzkey.probe import ConditionVector

# (cpu, processes, drift, reference KMS, access granted)
CASES = [
    (25, 65, 1.1, 0.82, True),
    (60, 230, 2.8, 0.64, True),
    (85, 410, 7.9, 0.28, False),
    (45, 150, 1.9, 0.73, True),
    (70, 300, 4.2, 0.45, False),
]


@pytest.mark.parametrize("cpu,procs,d,ref,granted", CASES)
def test_reference_cases(config, cpu, procs, d, ref, granted):
    kms = compute_kms(config, ConditionVector(cpu, procs, 1000.0 + d), 1000.0)
    assert kms.passes(config.threshold_tau) is granted
    assert abs(kms.value - ref) <= 0.15


def test_idle_host_no_drift_scores_high(config):
    assert compute_kms(config, ConditionVector(0, 0, 5.0), 5.0).value >= 0.7


def test_default_rule_base_keeps_the_or_rule(config):
    assert "cpu_usage is High or timestamp_drift is Large" in [str(r.antecedent) for r in config.rulebase.rules]


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 100), st.integers(0, 600))
def test_kms_non_increasing_in_drift(config, cpu, procs):
    drifts = np.round(np.arange(0, 10.0001, 0.1), 10)
    values = [score_inputs(config, {CPU: cpu, PROCESSES: procs, DRIFT: d}).value for d in drifts]
    assert np.all(np.diff(values) <= 1e-12)


def test_every_term_combination_fires(config):
    rb = config.rulebase
    names = (CPU, PROCESSES, DRIFT)
    # crisp point at the centre of each term's plateau
    centres = {n: {t: (mf.b + mf.c) / 2 for t, mf in rb.inputs[n].terms.items()} for n in names}
    for terms in itertools.product(*(centres[n] for n in names)):
        inputs = {n: centres[n][t] for n, t in zip(names, terms)}
        assert rb.firing_strengths(inputs).max() > 0, terms


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 100), st.floats(0, 500), st.floats(0, 10))
def test_no_input_leaves_rules_silent(config, cpu, procs, d):
    assert not score_inputs(config, {CPU: cpu, PROCESSES: procs, DRIFT: d}).no_rule_fired


def test_indeterminate_score_never_passes():
    assert not KeyMatchScore(0.5, no_rule_fired=True).passes(0.0)
    assert KeyMatchScore(0.5).passes(0.5)
    with pytest.raises(ValidationError):
        KeyMatchScore(1.5)


# --- entropy score ------------------------------------------------------------

def test_entropy_score_examples():
    assert entropy_score(0.7, 0.85, 0.65, EntropyWeights(0.4, 0.3, 0.3)) == pytest.approx(0.73, abs=1e-9)
    assert entropy_score(1, 1, 1, EntropyWeights(5, 1, 2)) == pytest.approx(1.0)
    assert entropy_score(0.2, 0.4, 0.9, EntropyWeights(1, 1, 1)) == pytest.approx(0.5)


unit = st.floats(0, 1)
weight = st.floats(0.01, 100)


@given(unit, unit, unit, weight, weight, weight, st.floats(0.01, 1000))
def test_entropy_score_scale_invariant_and_bounded(a, b, c, w1, w2, w3, k):
    w = EntropyWeights(w1, w2, w3)
    fe = entropy_score(a, b, c, w)
    assert fe == pytest.approx(entropy_score(a, b, c, EntropyWeights(k * w1, k * w2, k * w3)), rel=1e-9, abs=1e-12)
    assert min(a, b, c) - 1e-12 <= fe <= max(a, b, c) + 1e-12


def test_entropy_score_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        EntropyWeights(0, 0, 0)
    with pytest.raises(ConfigError):
        EntropyWeights(-1, 1, 1)
    with pytest.raises(ValidationError):
        entropy_score(1.2, 0, 0)


@pytest.mark.parametrize("level,expected", [(6.8, 0.4), (10, 1.0), (0, 0.0), (12, 1.0)])
def test_condition_membership(level, expected):
    assert condition_membership(level) == pytest.approx(expected, abs=1e-12)


def test_password_membership():
    assert password_membership(b"aaaa") < 0.3
    assert password_membership(b"Tr0ub4dor&3-Horse!") >= 0.8
    assert password_membership(b"secretMessage") == password_membership(b"secretMessage")
    with pytest.raises(ValidationError):
        password_membership(b"")


@given(st.binary(min_size=1, max_size=64))
def test_password_membership_bounded(pw):
    assert 0.0 <= password_membership(pw) <= 1.0


def test_timestamp_membership():
    assert timestamp_membership(1000.55) == pytest.approx(1.0)
    assert timestamp_membership(1000.0) == 0.0
    assert timestamp_membership(168243.229) == timestamp_membership(168243.229)
    with pytest.raises(ValidationError):
        timestamp_membership(0.0)


# --- configuration ------------------------------------------------------------

def _doc(config):
    return config_to_dict(config)


def test_shipped_config_loads(config):
    assert config.threshold_tau == 0.5
    assert config.rulebase.grid_points == 1001
    assert len(config.rulebase.rules) == 28


def test_config_with_triangle_and_long_consequent(config):
    doc = _doc(config)
    doc["output"]["key_match_score"]["terms"]["Medium"] = [0.4, 0.55, 0.7]
    doc["rules"][0]["then"] = "key_match_score is Low"
    cfg = config_from_dict(doc)
    assert cfg.rulebase.output.terms["Medium"].kind == "triangle"


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["inputs"]["cpu_usage"].update(domain=[0, 50]),
        lambda d: d["inputs"].pop("process_count"),
        lambda d: d["output"]["key_match_score"]["terms"].update(High=[0, 0.1, 0.2, 0.3]),
        lambda d: d["rules"].append({"if": "cpu_usage is Huge", "then": "Low"}),
        lambda d: d["rules"].append({"if": "cpu_usage is Low", "then": "other is Low"}),
        lambda d: d.update(threshold=2),
        lambda d: d["entropy"].update(weights=[0, 0, 0]),
        lambda d: d["inputs"]["cpu_usage"]["terms"].update(Low=[0, 1]),
        lambda d: d.update(rules=[]),
    ],
)
def test_invalid_configs_rejected(config, mutate):
    doc = _doc(config)
    mutate(doc)
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_duplicate_yaml_keys_rejected():
    with pytest.raises(ConfigError):
        loads_config("threshold: 0.5\nthreshold: 0.6\n")
    with pytest.raises(ConfigError):
        loads_config("inputs: [unclosed")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
