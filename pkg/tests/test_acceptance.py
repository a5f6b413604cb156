"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

Full-corpus checks (criterion 9) need the real 28k-clip distribution and are
skipped unless SEP28K_ROOT points at one.
"""

import json
import math
import os
import time

import numpy as np
import pytest
from click.testing import CliRunner

from stutterkit.cli import main as cli_main
from stutterkit.corpus import SPLIT_NAMES, build_split
from stutterkit.curation import CurationConfig, run_pipeline
from stutterkit.encoder import (
    EncoderClassifier,
    FreezeStrategy,
    apply_freeze,
    cross_entropy,
)
from stutterkit.evaluation import confusion, evaluate, f1_scores
from stutterkit.frontend import (
    FrontendConfig,
    cache_path,
    log_mel,
    read_cache,
    write_cache,
)
from stutterkit.training import TrainConfig, train

from _util import (
    GRAD_CHECK_CONFIG,
    TRAIN_CONFIG,
    curation_fixture,
    iid_noise_dataset,
    random_catalog,
    separable_dataset,
)
from test_evaluation import brute_force_f1
from test_frontend import slaney_filterbank_oracle


def report(criterion: str, passed: bool, detail: str):
    marker = "PASS" if passed else "FAIL"
    print(f"[{marker}] {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


def test_criterion_1_parameter_audit():
    runner = CliRunner()
    start = time.perf_counter()
    base = json.loads(
        runner.invoke(cli_main, ["audit-params", "--preset", "base", "--json"]).output
    )
    s1 = json.loads(
        runner.invoke(
            cli_main, ["audit-params", "--preset", "base", "--strategy", "s1", "--json"]
        ).output
    )
    elapsed = time.perf_counter() - start
    base_m = base["trainable"] / 1e6
    s1_m = s1["trainable"] / 1e6
    reduction = 100.0 * (base["trainable"] - s1["trainable"]) / base["trainable"]
    ok = (
        abs(base_m - 20.72) / 20.72 <= 0.01
        and abs(s1_m - 11.27) / 11.27 <= 0.01
        and abs(reduction - 46.0) <= 1.0
        and elapsed < 1.0
    )
    report(
        "criterion 1 (parameter audit)",
        ok,
        f"base {base_m:.2f} M, strategy-1 {s1_m:.2f} M, reduction {reduction:.1f} %, "
        f"{elapsed * 1e3:.0f} ms",
    )


@pytest.mark.parametrize("strategy", [FreezeStrategy.STRATEGY1, FreezeStrategy.STRATEGY2])
def test_criterion_2_frozen_layer_immutability(strategy):
    start = time.perf_counter()
    data = separable_dataset(64, seed=21)
    model = EncoderClassifier(TRAIN_CONFIG, seed=8)
    plan = apply_freeze(model, strategy)
    before = {name: tensor.copy() for name, tensor in model.params.items()}
    cfg = TrainConfig(batch_size=64, learning_rate=1e-3, max_epochs=5,
                      early_stop_patience=99, seed=5)
    train(model, plan, data, data, cfg)  # 1 step per epoch -> exactly 5 steps
    frozen_ok = all(
        model.params[n].tobytes() == before[n].tobytes()
        for n in before
        if model.group_of(n) in plan.frozen_groups
    )
    trainable_ok = all(
        model.params[n].tobytes() != before[n].tobytes()
        for n in before
        if model.group_of(n) not in plan.frozen_groups
    )
    elapsed = time.perf_counter() - start
    report(
        f"criterion 2 (freeze immutability, {strategy.value})",
        frozen_ok and trainable_ok and elapsed < 120.0,
        f"5 steps on 64 clips: frozen bitwise-identical={frozen_ok}, "
        f"all trainable changed={trainable_ok}, {elapsed:.1f} s",
    )


def test_criterion_3_gradient_correctness():
    start = time.perf_counter()
    model = EncoderClassifier(GRAD_CHECK_CONFIG, seed=3)
    rng = np.random.default_rng(42)
    x = rng.standard_normal((4, GRAD_CHECK_CONFIG.n_mels, GRAD_CHECK_CONFIG.n_frames))
    y = rng.integers(0, 6, 4)
    _, grads, _ = model.loss_and_grads(x, y)
    names = list(model.params)
    offsets = np.cumsum([model.params[n].size for n in names])
    worst = 0.0
    for flat_index in rng.choice(int(offsets[-1]), size=50, replace=False):
        slot = int(np.searchsorted(offsets, flat_index, side="right"))
        name = names[slot]
        local = int(flat_index - (offsets[slot] - model.params[name].size))
        tensor = model.params[name].ravel()
        step = 1e-6 * max(1.0, abs(tensor[local]))
        original = tensor[local]
        tensor[local] = original + step
        plus = cross_entropy(model.forward(x), y)[0]
        tensor[local] = original - step
        minus = cross_entropy(model.forward(x), y)[0]
        tensor[local] = original
        numeric = (plus - minus) / (2 * step)
        analytic = grads[name].ravel()[local]
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-10))
    elapsed = time.perf_counter() - start
    report(
        "criterion 3 (gradient correctness)",
        worst < 1e-4 and elapsed < 60.0,
        f"50 coordinates, worst relative error {worst:.2e}, {elapsed:.1f} s",
    )


def test_criterion_4_frontend_contract(tmp_path):
    cfg = FrontendConfig()
    silence = log_mel(np.zeros(48000), cfg, "silence")
    silence_ok = silence.matrix.shape == (80, 3000) and bool(
        (silence.matrix == np.float32(-1.5)).all()
    )

    t = np.arange(48000) / cfg.sample_rate
    features = log_mel(np.sin(2 * np.pi * 1000.0 * t), cfg, "tone")
    oracle = slaney_filterbank_oracle(cfg)
    expected = int(np.argmax(oracle[:, round(1000.0 * cfg.fft_window / cfg.sample_rate)]))
    first = math.ceil((cfg.fft_window // 2) / cfg.hop)
    last = (48000 - cfg.fft_window // 2) // cfg.hop
    argmaxes = set(np.argmax(features.matrix[:, first:last], axis=0).tolist())
    tone_ok = argmaxes == {expected}

    path = cache_path(tmp_path, "tone", cfg)
    write_cache(path, features)
    payload = path.read_bytes()
    loaded = read_cache(path, "tone")
    write_cache(path, loaded)
    cache_ok = (
        loaded.matrix.tobytes() == features.matrix.tobytes()
        and path.read_bytes() == payload
    )
    report(
        "criterion 4 (frontend contract)",
        silence_ok and tone_ok and cache_ok,
        f"silence all -1.5={silence_ok}, tone argmax bin {argmaxes} == {expected}, "
        f"cache round-trip byte-identical={cache_ok}",
    )


def test_criterion_5_f1_oracle_equivalence():
    rng = np.random.default_rng(123)
    exact = True
    identity_worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 501))
        pairs = list(zip(rng.integers(0, 6, n).tolist(), rng.integers(0, 6, n).tolist()))
        rep = f1_scores(confusion(pairs))
        for cls, (precision, recall, f1, support) in enumerate(brute_force_f1(pairs)):
            exact &= (
                rep.precision[cls] == precision
                and rep.recall[cls] == recall
                and rep.f1[cls] == f1
                and rep.support[cls] == support
            )
        support = np.array(rep.support, dtype=np.float64)
        identity_worst = max(
            identity_worst,
            abs(rep.weighted_f1 - float((support * np.array(rep.f1)).sum() / support.sum())),
        )
    report(
        "criterion 5 (F1 oracle equivalence)",
        exact and identity_worst <= 1e-12,
        f"1000 random lists exact={exact}, weighted identity worst {identity_worst:.1e}",
    )


def test_criterion_6_curation_fixture_and_ce_sanity():
    clips, annotations = curation_fixture()
    cfg = CurationConfig(required_agreement=3, rare_label_fraction=0.25, min_duration_s=3.0)
    curated, rep = run_pipeline(clips, annotations, cfg)
    survivors_ok = len(curated) == 3 and rep.counts_after_each_stage == {
        "input": 10, "agreement": 5, "rare_label": 4, "duration": 3,
    }
    reconcile_ok = rep.reconcile()
    ce, _ = cross_entropy(np.zeros((7, 6)), np.arange(7) % 6)
    ce_ok = abs(ce - math.log(6.0)) <= 1e-6
    report(
        "criterion 6 (curation fixture + CE sanity)",
        survivors_ok and reconcile_ok and ce_ok,
        f"10-clip fixture -> {len(curated)} survivors, counts reconcile={reconcile_ok}, "
        f"CE(uniform)={ce:.6f} vs ln6={math.log(6.0):.6f}",
    )


def test_criterion_7_overfit_and_chance_level():
    results = {}
    data = separable_dataset(32, seed=5)
    for strategy in (FreezeStrategy.BASE, FreezeStrategy.STRATEGY1, FreezeStrategy.STRATEGY2):
        model = EncoderClassifier(TRAIN_CONFIG, seed=11)
        plan = apply_freeze(model, strategy)
        cfg = TrainConfig(batch_size=32, learning_rate=1e-2, max_epochs=200,
                          early_stop_patience=200, seed=2)
        run = train(model, plan, data, data, cfg)
        hit = next((r.epoch for r in run.epochs if r.val_weighted_f1 == 1.0), None)
        results[strategy.value] = (evaluate(model, data).weighted_f1, hit)
    overfit_ok = all(f1 == 1.0 and hit is not None for f1, hit in results.values())

    class UniformPredictor:
        def __init__(self, seed):
            self.rng = np.random.default_rng(seed)

        def predict(self, features, batch_size=32):
            return self.rng.integers(0, 6, features.shape[0])

    chance = evaluate(UniformPredictor(99), iid_noise_dataset(6000, seed=31), batch_size=1024)
    chance_ok = abs(chance.weighted_f1 - 1 / 6) <= 0.02
    per_strategy = {name: (f1, f"epoch {hit}") for name, (f1, hit) in results.items()}
    report(
        "criterion 7 (overfit sanity + chance level)",
        overfit_ok and chance_ok,
        f"train F1 per strategy {per_strategy}, "
        f"uniform predictor wF1 {chance.weighted_f1:.4f} vs 1/6",
    )


def test_criterion_8_split_properties():
    rng = np.random.default_rng(2025)
    checked = 0
    for _ in range(200):
        catalog = random_catalog(rng)
        external = random_catalog(rng, min_shows=1, max_shows=3, prefix="x")
        catalog_ids = {r.clip_id for r in catalog}
        shows = lambda ids: {r.show_id for r in catalog if r.clip_id in ids}
        for name in SPLIT_NAMES:
            split = build_split(name, catalog, external_catalog=external)
            assert not split.train & split.validation
            assert not split.train & split.test
            assert not split.validation & split.test
            if name in ("SEP-28k-E", "SEP-28k-T", "SEP-28k-D"):
                assert not shows(split.train) & shows(split.validation)
                assert not shows(split.train) & shows(split.test)
                assert not shows(split.validation) & shows(split.test)
            else:
                assert split.test == {r.clip_id for r in external}
                assert not split.test & catalog_ids
            checked += 1
    report(
        "criterion 8 (split properties)",
        checked == 1000,
        f"{checked // 5} random catalogs x 5 splits: disjoint, speaker-exclusive, "
        "merged test == external",
    )


SEP28K_ROOT = os.environ.get("SEP28K_ROOT")


@pytest.mark.skipif(
    SEP28K_ROOT is None,
    reason="corpus-gated: set SEP28K_ROOT to a real 28k-clip distribution",
)
def test_criterion_9_full_corpus_counts():
    from stutterkit.corpus import load_catalog

    root = os.environ["SEP28K_ROOT"]
    catalog = load_catalog(
        os.path.join(root, "SEP-28k_labels.csv"), os.path.join(root, "wavs")
    )
    cfg = CurationConfig()
    _, semi = run_pipeline(catalog.clips, catalog.annotations, cfg, mode="semi-clean")
    semi_count = semi.counts_after_each_stage["duration"]
    semi_ok = semi_count == 12585
    _, clean = run_pipeline(catalog.clips, catalog.annotations, cfg, mode="clean")
    clean_count = clean.counts_after_each_stage["exclusions"]
    clean_ok = 12139 <= clean_count <= 12585
    gap_flagged = any("exclusion manifest" in w for w in clean.warnings)
    report(
        "criterion 9 (corpus-gated counts)",
        semi_ok and clean_ok and gap_flagged,
        f"semi-clean {semi_count} (target 12585), clean-without-exclusions "
        f"{clean_count} in [12139, 12585], manual-exclusion gap flagged={gap_flagged}",
    )
