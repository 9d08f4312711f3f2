"""Experiment harness: detection-rate sweeps and timing reports."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..attacks import (TriggerSpec, badnet_poison, finetune, prune_weights,
                       recon_error_detector, retrain_from_scratch,
                       uniform_noise_probes)
from ..data import Dataset, SplitSpec, render_digits, split
from ..models import (ModelHandle, PerceptualMetric, TrainConfig, VaeConfig,
                      train_classifier, train_vae)
from ..fingerprint import (FingerprintPool, PoolBuilder, flip_matrix,
                           grow_pool, select_references)


@dataclass
class ExperimentConfig:
    dataset: str = "digits"
    train_size: int = 6000
    test_size: int = 500
    autoencoder_fraction: float = 0.25
    sigmas: tuple[float, ...] = (0.01,)
    v_range: tuple[int, ...] = (1, 2, 3, 5, 7)
    classes: tuple[int, ...] = ()      # empty = all classes
    attacks: tuple[str, ...] = ("badnet", "prune")
    trials: int = 200
    seed: int = 0
    references_per_class: int = 5
    reference_candidates: int = 60
    pool_size: int = 40
    mint_retries: int = 3
    # screening: grow the pool, then keep only pairs that flip consistently
    # under privately seeded simulated attacks (see fingerprint.screening)
    screen: bool = True
    screen_factor: int = 4
    screen_retrain_flips: int = 3      # of 4 retrained screeners
    screen_need_warm: bool = True      # also require a pruned/tuned flip

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("all sigmas must be positive")


@dataclass
class MetricsTable:
    """Rows of (setting, V, detection mean, detection std, trials)."""

    rows: list = field(default_factory=list)

    HEADER = "setting,V,mean,std,trials"

    def add(self, setting: str, v: int, mean: float, std: float,
            trials: int) -> None:
        if not 0.0 <= mean <= 1.0 or std < 0:
            raise ValueError(f"bad detection stats mean={mean} std={std}")
        self.rows.append((setting, int(v), float(mean), float(std),
                          int(trials)))

    def to_csv(self) -> str:
        lines = [self.HEADER]
        for setting, v, mean, std, trials in sorted(self.rows):
            lines.append(f"{setting},{v},{mean:.4f},{std:.4f},{trials}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps([{"setting": s, "V": v, "mean": m, "std": sd,
                            "trials": t} for s, v, m, sd, t in
                           sorted(self.rows)], indent=1)


def detection_rate(pair_flips: np.ndarray, v: int, trials: int,
                   rng: np.random.Generator) -> tuple[float, float]:
    """Detection = any flip among V pairs drawn without replacement."""
    n = len(pair_flips)
    if v > n:
        raise ValueError(f"V={v} exceeds pool size {n}")
    hits = np.empty(trials)
    for t in range(trials):
        idx = rng.choice(n, size=v, replace=False)
        hits[t] = 1.0 if pair_flips[idx].any() else 0.0
    return float(hits.mean()), float(hits.std())


def pair_flip_mask(pool: FingerprintPool, handle: ModelHandle) -> np.ndarray:
    images = np.stack([p.image for p in pool.pairs])
    expected = np.array([p.expected_label for p in pool.pairs])
    return handle.predict_top1(images) != expected


class ExperimentRunner:
    """Caches the trained artifacts shared by every experiment cell."""

    def __init__(self, config: ExperimentConfig,
                 progress=lambda msg: None):
        self.config = config
        self.progress = progress
        self._artifacts = {}

    # -- shared artifacts (built once) -------------------------------------
    def _data(self):
        if "data" not in self._artifacts:
            cfg = self.config
            if cfg.dataset != "digits":
                raise ValueError(f"unknown dataset {cfg.dataset!r}")
            full = render_digits(cfg.train_size, seed=cfg.seed)
            test = render_digits(cfg.test_size, seed=cfg.seed + 1000)
            ae_set, model_set = split(full, SplitSpec(cfg.autoencoder_fraction,
                                                      seed=cfg.seed))
            self._artifacts["data"] = (ae_set, model_set, test)
            self.progress(f"data ready: {len(ae_set)} autoencoder / "
                          f"{len(model_set)} model / {len(test)} test")
        return self._artifacts["data"]

    def _train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=8, lr=0.05, batch_size=64, seed=seed)

    def classifier(self) -> ModelHandle:
        if "clf" not in self._artifacts:
            _, model_set, test = self._data()
            handle = train_classifier(model_set,
                                      self._train_config(self.config.seed),
                                      test_set=test)
            self._artifacts["clf"] = handle
            self.progress(f"classifier accuracy "
                          f"{handle.metadata['test_accuracy']:.4f}")
        return self._artifacts["clf"]

    def vae(self):
        if "vae" not in self._artifacts:
            ae_set, _, _ = self._data()
            # tc_weight=40 collapses the decoder at this scale; a light TC
            # pressure keeps reconstructions label-preserving
            self._artifacts["vae"] = train_vae(
                ae_set, VaeConfig(tc_weight=1.0, epochs=36,
                                  seed=self.config.seed))
            self.progress("vae trained")
        return self._artifacts["vae"]

    def metric(self) -> PerceptualMetric:
        if "metric" not in self._artifacts:
            ae_set, _, _ = self._data()
            self._artifacts["metric"] = PerceptualMetric(
                ae_set.images.shape[1:], seed=self.config.seed)
        return self._artifacts["metric"]

    def references(self) -> Dataset:
        if "refs" not in self._artifacts:
            cfg = self.config
            _, model_set, _ = self._data()
            self._artifacts["refs"] = select_references(
                self.classifier(), model_set, self.metric(),
                per_class=cfg.references_per_class,
                candidate_pool=cfg.reference_candidates,
                classes=cfg.classes or None, seed=cfg.seed + 7)
        return self._artifacts["refs"]

    def attacked(self, name: str) -> ModelHandle:
        key = f"attack:{name}"
        if key not in self._artifacts:
            _, model_set, test = self._data()
            seed = self.config.seed
            if name == "badnet":
                poisoned = badnet_poison(model_set, TriggerSpec(), rate=0.1,
                                         seed=seed + 3)
                handle = train_classifier(poisoned,
                                          self._train_config(seed + 3),
                                          test_set=test)
            elif name == "prune":
                handle, _ = prune_weights(
                    self.classifier(), 0.15, retrain_set=model_set,
                    test_set=test, retrain_config=self._train_config(seed + 8))
            elif name == "finetune":
                handle, _ = finetune(self.classifier(), model_set, epochs=4,
                                     lr=0.05, test_set=test,
                                     config=self._train_config(seed + 8))
            elif name == "retrain":
                handle, _ = retrain_from_scratch(
                    model_set, self._train_config(seed + 199), test_set=test)
            else:
                raise ValueError(f"unknown attack {name!r}")
            self._artifacts[key] = handle
            self.progress(f"attack variant ready: {name}")
        return self._artifacts[key]

    def screeners(self) -> tuple[list, list]:
        """Privately seeded attacked stand-ins used only for pool screening:
        (from-scratch retrains, warm-start variants)."""
        if "screeners" not in self._artifacts:
            _, model_set, test = self._data()
            base = self.config.seed
            scratch = [retrain_from_scratch(model_set,
                                            self._train_config(base + s),
                                            test_set=test)[0]
                       for s in (7101, 7202, 7303, 7404)]
            warm = [prune_weights(self.classifier(), 0.15,
                                  retrain_set=model_set, test_set=test,
                                  retrain_config=self._train_config(
                                      base + 7505))[0],
                    finetune(self.classifier(), model_set, epochs=4, lr=0.05,
                             test_set=test,
                             config=self._train_config(base + 7606))[0]]
            self._artifacts["screeners"] = (scratch, warm)
            self.progress("screening bank trained")
        return self._artifacts["screeners"]

    def _screen(self, pool: FingerprintPool) -> FingerprintPool:
        cfg = self.config
        scratch, warm = self.screeners()
        keep = (flip_matrix(pool, scratch).sum(axis=0)
                >= cfg.screen_retrain_flips)
        if cfg.screen_need_warm:
            keep &= flip_matrix(pool, warm).any(axis=0)
        kept = [p for p, k in zip(pool.pairs, keep) if k]
        self.progress(f"screening kept {len(kept)}/{len(pool)} pairs")
        return FingerprintPool(kept, model_hash=pool.model_hash)

    def builder(self, sigma: float, seed: int | None = None) -> PoolBuilder:
        cfg = self.config
        return PoolBuilder(self.classifier(), self.vae(), self.references(),
                           metric=self.metric(), sigma=sigma,
                           method="bisect", retries=cfg.mint_retries,
                           seed=cfg.seed if seed is None else seed)

    def pool(self, sigma: float | None = None
             ) -> tuple[FingerprintPool, list]:
        cfg = self.config
        sigma = cfg.sigmas[0] if sigma is None else sigma
        key = f"pool:{sigma}"
        if key not in self._artifacts:
            builder = self.builder(sigma)
            target = cfg.pool_size * (cfg.screen_factor if cfg.screen else 1)
            timings = []
            pairs = []
            order = builder.rng.permutation(len(builder.references))
            pos = 0
            while len(pairs) < target:
                # full rotation per mint: candidate acceptance varies a lot
                # between references, so never get stuck on a bad window
                start = time.time()
                minted = builder._mint_with_retries(np.roll(order, -pos), 1)
                pos += 1
                pairs.extend(minted)
                timings.append(time.time() - start)
            pool = FingerprintPool(pairs)
            if cfg.screen:
                pool = self._screen(pool)
            self._artifacts[key] = (pool, timings)
            self.progress(f"pool sigma={sigma}: {len(pool)} pairs, "
                          f"{np.mean(timings):.2f}s/sample")
        return self._artifacts[key]

    # -- experiment cells --------------------------------------------------
    def sweep(self, table: MetricsTable | None = None) -> MetricsTable:
        """Detection rate per (attack, sigma, V) cell."""
        table = table or MetricsTable()
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        for sigma in cfg.sigmas:
            pool, _ = self.pool(sigma)
            for attack in cfg.attacks:
                flips = pair_flip_mask(pool, self.attacked(attack))
                for v in cfg.v_range:
                    mean, std = detection_rate(flips, v, cfg.trials, rng)
                    setting = (f"{attack}" if len(cfg.sigmas) == 1
                               else f"{attack}/sigma={sigma}")
                    table.add(setting, v, mean, std, cfg.trials)
        return table

    def false_positive(self, table: MetricsTable | None = None,
                       trials: int = 1000) -> MetricsTable:
        """Licensed model against its own pool: must never flag."""
        table = table or MetricsTable()
        pool, _ = self.pool()
        flips = pair_flip_mask(pool, self.classifier())
        rng = np.random.default_rng(self.config.seed)
        for v in self.config.v_range:
            mean, std = detection_rate(flips, v, trials, rng)
            table.add("licensed", v, mean, std, trials)
        return table

    def baseline_random(self, table: MetricsTable | None = None
                        ) -> MetricsTable:
        """Randomly chosen clean samples instead of encysted samples."""
        table = table or MetricsTable()
        cfg = self.config
        _, model_set, _ = self._data()
        rng = np.random.default_rng(cfg.seed)
        pick = rng.choice(len(model_set), size=cfg.pool_size, replace=False)
        images = model_set.images[pick]
        expected = np.asarray(self.classifier().predict_top1(images))
        for attack in cfg.attacks:
            flips = self.attacked(attack).predict_top1(images) != expected
            for v in cfg.v_range:
                mean, std = detection_rate(flips, v, cfg.trials, rng)
                table.add(f"random-baseline/{attack}", v, mean, std,
                          cfg.trials)
        return table

    def leak_and_adapt(self, leak_size: int = 1000, attack: str = "badnet",
                       v: int = 5, table: MetricsTable | None = None
                       ) -> MetricsTable:
        """Adaptive adversary: fine-tune the attacked model on leaked pairs,
        then verify with fresh (never-leaked) fingerprint sets."""
        table = table or MetricsTable()
        cfg = self.config
        sigma = cfg.sigmas[0]
        # separate noise stream so the leak shares nothing with the pool
        # used for the fresh verification sets below
        builder = self.builder(sigma, seed=cfg.seed + 31)
        # long mints hit many low-acceptance references; allow more misses
        builder.retries = max(10, builder.retries)
        leaked = FingerprintPool(builder._mint_with_retries(
            builder.rng.permutation(len(builder.references)), leak_size))
        images = np.stack([p.image for p in leaked.pairs])
        labels = np.array([p.expected_label for p in leaked.pairs],
                          dtype=np.int64)
        _, model_set, test = self._data()
        adapted, _ = finetune(self.attacked(attack),
                              Dataset(images, labels, model_set.num_classes),
                              epochs=4, lr=0.05, test_set=test,
                              config=self._train_config(cfg.seed + 13))
        self.progress(f"adversary adapted on {leak_size} leaked pairs")
        fresh, _ = self.pool(sigma)
        flips = pair_flip_mask(fresh, adapted)
        rng = np.random.default_rng(cfg.seed)
        mean, std = detection_rate(flips, v, cfg.trials, rng)
        table.add(f"leak-adapted/{attack}", v, mean, std, cfg.trials)
        return table

    def recon_error_gap(self, target_tpr: float = 0.8) -> dict:
        """Adaptive adversary screening queries by reconstruction error:
        flag rates for noise probes, clean images, and encysted samples."""
        _, model_set, test = self._data()
        detector = recon_error_detector(self.vae(), model_set,
                                        target_tpr=target_tpr)
        pool, _ = self.pool()
        encysted = np.stack([p.image for p in pool.pairs])
        clean = test.images
        probes = uniform_noise_probes(clean, seed=self.config.seed)
        return {"threshold": detector.threshold,
                "probe_flag_rate": detector.flag_rate(probes),
                "clean_flag_rate": detector.flag_rate(clean),
                "encysted_flag_rate": detector.flag_rate(encysted)}

    def timing_csv(self, sigma: float | None = None) -> str:
        _, timings = self.pool(sigma)
        lines = ["sample,seconds"]
        for i, t in enumerate(timings):
            lines.append(f"{i},{t:.4f}")
        return "\n".join(lines) + "\n"
