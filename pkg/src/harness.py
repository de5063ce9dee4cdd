"""
harness.py - Entraînement à petite échelle et preuve du mécanisme temporel

Ce module fournit :
- gen_toy_dataset : tâches synthétiques temporal-order et static-pattern
- train / evaluate / overfit_batch : boucle AdamW + cosinus, évaluation
- mechanism_proof : micro-VAST avec et sans shift temporel
- run_ablation / shift_fraction_sweep : variantes R1..R6 et fraction décalée

La tâche temporal-order génère ses échantillons par paires : une vidéo
« motif A puis motif B » (classe 0) et sa copie aux frames inversées
(classe 1). Les deux membres d'une paire restent dans la même partition ;
un modèle invariant par permutation des frames prédit la même classe pour
les deux et obtient donc exactement 50 %.
"""

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import List, Optional

import numpy as np

from src.errors import ConfigError, DimensionError, NumericError
from src.models import build_model
from src.ops import cross_entropy
from src.optim import AdamW, cosine_lr, scale_lr
from src.specs import RECIPES, BlockVariant, ModelSpec, ShiftAxis, TaskKind, ToyTask, TrainConfig
from src.tensor import Tape, backward

logger = logging.getLogger(__name__)

VAL_FRACTION = Fraction(1, 5)
EVAL_BATCH = 64


@dataclass
class ToyDataset:
    """Vidéos [N, T, H, W, 3] float32 et labels int64, déjà séparées 80/20."""
    task: ToyTask
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    def split(self, name):
        if name == 'train':
            return self.x_train, self.y_train
        if name == 'val':
            return self.x_val, self.y_val
        raise ValueError(f"Partition inconnue : {name!r}")


def _stripes(rng, height, width, orientation, phase=None):
    """Rayures binaires (0/1) de période aléatoire ; orientation 0..3."""
    period = int(rng.integers(3, 7))
    phase = rng.uniform(0, period) if phase is None else phase
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing='ij')
    coord = (yy, xx, yy + xx, yy - xx)[orientation]
    return (np.sin(2 * np.pi * (coord + phase) / period) > 0).astype(np.float32)


def _colored(rng, pattern):
    color = rng.uniform(0.2, 1.0, 3).astype(np.float32)
    return pattern[..., None] * color


def _temporal_pair(rng, task):
    half = task.frames // 2
    a = _colored(rng, _stripes(rng, task.height, task.width, 0))
    b = _colored(rng, _stripes(rng, task.height, task.width, 1))
    video = np.concatenate([np.repeat(a[None], half, axis=0), np.repeat(b[None], half, axis=0)])
    video = video + rng.normal(0.0, task.noise, video.shape).astype(np.float32)
    return video, video[::-1].copy()


def _static_sample(rng, task, label):
    color = rng.uniform(0.2, 1.0, 3).astype(np.float32)
    start = rng.uniform(0, 6)
    frames = [_stripes(rng, task.height, task.width, label, phase=start + t)[..., None] * color
              for t in range(task.frames)]
    video = np.stack(frames)
    return video + rng.normal(0.0, task.noise, video.shape).astype(np.float32)


def gen_toy_dataset(task):
    """
    Jeu de données déterministe à partir de task.seed.

    Les classes sont équilibrées (à une unité près) et la séparation
    entraînement / validation est 80/20.
    """
    rng = np.random.default_rng(task.seed)
    n_val = int(task.samples * VAL_FRACTION)
    if task.kind is TaskKind.TEMPORAL_ORDER:
        pairs = task.samples // 2
        videos = np.empty((pairs, 2, task.frames, task.height, task.width, 3), dtype=np.float32)
        for i in range(pairs):
            videos[i, 0], videos[i, 1] = _temporal_pair(rng, task)
        order = rng.permutation(pairs)
        val_pairs = n_val // 2
        val_idx, train_idx = order[:val_pairs], order[val_pairs:]
        labels = np.array([0, 1], dtype=np.int64)

        def gather(idx):
            x = videos[np.sort(idx)].reshape((-1,) + videos.shape[2:])
            return x, np.tile(labels, len(idx))

        x_train, y_train = gather(train_idx)
        x_val, y_val = gather(val_idx)
    else:
        labels = np.arange(task.samples, dtype=np.int64) % task.num_classes
        labels = labels[rng.permutation(task.samples)]
        x = np.stack([_static_sample(rng, task, int(c)) for c in labels]).astype(np.float32)
        x_train, y_train = x[n_val:], labels[n_val:]
        x_val, y_val = x[:n_val], labels[:n_val]
    logger.info("Jeu %s : %d entraînement / %d validation", task.kind.value, len(y_train), len(y_val))
    return ToyDataset(task, x_train, y_train, x_val, y_val)


@dataclass
class EpochRecord:
    epoch: int
    split: str
    loss: float
    acc: float


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)

    def last(self, split):
        rows = [r for r in self.records if r.split == split]
        return rows[-1] if rows else None

    def write_csv(self, path):
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['epoch', 'split', 'loss', 'acc'])
            for r in self.records:
                writer.writerow([r.epoch, r.split, f"{r.loss:.6f}", f"{r.acc:.6f}"])


@dataclass
class EvalResult:
    accuracy: float
    loss: float
    confusion: np.ndarray

    @property
    def total(self):
        return int(self.confusion.sum())


def _check_compat(model, x, num_classes):
    if tuple(x.shape[1:]) != model.spec.input_shape:
        raise DimensionError(f"Données {tuple(x.shape[1:])} incompatibles avec le modèle {model.spec.input_shape}")
    if num_classes > model.spec.num_classes:
        raise DimensionError(f"{num_classes} classes pour un modèle à {model.spec.num_classes} sorties")


def predict(model, x, batch_size=EVAL_BATCH):
    """Logits en mode évaluation (hors bande), par lots."""
    chunks = [model(x[i:i + batch_size]).data for i in range(0, len(x), batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, model.spec.num_classes), dtype=np.float32)


def evaluate(model, dataset, split='val', batch_size=EVAL_BATCH):
    """Exactitude, perte moyenne et matrice de confusion (lignes = vraie classe)."""
    x, y = dataset.split(split)
    k = model.spec.num_classes
    _check_compat(model, x, dataset.task.num_classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    if len(y) == 0:
        return EvalResult(0.0, 0.0, confusion)
    logits = predict(model, x, batch_size)
    loss = float(cross_entropy(logits, y).item())
    np.add.at(confusion, (y, logits.argmax(axis=1)), 1)
    return EvalResult(float(np.trace(confusion) / len(y)), loss, confusion)


def _train_step(model, optimizer, x, y, lr, step, label_smoothing, drop_rng):
    with Tape() as tape:
        try:
            logits = model(x, drop_rng, training=True)
            loss = cross_entropy(logits, y, label_smoothing)
        except NumericError as exc:
            raise NumericError(f"Passe avant non finie au pas {step} : {exc}", index=step) from exc
    value = float(loss.item())
    if not math.isfinite(value):
        raise NumericError(f"Perte non finie au pas {step}", index=step)
    backward(tape, loss)
    if lr > 0:
        optimizer.step(lr)
    optimizer.zero_grad()
    return value, logits.data.argmax(axis=1)


def _batch_order(rng, dataset):
    """
    Ordre de passage des exemples d'entraînement.

    Pour temporal-order, les paires (clip, clip inversé) sont mélangées en bloc
    et restent adjacentes : un lot de taille paire contient des paires
    complètes, seule leur différence porte la classe.
    """
    n = len(dataset.y_train)
    if dataset.task.kind is not TaskKind.TEMPORAL_ORDER:
        return rng.permutation(n)
    pairs = rng.permutation(n // 2)
    return np.stack([2 * pairs, 2 * pairs + 1], axis=1).reshape(-1)


def train(model, dataset, cfg=None, log_path=None, journal=None):
    """
    Entraîne `model` sur la partition train ; une ligne train et une ligne val
    par époque. lr = 0 laisse les paramètres inchangés bit à bit.
    """
    cfg = cfg or TrainConfig()
    x, y = dataset.x_train, dataset.y_train
    _check_compat(model, x, dataset.task.num_classes)
    total = cfg.validate_for(len(y))
    optimizer = AdamW(model.params, cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng(cfg.seed + 1)
    min_lr = min(cfg.min_lr, cfg.lr)
    log = TrainLog()
    if journal is not None:
        journal.log_event('TRAIN_START', {'model': model.spec.name, 'task': dataset.task.kind.value,
                                          'steps': total, 'lr': cfg.lr, 'seed': cfg.seed})
    step = 0
    for epoch in range(cfg.epochs):
        order = _batch_order(rng, dataset)
        losses, correct = [], 0
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            lr = cosine_lr(step + 1, cfg.lr, min_lr, cfg.warmup_steps, total)
            loss, pred = _train_step(model, optimizer, x[idx], y[idx], lr, step, cfg.label_smoothing, drop_rng)
            logger.debug("pas %d : perte %.5f (lr %.2e)", step, loss, lr)
            losses.append(loss * len(idx))
            log.step_losses.append(loss)
            correct += int((pred == y[idx]).sum())
            step += 1
        log.records.append(EpochRecord(epoch, 'train', sum(losses) / len(y), correct / len(y)))
        val = evaluate(model, dataset, 'val')
        log.records.append(EpochRecord(epoch, 'val', val.loss, val.accuracy))
        logger.info("Époque %d : perte %.4f, val %.3f", epoch, log.records[-2].loss, val.accuracy)
        if journal is not None:
            journal.log_event('EPOCH', {'epoch': epoch, 'train_loss': round(log.records[-2].loss, 6),
                                        'val_acc': round(val.accuracy, 6)})
    if log_path is not None:
        log.write_csv(log_path)
    return log


@dataclass
class OverfitResult:
    losses: List[float]
    accuracy: float
    steps_to_perfect: Optional[int]


def overfit_batch(model, x, y, steps=200, lr=1e-3, seed=0):
    """
    Entraîne sur un seul lot à lr constant sans décroissance des poids.
    steps_to_perfect est le premier pas où le lot est classé parfaitement.
    """
    _check_compat(model, x, int(np.max(y)) + 1)
    optimizer = AdamW(model.params, lr, weight_decay=0.0)
    drop_rng = np.random.default_rng(seed)
    losses, perfect, accuracy = [], None, 0.0
    for step in range(steps):
        loss, pred = _train_step(model, optimizer, x, y, lr, step, 0.0, drop_rng)
        losses.append(loss)
        accuracy = float((pred == y).mean())
        if perfect is None and accuracy == 1.0:
            perfect = step
    accuracy = float((predict(model, x).argmax(axis=1) == y).mean())
    return OverfitResult(losses, accuracy, perfect)


def micro_spec(task, **overrides):
    """Micro-VAST (stem 2D, un étage) dimensionné pour `task`."""
    return ModelSpec.from_name('vast-micro', frames=task.frames, height=task.height, width=task.width,
                               num_classes=task.num_classes, **overrides)


def without_time(spec):
    """Même modèle sans l'axe temporel dans aucun ShiftSpec (fraction totale inchangée)."""
    return replace(spec, shift_axes=tuple(a for a in spec.axes if a is not ShiftAxis.TIME),
                   shift_fraction=spec.fraction)


def apply_recipe(name, spec, batch_size, cfg=None):
    """Applique une recette de jeu de données : stem, drop-path et lr rapporté au batch réel."""
    if name not in RECIPES:
        raise ConfigError(f"Recette inconnue : {name!r} (attendu : {', '.join(sorted(RECIPES))})")
    recipe = RECIPES[name]
    cfg = replace(cfg or TrainConfig(), lr=scale_lr(recipe['lr'], batch_size), batch_size=batch_size)
    return replace(spec, stem=recipe['stem'], drop_path_rate=recipe['drop_path_rate']), cfg


def mechanism_proof(task=None, cfg=None, seed=0):
    """
    Entraîne deux micro-VAST identiques, avec et sans shift temporel, sur la
    tâche temporal-order ; renvoie leurs exactitudes de validation.
    """
    task = task or ToyTask(seed=seed)
    cfg = cfg or TrainConfig(seed=seed)
    dataset = gen_toy_dataset(task)
    spec = micro_spec(task)
    results = {}
    for label, variant in (('with_time', spec), ('without_time', without_time(spec))):
        model = build_model(variant, seed)
        train(model, dataset, cfg)
        results[label] = evaluate(model, dataset, 'val').accuracy
        logger.info("Preuve du mécanisme : %s -> %.3f", label, results[label])
    return results


def run_ablation(task=None, rows=tuple(BlockVariant), batch=8, steps=60, lr=1e-3, seed=0):
    """
    Entraînabilité des variantes R1..R6 : perte initiale et finale d'un
    surapprentissage sur un lot.
    """
    task = task or ToyTask(seed=seed, samples=max(2 * batch, 10))
    dataset = gen_toy_dataset(task)
    x, y = dataset.x_train[:batch], dataset.y_train[:batch]
    results = {}
    for row in map(BlockVariant.parse, rows):
        model = build_model(micro_spec(task, block_variant=row), seed)
        outcome = overfit_batch(model, x, y, steps=steps, lr=lr, seed=seed)
        results[row.value] = (outcome.losses[0], outcome.losses[-1])
        logger.info("Ablation %s : %.4f -> %.4f", row.value, outcome.losses[0], outcome.losses[-1])
    return results


def shift_fraction_sweep(task=None, fractions=(Fraction(0), Fraction(1, 4), Fraction(1, 3), Fraction(1, 2)),
                         cfg=None, seed=0):
    """Exactitude de validation du micro-VAST pour chaque fraction de canaux décalés."""
    task = task or ToyTask(seed=seed)
    cfg = cfg or TrainConfig(seed=seed)
    dataset = gen_toy_dataset(task)
    results = {}
    for fraction in fractions:
        model = build_model(micro_spec(task, shift_fraction=fraction), seed)
        train(model, dataset, cfg)
        results[str(Fraction(fraction))] = evaluate(model, dataset, 'val').accuracy
    return results
