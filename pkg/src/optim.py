"""
optim.py - AdamW (décroissance découplée) et planification du taux d'apprentissage

- AdamW : moments persistants par nom de paramètre, décroissance appliquée
  directement aux poids (jamais aux moments)
- adamw_step : une mise à jour sur un ensemble de paramètres
- cosine_lr : warmup linéaire puis décroissance cosinus jusqu'à min_lr
- scale_lr : règle linéaire lr = base · batch / batch_de_référence
"""

import math

import numpy as np

from src.config import Config
from src.errors import ConfigError


class AdamW:
    """
    Optimiseur AdamW sur des Parameter.

    L'état (pas, moyennes des gradients et de leurs carrés) est indexé par
    le nom du paramètre et persiste d'un pas à l'autre.
    """

    def __init__(self, params, lr=Config.TOY_LR, betas=(Config.ADAM_BETA1, Config.ADAM_BETA2),
                 eps=Config.ADAM_EPS, weight_decay=Config.WEIGHT_DECAY):
        if lr < 0.0:
            raise ConfigError(f"Taux d'apprentissage invalide : {lr}")
        if eps < 0.0:
            raise ConfigError(f"Epsilon invalide : {eps}")
        if weight_decay < 0.0:
            raise ConfigError(f"weight_decay invalide : {weight_decay}")
        if not (0.0 <= betas[0] < 1.0) or not (0.0 <= betas[1] < 1.0):
            raise ConfigError(f"Betas invalides : {betas}")
        self.params = list(params.values()) if isinstance(params, dict) else list(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = {}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr=None):
        """Applique une mise à jour ; `lr` surcharge le taux courant (ordonnanceur)."""
        lr = self.lr if lr is None else lr
        if lr <= 0.0:
            raise ConfigError(f"adamw_step exige lr > 0, reçu {lr}")
        beta1, beta2 = self.betas
        for p in self.params:
            grad = p.grad.data
            state = self.state.get(p.name)
            if state is None:
                state = self.state[p.name] = {
                    'step': 0,
                    'exp_avg': np.zeros_like(p.data),
                    'exp_avg_sq': np.zeros_like(p.data),
                }
            state['step'] += 1
            t = state['step']
            exp_avg, exp_avg_sq = state['exp_avg'], state['exp_avg_sq']

            # décroissance découplée
            if self.weight_decay != 0.0:
                p.data = p.data - lr * self.weight_decay * p.data

            exp_avg *= beta1
            exp_avg += (1.0 - beta1) * grad
            exp_avg_sq *= beta2
            exp_avg_sq += (1.0 - beta2) * grad * grad

            bias_correction1 = 1.0 - beta1 ** t
            bias_correction2 = 1.0 - beta2 ** t
            step_size = lr * math.sqrt(bias_correction2) / bias_correction1
            p.data = p.data - step_size * exp_avg / (np.sqrt(exp_avg_sq) + self.eps)
        return self.params


def adamw_step(params, lr, beta1=Config.ADAM_BETA1, beta2=Config.ADAM_BETA2, eps=Config.ADAM_EPS,
               weight_decay=Config.WEIGHT_DECAY, optimizer=None):
    """
    Un pas AdamW sur `params`.

    Passer le même `optimizer` d'un appel à l'autre conserve les moments ;
    sans lui un nouvel état est créé (premier pas).
    """
    if lr <= 0.0:
        raise ConfigError(f"adamw_step exige lr > 0, reçu {lr}")
    if optimizer is None:
        optimizer = AdamW(params, lr, (beta1, beta2), eps, weight_decay)
    else:
        optimizer.betas, optimizer.eps, optimizer.weight_decay = (beta1, beta2), eps, weight_decay
    optimizer.step(lr)
    return optimizer


def cosine_lr(t, lr_max, lr_min, warmup_steps, cycle_steps):
    """
    Warmup linéaire (t / T_w · lr_max) puis cosinus de T_w à T_c ; lr_min au-delà.
    """
    if warmup_steps > 0 and t < warmup_steps:
        return (t / warmup_steps) * float(lr_max)
    if t > cycle_steps:
        return float(lr_min)
    denom = cycle_steps - warmup_steps
    if denom <= 0:
        return float(lr_min)
    frac = (t - warmup_steps) / denom
    return float(lr_min) + 0.5 * (1.0 + math.cos(math.pi * frac)) * (float(lr_max) - float(lr_min))


def scale_lr(base_lr, batch_size, reference_batch=Config.REFERENCE_BATCH):
    """Taux d'apprentissage linéairement rééchelonné depuis le batch de référence."""
    if batch_size < 1 or reference_batch < 1:
        raise ConfigError(f"Tailles de batch invalides : {batch_size} / {reference_batch}")
    return base_lr * batch_size / reference_batch
