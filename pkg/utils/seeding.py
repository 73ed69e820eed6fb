"""
Semillas derivadas y límite de hilos para Monte Carlo
Toda la aleatoriedad fluye por semillas explícitas; no hay estado global.
"""
import os

import numpy as np


def derive_seed(*keys):
    """Semilla entera determinista a partir de una semilla base y contadores"""
    entropy = [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise ValueError(f"las claves de semilla deben ser no negativas: {entropy}")
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def make_rng(*keys):
    return np.random.default_rng(derive_seed(*keys))


def monte_carlo_threads():
    """Hilos para el abanico Monte Carlo: variable THREADS o núcleos de la máquina"""
    raw = os.environ.get("THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"THREADS debe ser entero, recibido '{raw}'")
        return max(1, value)
    return os.cpu_count() or 1
