"""
Estadísticas de resumen para reportes y diagramas de caja
Regla de cuantiles: interpolación lineal con posición n*p + 0.5 (método 'hazen' de numpy),
así {1, 2, 3, 4} da Q1 = 1.5, mediana = 2.5, Q3 = 3.5.
"""
import numpy as np

QUANTILE_METHOD = 'hazen'


def quantiles(values, probs=(0.25, 0.5, 0.75)):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no hay valores para calcular cuantiles")
    return tuple(float(q) for q in np.quantile(values, probs, method=QUANTILE_METHOD))


def box_stats(values):
    """min, Q1, mediana, Q3, max, media y varianza poblacional"""
    values = np.asarray(values, dtype=np.float64)
    q1, median, q3 = quantiles(values)
    return {
        'count': int(values.size),
        'mean': float(np.mean(values)),
        'min': float(np.min(values)),
        'q1': q1,
        'median': median,
        'q3': q3,
        'max': float(np.max(values)),
        'variance': float(np.var(values)),
    }
