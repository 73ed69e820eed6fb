"""
Figuras autocontenidas en SVG y tablas markdown
- curvas de recompensa por época (media entre semillas con banda min-max)
- diagrama de caja de la recompensa de inferencia por variante
- tabla de latencia por iteración
"""
import logging
import re
from html import escape

import numpy as np
import pandas as pd

from utils.stats import box_stats, quantiles  # noqa: F401  (quantiles se reexporta)

logger = logging.getLogger(__name__)

REQUIRED_METRIC_COLUMNS = ('epoch', 'reward')
PALETTE = ('#2c3e50', '#e74c3c', '#3498db', '#27ae60', '#8e44ad', '#f39c12')


class MetricsFormatError(ValueError):
    """CSV de métricas mal formado; `line` es la línea del archivo (1 = cabecera, None = desconocida)"""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        where = f"línea {line}" if line is not None else "línea desconocida"
        super().__init__(f"{path}: {where}: {message}")


def read_metrics(path, columns=REQUIRED_METRIC_COLUMNS):
    """Lee un CSV de métricas y valida que las columnas numéricas lo sean, fila por fila"""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        found = re.search(r'line (\d+)', str(e))
        raise MetricsFormatError(path, int(found.group(1)) if found else None, str(e))
    except pd.errors.EmptyDataError:
        raise MetricsFormatError(path, 1, "archivo vacío")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise MetricsFormatError(path, 1, f"faltan columnas: {', '.join(missing)}")
    parsed = pd.DataFrame(index=frame.index)
    for col in frame.columns:
        raw = frame[col].str.strip()
        values = pd.to_numeric(raw.replace('', np.nan), errors='coerce')
        bad = values.isna() & raw.ne('')
        if col in columns:
            bad |= raw.eq('')
        if col in ('label', 'variant', 'row_type', 'seed'):
            parsed[col] = raw
            continue
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise MetricsFormatError(path, row + 2, f"valor no numérico en '{col}': '{frame[col].iloc[row]}'")
        parsed[col] = values
    return parsed


def _scale(value, lo, hi, start, length):
    if hi == lo:
        return start + length / 2.0
    return start + (value - lo) / (hi - lo) * length


class SVGExporter:
    """Construye documentos SVG a partir de tablas de métricas"""

    def __init__(self, width=720, height=420, margin=50):
        self.width = width
        self.height = height
        self.margin = margin

    @property
    def plot_width(self):
        return self.width - 2 * self.margin

    @property
    def plot_height(self):
        return self.height - 2 * self.margin

    def _x(self, value, lo, hi):
        return _scale(value, lo, hi, self.margin, self.plot_width)

    def _y(self, value, lo, hi):
        # eje y hacia arriba
        return self.height - _scale(value, lo, hi, self.margin, self.plot_height)

    def _document(self, title, body, attrs=''):
        return f"""<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" viewBox="0 0 {self.width} {self.height}"{attrs}>
  <title>{escape(title)}</title>
  <rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>
  <text x="{self.width / 2:.1f}" y="{self.margin / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>
{body}
</svg>
"""

    def _axes(self, x_lo, x_hi, y_lo, y_hi, x_label, y_label):
        left, bottom = self.margin, self.height - self.margin
        right, top = self.width - self.margin, self.margin
        return f"""  <g class="axes" font-family="sans-serif" font-size="11">
    <line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="#333"/>
    <line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="#333"/>
    <text x="{left}" y="{bottom + 16}" text-anchor="middle">{x_lo:g}</text>
    <text x="{right}" y="{bottom + 16}" text-anchor="middle">{x_hi:g}</text>
    <text x="{left - 6}" y="{bottom}" text-anchor="end">{y_lo:.3g}</text>
    <text x="{left - 6}" y="{top}" text-anchor="end">{y_hi:.3g}</text>
    <text x="{(left + right) / 2:.1f}" y="{bottom + 32}" text-anchor="middle">{escape(x_label)}</text>
    <text x="14" y="{(top + bottom) / 2:.1f}" text-anchor="middle" transform="rotate(-90 14 {(top + bottom) / 2:.1f})">{escape(y_label)}</text>
  </g>"""

    def curves(self, series, column='reward', title='Recompensa de entrenamiento', y_label='recompensa'):
        """
        series: etiqueta -> lista de DataFrames (una por semilla) con columnas 'epoch' y `column`.
        Una polilínea por etiqueta (media entre semillas) y un polígono con la banda min-max.
        El eje x cubre [0, última época + 1].
        """
        if not series:
            raise ValueError("no hay series para graficar")
        aligned = {}
        for label, frames in series.items():
            table = pd.concat([f.set_index('epoch')[column].rename(i) for i, f in enumerate(frames)], axis=1)
            table = table.dropna(how='all').sort_index()
            if table.empty:
                raise ValueError(f"la serie '{label}' no tiene valores en '{column}'")
            aligned[label] = pd.DataFrame({'mean': table.mean(axis=1), 'min': table.min(axis=1),
                                           'max': table.max(axis=1)})
        x_lo = 0.0
        x_hi = float(max(int(frame.index.max()) for frame in aligned.values()) + 1)
        y_lo = float(min(frame['min'].min() for frame in aligned.values()))
        y_hi = float(max(frame['max'].max() for frame in aligned.values()))

        parts = [self._axes(x_lo, x_hi, y_lo, y_hi, 'época', y_label)]
        for i, (label, frame) in enumerate(aligned.items()):
            color = PALETTE[i % len(PALETTE)]
            xs = [self._x(float(e), x_lo, x_hi) for e in frame.index]
            upper = [f"{x:.2f},{self._y(v, y_lo, y_hi):.2f}" for x, v in zip(xs, frame['max'])]
            lower = [f"{x:.2f},{self._y(v, y_lo, y_hi):.2f}" for x, v in zip(xs, frame['min'])]
            line = [f"{x:.2f},{self._y(v, y_lo, y_hi):.2f}" for x, v in zip(xs, frame['mean'])]
            parts.append(f'  <g class="series" data-label="{escape(label)}">')
            parts.append(f'    <polygon class="band" points="{" ".join(upper + lower[::-1])}" '
                         f'fill="{color}" fill-opacity="0.15" stroke="none"/>')
            parts.append(f'    <polyline points="{" ".join(line)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            parts.append(f'    <text x="{self.width - self.margin + 4}" y="{self.margin + 14 * (i + 1)}" '
                         f'font-family="sans-serif" font-size="11" fill="{color}">{escape(label)}</text>')
            parts.append('  </g>')
        attrs = f' data-x-min="{x_lo:g}" data-x-max="{x_hi:g}"'
        return self._document(title, '\n'.join(parts), attrs)

    def box(self, groups, title='Recompensa de inferencia', y_label='recompensa'):
        """groups: etiqueta -> valores. Caja Q1-Q3, línea de mediana y bigotes min-max."""
        if not groups:
            raise ValueError("no hay grupos para graficar")
        stats = {label: box_stats(values) for label, values in groups.items()}
        y_lo = min(s['min'] for s in stats.values())
        y_hi = max(s['max'] for s in stats.values())
        if y_lo == y_hi:
            y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
        slot = self.plot_width / len(stats)
        half = slot * 0.25
        parts = [self._axes(0, len(stats), y_lo, y_hi, 'variante', y_label)]
        for i, (label, s) in enumerate(stats.items()):
            color = PALETTE[i % len(PALETTE)]
            cx = self.margin + slot * (i + 0.5)
            y = {k: self._y(s[k], y_lo, y_hi) for k in ('min', 'q1', 'median', 'q3', 'max')}
            parts.append(f"""  <g class="box" data-label="{escape(label)}" data-q1="{s['q1']!r}" data-median="{s['median']!r}" data-q3="{s['q3']!r}">
    <line x1="{cx:.2f}" y1="{y['max']:.2f}" x2="{cx:.2f}" y2="{y['q3']:.2f}" stroke="{color}"/>
    <line x1="{cx:.2f}" y1="{y['q1']:.2f}" x2="{cx:.2f}" y2="{y['min']:.2f}" stroke="{color}"/>
    <rect x="{cx - half:.2f}" y="{y['q3']:.2f}" width="{2 * half:.2f}" height="{y['q1'] - y['q3']:.2f}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>
    <line class="median" x1="{cx - half:.2f}" y1="{y['median']:.2f}" x2="{cx + half:.2f}" y2="{y['median']:.2f}" stroke="{color}" stroke-width="2"/>
    <text x="{cx:.2f}" y="{self.height - self.margin + 16}" text-anchor="middle" font-family="sans-serif" font-size="11">{escape(label)}</text>
  </g>""")
        return self._document(title, '\n'.join(parts))


def latency_markdown(table):
    """Tabla markdown: variante, segundos por iteración (media +- desv.) y sobrecosto"""
    lines = ['| variante | s/iteración | desv. | sobrecosto |', '|---|---|---|---|']
    for _, row in table.iterrows():
        overhead = '-' if pd.isna(row['overhead_pct']) else f"{row['overhead_pct']:+.1f}%"
        lines.append(f"| {row['variant']} | {row['mean_seconds']:.5f} | {row['std_seconds']:.5f} | {overhead} |")
    return '\n'.join(lines) + '\n'


def write_text(path, text):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.info("[PLOT] %s", path)
    return path
