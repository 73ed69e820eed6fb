"""
Modelo de canal para RobustBeam
BS terrestre con UPA (Nx x Ny) -> UAV legítimo y espía (Eve) con ULA.
Canal nominal Rician y perturbaciones por incertidumbre de posición, CSI y AoA.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from errors import ScenarioError
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

MAX_ALTITUDE_M = 1000.0


@dataclass
class ComplexMatrix:
    """Matriz compleja densa guardada como par de arreglos reales"""
    rows: int
    cols: int
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float64).reshape(self.rows, self.cols)
        self.im = np.asarray(self.im, dtype=np.float64).reshape(self.rows, self.cols)

    @classmethod
    def from_complex(cls, values):
        values = np.atleast_2d(np.asarray(values, dtype=np.complex128))
        return cls(values.shape[0], values.shape[1], values.real.copy(), values.imag.copy())

    def to_complex(self):
        return self.re + 1j * self.im

    def hermitian(self):
        return ComplexMatrix(self.cols, self.rows, self.re.T.copy(), -self.im.T)

    def frobenius_norm(self):
        return float(np.sqrt(np.sum(self.re ** 2) + np.sum(self.im ** 2)))

    def copy(self):
        return ComplexMatrix(self.rows, self.cols, self.re.copy(), self.im.copy())

    def equals(self, other):
        return (self.rows, self.cols) == (other.rows, other.cols) and \
            np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im)


@dataclass(frozen=True)
class ArrayGeometry:
    """Arreglo de antenas: UPA (Nx, Ny) o ULA (N); separación en longitudes de onda"""
    kind: str
    dims: tuple
    spacing: float = 0.5

    def __post_init__(self):
        if self.kind not in ('UPA', 'ULA'):
            raise ScenarioError(f"tipo de arreglo desconocido: {self.kind}")
        expected = 2 if self.kind == 'UPA' else 1
        if len(self.dims) != expected or any(int(d) < 1 for d in self.dims):
            raise ScenarioError(f"dimensiones inválidas para {self.kind}: {self.dims}")
        if self.spacing <= 0:
            raise ScenarioError("la separación entre elementos debe ser positiva")

    @classmethod
    def upa(cls, nx, ny, spacing=0.5):
        return cls('UPA', (int(nx), int(ny)), spacing)

    @classmethod
    def ula(cls, n, spacing=0.5):
        return cls('ULA', (int(n),), spacing)

    @property
    def n_elements(self):
        return int(np.prod(self.dims))

    def to_dict(self):
        return {'kind': self.kind, 'dims': list(self.dims), 'spacing_wavelengths': self.spacing}

    @classmethod
    def from_dict(cls, data):
        return cls(data['kind'], tuple(int(d) for d in data['dims']), float(data.get('spacing_wavelengths', 0.5)))


@dataclass
class Scenario:
    """Geometría nominal y presupuesto de potencia (unidades SI)"""
    bs_position: tuple = (0.0, 0.0, 10.0)
    uav_position: tuple = (50.0, 0.0, 100.0)
    eve_position: tuple = (40.0, 30.0, 80.0)
    tx_power: float = 1.0
    noise_power: float = 1e-9
    rician_k: float = 10.0
    pathloss_exponent: float = 2.2
    reference_gain_db: float = -40.0
    bs_array: ArrayGeometry = field(default_factory=lambda: ArrayGeometry.upa(4, 4))
    uav_array: ArrayGeometry = field(default_factory=lambda: ArrayGeometry.ula(6))
    eve_array: ArrayGeometry = field(default_factory=lambda: ArrayGeometry.ula(6))

    def __post_init__(self):
        self.bs_position = tuple(float(c) for c in self.bs_position)
        self.uav_position = tuple(float(c) for c in self.uav_position)
        self.eve_position = tuple(float(c) for c in self.eve_position)
        if self.tx_power <= 0:
            raise ScenarioError("tx_power debe ser > 0")
        if self.noise_power <= 0:
            raise ScenarioError("noise_power debe ser > 0")
        if self.rician_k < 0:
            raise ScenarioError("rician_k debe ser >= 0")
        for name, pos in (('uav', self.uav_position), ('eve', self.eve_position)):
            if not 0.0 < pos[2] <= MAX_ALTITUDE_M:
                raise ScenarioError(f"altitud de {name} fuera de (0, {MAX_ALTITUDE_M:.0f}] m: {pos[2]}")
        if self.bs_array.kind != 'UPA':
            raise ScenarioError("la BS debe usar un arreglo UPA")
        if self.uav_array.kind != 'ULA' or self.eve_array.kind != 'ULA':
            raise ScenarioError("UAV y Eve deben usar arreglos ULA")
        if self.uav_array.n_elements != self.eve_array.n_elements:
            raise ScenarioError("UAV y Eve deben tener el mismo número de antenas")

    def with_positions(self, uav_position, eve_position):
        return Scenario(self.bs_position, uav_position, eve_position, self.tx_power, self.noise_power,
                        self.rician_k, self.pathloss_exponent, self.reference_gain_db,
                        self.bs_array, self.uav_array, self.eve_array)


@dataclass(frozen=True)
class UncertaintyModel:
    """Desviaciones de los errores de estimación; Eve escala por `eve_factor`"""
    position_sigma: float = 2.0
    csi_error_sigma: float = 0.05
    aoa_sigma: float = 0.02
    eve_factor: float = 2.0

    def __post_init__(self):
        for name in ('position_sigma', 'csi_error_sigma', 'aoa_sigma'):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} debe ser >= 0")
        if self.eve_factor <= 0:
            raise ScenarioError("eve_factor debe ser > 0")

    @property
    def is_zero(self):
        return self.position_sigma == 0 and self.csi_error_sigma == 0 and self.aoa_sigma == 0

    def scaled(self, level):
        """Múltiplo del nivel de incertidumbre (barridos 0, 1x, 2x, 4x)"""
        if level < 0:
            raise ScenarioError("el nivel de incertidumbre debe ser >= 0")
        return UncertaintyModel(self.position_sigma * level, self.csi_error_sigma * level,
                                self.aoa_sigma * level, self.eve_factor)

    def as_vector(self):
        return np.array([self.position_sigma, self.csi_error_sigma, self.aoa_sigma], dtype=np.float64)


@dataclass
class ChannelPair:
    """Canales BS->UAV (h_b) y BS->Eve (h_e), forma antenas_rx x Nx*Ny"""
    h_b: ComplexMatrix
    h_e: ComplexMatrix

    def __post_init__(self):
        if (self.h_b.rows, self.h_b.cols) != (self.h_e.rows, self.h_e.cols):
            raise ScenarioError(f"dimensiones distintas: {self.h_b.rows}x{self.h_b.cols} vs "
                                f"{self.h_e.rows}x{self.h_e.cols}")

    def copy(self):
        return ChannelPair(self.h_b.copy(), self.h_e.copy())

    def equals(self, other):
        return self.h_b.equals(other.h_b) and self.h_e.equals(other.h_e)


@dataclass
class ChannelSamples:
    """Muestras Monte Carlo apiladas: arreglos complejos [M, rx, tx]"""
    h_b: np.ndarray
    h_e: np.ndarray

    @classmethod
    def from_pairs(cls, pairs):
        return cls(np.stack([p.h_b.to_complex() for p in pairs]),
                   np.stack([p.h_e.to_complex() for p in pairs]))

    def __len__(self):
        return self.h_b.shape[0]


# ----------------------------------------------------------------------
# vectores de dirección
# ----------------------------------------------------------------------
def steering_upa(geometry, elevation, azimuth):
    """Respuesta del UPA; elemento (m, n) en orden m-mayor, normalizado por 1/sqrt(Nx*Ny)"""
    if geometry.kind != 'UPA':
        raise ScenarioError("steering_upa requiere un arreglo UPA")
    nx, ny = geometry.dims
    m = np.arange(nx)[:, None]
    n = np.arange(ny)[None, :]
    phase = 2.0 * np.pi * geometry.spacing * (
        m * np.sin(elevation) * np.cos(azimuth) + n * np.sin(elevation) * np.sin(azimuth))
    return np.exp(1j * phase).reshape(-1) / np.sqrt(nx * ny)


def steering_ula(geometry, angle):
    """Respuesta del ULA con eje en +x: elemento k = exp(j 2pi d k cos(angle)) / sqrt(N)"""
    if geometry.kind != 'ULA':
        raise ScenarioError("steering_ula requiere un arreglo ULA")
    (n,) = geometry.dims
    k = np.arange(n)
    return np.exp(1j * 2.0 * np.pi * geometry.spacing * k * np.cos(angle)) / np.sqrt(n)


def departure_angles(tx_position, rx_position):
    """(elevación desde el eje +z de la BS, azimut) hacia el receptor"""
    delta = np.asarray(rx_position, dtype=np.float64) - np.asarray(tx_position, dtype=np.float64)
    distance = np.linalg.norm(delta)
    if distance == 0:
        raise ScenarioError("transmisor y receptor coinciden (distancia 0)")
    return float(np.arccos(np.clip(delta[2] / distance, -1.0, 1.0))), float(np.arctan2(delta[1], delta[0]))


def arrival_angle(tx_position, rx_position):
    """Ángulo entre el eje del ULA receptor (+x) y la dirección hacia la BS"""
    delta = np.asarray(tx_position, dtype=np.float64) - np.asarray(rx_position, dtype=np.float64)
    distance = np.linalg.norm(delta)
    if distance == 0:
        raise ScenarioError("transmisor y receptor coinciden (distancia 0)")
    return float(np.arccos(np.clip(delta[0] / distance, -1.0, 1.0)))


def path_gain(scenario, rx_position):
    distance = float(np.linalg.norm(np.asarray(rx_position) - np.asarray(scenario.bs_position)))
    if distance == 0:
        raise ScenarioError("transmisor y receptor coinciden (distancia 0)")
    return 10.0 ** (scenario.reference_gain_db / 10.0) * distance ** (-scenario.pathloss_exponent)


def los_matrix(bs_array, rx_array, elevation, azimuth, aoa):
    """a_rx a_tx^H sqrt(N_rx N_tx): componente LOS de norma de Frobenius^2 = N_rx N_tx"""
    a_tx = steering_upa(bs_array, elevation, azimuth)
    a_rx = steering_ula(rx_array, aoa)
    return np.outer(a_rx, a_tx.conj()) * np.sqrt(rx_array.n_elements * bs_array.n_elements)


def _link_geometry(scenario, rx_position):
    elevation, azimuth = departure_angles(scenario.bs_position, rx_position)
    return elevation, azimuth, arrival_angle(scenario.bs_position, rx_position)


def _rician_link(scenario, rx_position, rx_array, rng):
    g = path_gain(scenario, rx_position)
    k = scenario.rician_k
    los = los_matrix(scenario.bs_array, rx_array, *_link_geometry(scenario, rx_position))
    shape = (rx_array.n_elements, scenario.bs_array.n_elements)
    scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return np.sqrt(g) * (np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * scatter)


def nominal_channel(scenario, rng_seed):
    """Canal Rician nominal para UAV y Eve; determinista por semilla"""
    rng_b, rng_e = (np.random.default_rng(s) for s in np.random.SeedSequence(int(rng_seed)).spawn(2))
    h_b = _rician_link(scenario, scenario.uav_position, scenario.uav_array, rng_b)
    h_e = _rician_link(scenario, scenario.eve_position, scenario.eve_array, rng_e)
    return ChannelPair(ComplexMatrix.from_complex(h_b), ComplexMatrix.from_complex(h_e))


def _perturb_link(h, scenario, rx_position, rx_array, sigmas, rng):
    position_sigma, csi_sigma, aoa_sigma = sigmas
    if position_sigma > 0 or aoa_sigma > 0:
        k = scenario.rician_k
        weight = np.sqrt(k / (k + 1.0))
        nominal_los = np.sqrt(path_gain(scenario, rx_position)) * weight * los_matrix(
            scenario.bs_array, rx_array, *_link_geometry(scenario, rx_position))
        jittered = np.asarray(rx_position, dtype=np.float64)
        if position_sigma > 0:
            jittered = jittered + rng.normal(0.0, position_sigma, 3)
        angles = np.array(_link_geometry(scenario, jittered))
        if aoa_sigma > 0:
            angles = angles + rng.normal(0.0, aoa_sigma, 3)
        jittered_los = np.sqrt(path_gain(scenario, jittered)) * weight * los_matrix(
            scenario.bs_array, rx_array, *angles)
        h = h - nominal_los + jittered_los
    if csi_sigma > 0:
        scale = csi_sigma * np.linalg.norm(h) / np.sqrt(h.size)
        h = h + scale * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / np.sqrt(2.0)
    return h


def perturb(nominal, scenario, uncertainty, rng_seed):
    """Realización incierta del canal. Incertidumbre nula devuelve el nominal exacto."""
    if uncertainty.is_zero:
        return nominal.copy()
    rng_b, rng_e = (np.random.default_rng(s) for s in np.random.SeedSequence(int(rng_seed)).spawn(2))
    base = uncertainty.as_vector()
    h_b = _perturb_link(nominal.h_b.to_complex(), scenario, scenario.uav_position,
                        scenario.uav_array, base, rng_b)
    h_e = _perturb_link(nominal.h_e.to_complex(), scenario, scenario.eve_position,
                        scenario.eve_array, base * uncertainty.eve_factor, rng_e)
    return ChannelPair(ComplexMatrix.from_complex(h_b), ComplexMatrix.from_complex(h_e))


def draw_samples(nominal, scenario, uncertainty, n_samples, rng_seed, threads=1):
    """
    Muestras Monte Carlo del canal. La muestra i usa la semilla derivada (rng_seed, i);
    el resultado se ensambla en orden de índice, así el paralelismo no cambia nada.
    """
    if n_samples < 1:
        raise ValueError("se requiere al menos una muestra Monte Carlo")
    seeds = [derive_seed(rng_seed, i) for i in range(n_samples)]

    def one(seed):
        return perturb(nominal, scenario, uncertainty, seed)

    if threads > 1 and n_samples > 1 and not uncertainty.is_zero:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            pairs = list(executor.map(one, seeds))
    else:
        pairs = [one(seed) for seed in seeds]
    return ChannelSamples.from_pairs(pairs)


# ----------------------------------------------------------------------
# JSON (unidades SI)
# ----------------------------------------------------------------------
SCENARIO_KEYS = ('bs_position_m', 'uav_position_m', 'eve_position_m', 'tx_power_w', 'noise_power_w',
                 'rician_k', 'pathloss_exponent', 'reference_gain_db', 'bs_array', 'uav_array', 'eve_array')
UNCERTAINTY_KEYS = ('position_sigma_m', 'csi_error_sigma', 'aoa_sigma_rad', 'eve_factor')


def scenario_to_dict(scenario):
    return {
        'bs_position_m': list(scenario.bs_position),
        'uav_position_m': list(scenario.uav_position),
        'eve_position_m': list(scenario.eve_position),
        'tx_power_w': scenario.tx_power,
        'noise_power_w': scenario.noise_power,
        'rician_k': scenario.rician_k,
        'pathloss_exponent': scenario.pathloss_exponent,
        'reference_gain_db': scenario.reference_gain_db,
        'bs_array': scenario.bs_array.to_dict(),
        'uav_array': scenario.uav_array.to_dict(),
        'eve_array': scenario.eve_array.to_dict(),
    }


def scenario_from_dict(data):
    unknown = set(data) - set(SCENARIO_KEYS)
    if unknown:
        raise ScenarioError(f"claves desconocidas en escenario: {', '.join(sorted(unknown))}")
    defaults = scenario_to_dict(Scenario())
    merged = {**defaults, **data}
    return Scenario(
        bs_position=merged['bs_position_m'],
        uav_position=merged['uav_position_m'],
        eve_position=merged['eve_position_m'],
        tx_power=float(merged['tx_power_w']),
        noise_power=float(merged['noise_power_w']),
        rician_k=float(merged['rician_k']),
        pathloss_exponent=float(merged['pathloss_exponent']),
        reference_gain_db=float(merged['reference_gain_db']),
        bs_array=ArrayGeometry.from_dict(merged['bs_array']),
        uav_array=ArrayGeometry.from_dict(merged['uav_array']),
        eve_array=ArrayGeometry.from_dict(merged['eve_array']),
    )


def uncertainty_to_dict(uncertainty):
    return {
        'position_sigma_m': uncertainty.position_sigma,
        'csi_error_sigma': uncertainty.csi_error_sigma,
        'aoa_sigma_rad': uncertainty.aoa_sigma,
        'eve_factor': uncertainty.eve_factor,
    }


def uncertainty_from_dict(data):
    unknown = set(data) - set(UNCERTAINTY_KEYS)
    if unknown:
        raise ScenarioError(f"claves desconocidas en incertidumbre: {', '.join(sorted(unknown))}")
    merged = {**uncertainty_to_dict(UncertaintyModel()), **data}
    return UncertaintyModel(float(merged['position_sigma_m']), float(merged['csi_error_sigma']),
                            float(merged['aoa_sigma_rad']), float(merged['eve_factor']))


def save_scenario(path, scenario, uncertainty=None):
    doc = {'scenario': scenario_to_dict(scenario)}
    if uncertainty is not None:
        doc['uncertainty'] = uncertainty_to_dict(uncertainty)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(doc, f, indent=2)


def load_scenario(path):
    """Lee un documento {'scenario': {...}, 'uncertainty': {...}}; devuelve (Scenario, UncertaintyModel)"""
    with open(path, 'r', encoding='utf-8') as f:
        doc = json.load(f)
    scenario = scenario_from_dict(doc.get('scenario', {}))
    uncertainty = uncertainty_from_dict(doc.get('uncertainty', {}))
    logger.debug("[SCENARIO] cargado desde %s", path)
    return scenario, uncertainty
