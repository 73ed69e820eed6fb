"""
Validador de documentos de experimento para RobustBeam
Valida un documento JSON contra CONFIG_SCHEMA y construye la configuración de entrenamiento
"""
import json
import logging
import os
import re
from dataclasses import dataclass, field, replace

from channel import load_scenario, scenario_from_dict, scenario_to_dict, \
    uncertainty_from_dict, uncertainty_to_dict
from config_schema import CONFIG_SCHEMA, OBJECT_SECTIONS, get_defaults, get_required_fields, \
    get_section_fields, get_sections
from diffusion import DiffusionSchedule
from errors import ConfigError, ScenarioError
from nets import NetworkConfig
from secrecy import Paradigm, ParadigmConfig
from trainer import RandomizationRanges, StateScaling, TrainingConfig

logger = logging.getLogger(__name__)

SAFE_NAME = re.compile(r'^[A-Za-z0-9][A-Za-z0-9_.-]*$')


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


_TYPE_CHECKS = {
    'string': lambda v: isinstance(v, str),
    'int': _is_int,
    'float': _is_number,
    'float|null': lambda v: v is None or _is_number(v),
    'bool': lambda v: isinstance(v, bool),
    'object': lambda v: isinstance(v, dict),
    'list[int]': lambda v: isinstance(v, list) and all(_is_int(x) for x in v),
    'list[float]': lambda v: isinstance(v, list) and all(_is_number(x) for x in v),
    'list[string]': lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
}


def _lookup(document, name):
    """Valor de una ruta con puntos; (False, None) si falta"""
    node = document
    for part in name.split('.'):
        if not isinstance(node, dict) or part not in node:
            return False, None
        node = node[part]
    return True, node


class ConfigValidator:
    """Valida un documento de experimento contra CONFIG_SCHEMA"""

    def __init__(self, document, base_dir='.'):
        self.document = document
        self.base_dir = base_dir
        self.schema = CONFIG_SCHEMA
        self.errors = []
        self.warnings = []

    def validate(self):
        """Ejecuta todas las validaciones y retorna resultado"""
        if not isinstance(self.document, dict):
            self._error('INVALID_DOCUMENT', '<document>', "el documento debe ser un objeto JSON")
        else:
            self._validate_unknown_keys()
            self._validate_required_fields()
            self._validate_types()
            self._validate_ranges()
            self._validate_choices()
            self._validate_cross_fields()
            self._validate_scenario()
            self._collect_warnings()

        return {
            'is_valid': len(self.errors) == 0,
            'errors': self.errors,
            'warnings': self.warnings,
            'error_count': len(self.errors),
            'warning_count': len(self.warnings)
        }

    def _error(self, kind, field_name, message):
        self.errors.append({'type': kind, 'severity': 'ERROR', 'field': field_name, 'message': message})

    def _warning(self, kind, field_name, message):
        self.warnings.append({'type': kind, 'severity': 'WARNING', 'field': field_name, 'message': message})

    def _present(self):
        """Campos del esquema presentes en el documento con su valor"""
        for name in self.schema:
            found, value = _lookup(self.document, name)
            if found:
                yield name, value

    def _validate_unknown_keys(self):
        sections = get_sections()
        top_level = {name for name in self.schema if '.' not in name}
        for key, value in self.document.items():
            if key in sections:
                if not isinstance(value, dict):
                    self._error('INVALID_TYPE', key, "la sección debe ser un objeto")
                    continue
                allowed = set(get_section_fields(key))
                for sub in value:
                    if sub not in allowed:
                        self._error('UNKNOWN_KEY', f'{key}.{sub}', f"clave desconocida '{key}.{sub}'")
            elif key not in top_level:
                self._error('UNKNOWN_KEY', key, f"clave desconocida '{key}'")

    def _validate_required_fields(self):
        for name in get_required_fields():
            found, value = _lookup(self.document, name)
            if not found or value is None:
                self._error('MISSING_REQUIRED', name, f"campo obligatorio '{name}' ausente")

    def _validate_types(self):
        for name, value in self._present():
            expected = self.schema[name]['type']
            if not _TYPE_CHECKS[expected](value):
                self._error('INVALID_TYPE', name, f"'{name}' debe ser {expected}, recibido {value!r}")

    def _validate_ranges(self):
        for name, value in self._present():
            spec = self.schema[name]
            if 'min' not in spec and 'max' not in spec:
                continue
            if not _TYPE_CHECKS[spec['type']](value):
                continue
            values = value if isinstance(value, list) else [value]
            for v in values:
                if v is None:
                    continue
                if 'min' in spec and (v <= spec['min'] if spec.get('min_exclusive') else v < spec['min']):
                    op = '>' if spec.get('min_exclusive') else '>='
                    self._error('OUT_OF_RANGE', name, f"'{name}' debe ser {op} {spec['min']}, recibido {v}")
                    break
                if 'max' in spec and (v >= spec['max'] if spec.get('max_exclusive') else v > spec['max']):
                    op = '<' if spec.get('max_exclusive') else '<='
                    self._error('OUT_OF_RANGE', name, f"'{name}' debe ser {op} {spec['max']}, recibido {v}")
                    break

    def _validate_choices(self):
        for name, value in self._present():
            choices = self.schema[name].get('choices')
            if not choices or not isinstance(value, list):
                continue
            unknown = [v for v in value if v not in choices]
            if unknown:
                self._error('INVALID_CHOICE', name,
                            f"valores desconocidos en '{name}': {', '.join(map(str, unknown))} "
                            f"(opciones: {', '.join(choices)})")
            if not value:
                self._error('INVALID_CHOICE', name, f"'{name}' no puede estar vacío")

    def _value(self, name):
        found, value = _lookup(self.document, name)
        return value if found else self.schema[name].get('default')

    def _validate_cross_fields(self):
        if self.errors:
            return
        name = self.document['name']
        if not SAFE_NAME.match(name):
            self._error('INVALID_NAME', 'name', f"'{name}' no es un nombre de archivo seguro")
        seeds = self.document['seeds']
        if not seeds:
            self._error('INVALID_SEEDS', 'seeds', "se requiere al menos una semilla")
        elif len(set(seeds)) != len(seeds):
            self._error('INVALID_SEEDS', 'seeds', "las semillas deben ser distintas")
        if self._value('training.batch_size') > self._value('training.replay_capacity'):
            self._error('INCONSISTENT', 'training.batch_size', "batch_size no puede superar replay_capacity")
        if self._value('network.top_k') > self._value('network.n_experts'):
            self._error('INCONSISTENT', 'network.top_k', "top_k no puede superar n_experts")
        if self._value('network.model_dim') % self._value('network.n_heads') != 0:
            self._error('INCONSISTENT', 'network.model_dim', "model_dim debe ser divisible por n_heads")
        if self._value('network.step_features') % 2 != 0:
            self._error('INCONSISTENT', 'network.step_features', "step_features debe ser par")
        if self._value('network.log_std_min') >= self._value('network.log_std_max'):
            self._error('INCONSISTENT', 'network.log_std_min', "log_std_min debe ser menor que log_std_max")
        if self._value('diffusion.beta_start') >= self._value('diffusion.beta_end'):
            self._error('INCONSISTENT', 'diffusion.beta_start', "beta_start debe ser menor que beta_end")
        if not self._value('training.uncertainty_levels'):
            self._error('INCONSISTENT', 'training.uncertainty_levels', "se requiere al menos un nivel")

    def _validate_scenario(self):
        if self.errors:
            return
        try:
            build_scenario(self.document, self.base_dir)
        except (ScenarioError, OSError, ValueError, KeyError, TypeError) as e:
            field_name = 'scenario_file' if isinstance(e, OSError) else 'scenario'
            self._error('INVALID_SCENARIO', field_name, str(e))

    def _collect_warnings(self):
        if self.errors:
            return
        if self._value('training.epochs') < self._value('training.eval_every'):
            self._warning('NO_CHECKPOINT', 'training.eval_every',
                          "eval_every supera epochs: solo habrá evaluación en la última época")
        if self._value('paradigm.mc_samples_train') < 16:
            self._warning('FEW_SAMPLES', 'paradigm.mc_samples_train',
                          "menos de 16 muestras Monte Carlo: la recompensa será ruidosa")
        if self._value('training.log_timing'):
            self._warning('TIMING_IN_METRICS', 'training.log_timing',
                          "iter_seconds en metrics.csv impide comparar corridas byte a byte")

    def get_validation_report(self):
        """Líneas legibles de errores y observaciones"""
        lines = [f"[ERROR] {e['field']}: {e['message']}" for e in self.errors]
        lines += [f"[WARNING] {w['field']}: {w['message']}" for w in self.warnings]
        return lines


# ----------------------------------------------------------------------
# construcción de la configuración
# ----------------------------------------------------------------------
@dataclass
class ExperimentSpec:
    name: str
    training: TrainingConfig
    variants: list
    paradigms: list
    seeds: list
    output_dir: str
    document: dict = field(default_factory=dict)
    path: str = None

    def __post_init__(self):
        if not SAFE_NAME.match(self.name):
            raise ConfigError('name', f"'{self.name}' no es un nombre de archivo seguro")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError('seeds', "las semillas deben ser no vacías y distintas")

    def training_for(self, variant=None, paradigm=None, seed=None):
        """TrainingConfig para una combinación (variante, paradigma, semilla)"""
        cfg = self.training
        if variant is not None:
            cfg = cfg.with_variant(variant)
        if paradigm is not None:
            cfg = replace(cfg, paradigm=replace(cfg.paradigm, paradigm=Paradigm(paradigm)))
        if seed is not None:
            cfg = cfg.with_seed(seed)
        return cfg

    @property
    def run_dir(self):
        return os.path.join(self.output_dir, self.name)


def _merged(document):
    merged = get_defaults()
    for key, value in document.items():
        if isinstance(value, dict) and key not in OBJECT_SECTIONS:
            merged.setdefault(key, {}).update(value)
        else:
            merged[key] = value
    return merged


def build_scenario(document, base_dir='.'):
    """Escenario base (archivo opcional) con las secciones en línea encima"""
    scenario_doc, uncertainty_doc = {}, {}
    path = document.get('scenario_file')
    if path:
        scenario, uncertainty = load_scenario(os.path.join(base_dir, path))
        scenario_doc, uncertainty_doc = scenario_to_dict(scenario), uncertainty_to_dict(uncertainty)
    scenario_doc.update(document.get('scenario') or {})
    uncertainty_doc.update(document.get('uncertainty') or {})
    return scenario_from_dict(scenario_doc), uncertainty_from_dict(uncertainty_doc)


def build_training_config(document, base_dir='.'):
    doc = _merged(document)
    scenario, uncertainty = build_scenario(document, base_dir)
    training = doc['training']
    net = doc['network']
    return TrainingConfig(
        epochs=training['epochs'],
        learning_rate=float(training['learning_rate']),
        batch_size=training['batch_size'],
        replay_capacity=training['replay_capacity'],
        soft_update_tau=float(training['soft_update_tau']),
        paradigm=ParadigmConfig(paradigm=doc['paradigms'][0], **doc['paradigm']),
        actor_variant=doc['variants'][0],
        master_seed=doc['seeds'][0],
        scenario=scenario,
        uncertainty=uncertainty,
        uncertainty_levels=tuple(training['uncertainty_levels']),
        randomization=RandomizationRanges(**doc['randomization']),
        diffusion=DiffusionSchedule(**doc['diffusion']),
        network=NetworkConfig(n_steps=doc['diffusion']['steps'], **net),
        state=StateScaling(**doc['state']),
        eval_every=training['eval_every'],
        eval_episodes=training['eval_episodes'],
        grad_clip_norm=training['grad_clip_norm'],
        entropy_coef=float(training['entropy_coef']),
        log_timing=bool(training['log_timing']),
    )


def load_document(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError('config', f"no existe el archivo '{path}'")
    except json.JSONDecodeError as e:
        raise ConfigError('config', f"JSON inválido en línea {e.lineno}: {e.msg}")


def experiment_from_document(document, base_dir='.', path=None):
    """Valida y construye un ExperimentSpec; ConfigError con el primer error encontrado"""
    validator = ConfigValidator(document, base_dir)
    report = validator.validate()
    for warning in report['warnings']:
        logger.warning("[CONFIG] %s: %s", warning['field'], warning['message'])
    if not report['is_valid']:
        for line in validator.get_validation_report():
            logger.debug("[CONFIG ERROR] %s", line)
        first = report['errors'][0]
        raise ConfigError(first['field'], first['message'])
    doc = _merged(document)
    return ExperimentSpec(
        name=doc['name'],
        training=build_training_config(document, base_dir),
        variants=list(doc['variants']),
        paradigms=list(doc['paradigms']),
        seeds=list(doc['seeds']),
        output_dir=doc['output_dir'],
        document=document,
        path=path,
    )


def load_experiment(path):
    document = load_document(path)
    return experiment_from_document(document, os.path.dirname(os.path.abspath(path)), path)
