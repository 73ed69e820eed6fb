"""
Esquema del documento JSON de experimento para RobustBeam
Un campo por ruta con puntos; 'required', 'type', 'default', 'example', 'description' y rangos.
Los documentos con claves fuera de este esquema se rechazan.
"""
from nets import VARIANTS

PARADIGMS = ('deterministic', 'stochastic', 'chance', 'robust')

# secciones cuyo contenido se valida como objeto libre por el módulo de canal
OBJECT_SECTIONS = ('scenario', 'uncertainty')

CONFIG_SCHEMA = {
    # Experimento
    'name': {
        'required': True,
        'type': 'string',
        'example': 'smoke',
        'description': 'Nombre del experimento; se usa como nombre de carpeta (letras, dígitos, - _ .)'
    },
    'seeds': {
        'required': True,
        'type': 'list[int]',
        'example': [1, 2, 3],
        'description': 'Semillas maestras; no vacías y distintas',
        'min': 0
    },
    'variants': {
        'required': False,
        'type': 'list[string]',
        'default': ['moe_transformer_diffusion'],
        'example': ['moe_transformer_diffusion', 'mlp_diffusion'],
        'description': 'Variantes de actor a entrenar',
        'choices': VARIANTS
    },
    'paradigms': {
        'required': False,
        'type': 'list[string]',
        'default': ['stochastic'],
        'example': ['robust'],
        'description': 'Paradigmas de recompensa',
        'choices': PARADIGMS
    },
    'output_dir': {
        'required': False,
        'type': 'string',
        'default': 'runs',
        'example': 'runs/smoke',
        'description': 'Carpeta raíz de artefactos'
    },
    'scenario_file': {
        'required': False,
        'type': 'string',
        'default': None,
        'example': 'scenarios/default_scenario.json',
        'description': 'Escenario base (relativo al archivo de config); las secciones scenario/uncertainty lo sobreescriben'
    },

    # Entrenamiento
    'training.epochs': {
        'required': False, 'type': 'int', 'default': 2000, 'example': 200, 'min': 1,
        'description': 'Épocas (una interacción y un par de actualizaciones por época)'
    },
    'training.learning_rate': {
        'required': False, 'type': 'float', 'default': 1e-4, 'example': 1e-4, 'min': 0.0,
        'description': 'Tasa de aprendizaje de actor y crítico'
    },
    'training.batch_size': {
        'required': False, 'type': 'int', 'default': 64, 'example': 64, 'min': 1,
        'description': 'Tamaño de lote del replay; no mayor que replay_capacity'
    },
    'training.replay_capacity': {
        'required': False, 'type': 'int', 'default': 10000, 'example': 10000, 'min': 1,
        'description': 'Capacidad FIFO del replay'
    },
    'training.soft_update_tau': {
        'required': False, 'type': 'float', 'default': 0.005, 'example': 0.005,
        'min': 0.0, 'min_exclusive': True, 'max': 1.0,
        'description': 'Coeficiente de actualización suave del crítico objetivo'
    },
    'training.eval_every': {
        'required': False, 'type': 'int', 'default': 20, 'example': 20, 'min': 1,
        'description': 'Cadencia de evaluación en épocas'
    },
    'training.eval_episodes': {
        'required': False, 'type': 'int', 'default': 16, 'example': 16, 'min': 1,
        'description': 'Episodios por evaluación'
    },
    'training.grad_clip_norm': {
        'required': False, 'type': 'float|null', 'default': None, 'example': 10.0,
        'min': 0.0, 'min_exclusive': True,
        'description': 'Recorte de la norma global del gradiente (null = sin recorte)'
    },
    'training.entropy_coef': {
        'required': False, 'type': 'float', 'default': 0.01, 'example': 0.01, 'min': 0.0,
        'description': 'Peso del término de entropía del actor gaussiano'
    },
    'training.log_timing': {
        'required': False, 'type': 'bool', 'default': False, 'example': False,
        'description': 'Escribir iter_seconds en metrics.csv (rompe la reproducibilidad byte a byte)'
    },
    'training.uncertainty_levels': {
        'required': False, 'type': 'list[float]', 'default': [1.0], 'example': [0.0, 1.0, 2.0, 4.0], 'min': 0.0,
        'description': 'Múltiplos de incertidumbre muestreados por episodio'
    },

    # Paradigma
    'paradigm.c_eve': {
        'required': False, 'type': 'float', 'default': 3.0, 'example': 3.0, 'min': 0.0, 'min_exclusive': True,
        'description': 'Umbral de capacidad de Eve (bits/s/Hz)'
    },
    'paradigm.p_eve': {
        'required': False, 'type': 'float', 'default': 0.70, 'example': 0.70,
        'min': 0.0, 'max': 1.0, 'min_exclusive': True, 'max_exclusive': True,
        'description': 'Probabilidad mínima de cumplir el umbral (paradigma chance)'
    },
    'paradigm.mc_samples_train': {
        'required': False, 'type': 'int', 'default': 64, 'example': 64, 'min': 1,
        'description': 'Muestras Monte Carlo por recompensa de entrenamiento'
    },
    'paradigm.mc_samples_eval': {
        'required': False, 'type': 'int', 'default': 256, 'example': 256, 'min': 1,
        'description': 'Muestras Monte Carlo por recompensa de evaluación'
    },
    'paradigm.temperature': {
        'required': False, 'type': 'float', 'default': 0.01, 'example': 0.01, 'min': 0.0, 'min_exclusive': True,
        'description': 'Temperatura del hinge suavizado'
    },

    # Escenario e incertidumbre (objetos validados por el módulo de canal)
    'scenario': {
        'required': False, 'type': 'object', 'default': {},
        'example': {'uav_position_m': [50.0, 0.0, 100.0]},
        'description': 'Geometría y potencia (ver docs/CONFIG_SCHEMA.md)'
    },
    'uncertainty': {
        'required': False, 'type': 'object', 'default': {},
        'example': {'position_sigma_m': 2.0},
        'description': 'Desviaciones de incertidumbre'
    },

    # Aleatorización de escenarios
    'randomization.horizontal_m': {
        'required': False, 'type': 'float', 'default': 20.0, 'example': 20.0, 'min': 0.0,
        'description': 'Semiancho horizontal de la caja de posiciones'
    },
    'randomization.vertical_m': {
        'required': False, 'type': 'float', 'default': 30.0, 'example': 30.0, 'min': 0.0,
        'description': 'Semiancho vertical de la caja de posiciones'
    },

    # Difusión
    'diffusion.steps': {
        'required': False, 'type': 'int', 'default': 6, 'example': 6, 'min': 1,
        'description': 'Pasos de la cadena inversa'
    },
    'diffusion.beta_start': {
        'required': False, 'type': 'float', 'default': 1e-4, 'example': 1e-4,
        'min': 0.0, 'max': 1.0, 'min_exclusive': True, 'max_exclusive': True,
        'description': 'Primer beta del calendario lineal'
    },
    'diffusion.beta_end': {
        'required': False, 'type': 'float', 'default': 0.2, 'example': 0.2,
        'min': 0.0, 'max': 1.0, 'min_exclusive': True, 'max_exclusive': True,
        'description': 'Último beta del calendario lineal'
    },

    # Redes
    'network.model_dim': {
        'required': False, 'type': 'int', 'default': 256, 'example': 256, 'min': 1,
        'description': 'Ancho del transformer; divisible por n_heads'
    },
    'network.n_heads': {
        'required': False, 'type': 'int', 'default': 4, 'example': 4, 'min': 1,
        'description': 'Cabezas de atención'
    },
    'network.n_blocks': {
        'required': False, 'type': 'int', 'default': 2, 'example': 2, 'min': 1,
        'description': 'Bloques del transformer'
    },
    'network.n_experts': {
        'required': False, 'type': 'int', 'default': 4, 'example': 4, 'min': 1,
        'description': 'Expertos por capa MoE'
    },
    'network.top_k': {
        'required': False, 'type': 'int', 'default': 2, 'example': 2, 'min': 1,
        'description': 'Expertos activos por token'
    },
    'network.expert_hidden': {
        'required': False, 'type': 'int', 'default': 512, 'example': 512, 'min': 1,
        'description': 'Ancho interno de cada experto'
    },
    'network.mlp_hidden': {
        'required': False, 'type': 'int', 'default': 256, 'example': 256, 'min': 1,
        'description': 'Ancho del actor MLP y del actor gaussiano'
    },
    'network.critic_hidden': {
        'required': False, 'type': 'int', 'default': 256, 'example': 256, 'min': 1,
        'description': 'Ancho de los críticos'
    },
    'network.step_features': {
        'required': False, 'type': 'int', 'default': 16, 'example': 16, 'min': 2,
        'description': 'Dimensión del código sinusoidal del paso (par)'
    },
    'network.log_std_min': {
        'required': False, 'type': 'float', 'default': -5.0, 'example': -5.0,
        'description': 'Piso del log-desvío gaussiano'
    },
    'network.log_std_max': {
        'required': False, 'type': 'float', 'default': 2.0, 'example': 2.0,
        'description': 'Techo del log-desvío gaussiano'
    },
    'network.balance_coef': {
        'required': False, 'type': 'float', 'default': 0.01, 'example': 0.01, 'min': 0.0,
        'description': 'Peso de la pérdida de balance MoE'
    },

    # Estandarización del estado
    'state.channel_scale': {
        'required': False, 'type': 'float', 'default': 6e-5, 'example': 6e-5, 'min': 0.0, 'min_exclusive': True,
        'description': 'Escala de las entradas de canal'
    },
    'state.position_sigma_scale': {
        'required': False, 'type': 'float', 'default': 2.0, 'example': 2.0, 'min': 0.0, 'min_exclusive': True,
        'description': 'Escala de la sigma de posición'
    },
    'state.csi_sigma_scale': {
        'required': False, 'type': 'float', 'default': 0.05, 'example': 0.05, 'min': 0.0, 'min_exclusive': True,
        'description': 'Escala de la sigma de CSI'
    },
    'state.aoa_sigma_scale': {
        'required': False, 'type': 'float', 'default': 0.02, 'example': 0.02, 'min': 0.0, 'min_exclusive': True,
        'description': 'Escala de la sigma de ángulo'
    },
}


def get_required_fields():
    """Retorna lista de campos obligatorios"""
    return [name for name, spec in CONFIG_SCHEMA.items() if spec['required']]


def get_optional_fields():
    return [name for name, spec in CONFIG_SCHEMA.items() if not spec['required']]


def get_all_fields():
    return list(CONFIG_SCHEMA.keys())


def get_field_spec(field_name):
    """Retorna especificación de un campo; None si no existe"""
    return CONFIG_SCHEMA.get(field_name)


def get_sections():
    """Secciones anidadas del documento (prefijo antes del punto)"""
    sections = {name.split('.')[0] for name in CONFIG_SCHEMA if '.' in name}
    return sorted(sections)


def get_section_fields(section):
    return [name.split('.', 1)[1] for name in CONFIG_SCHEMA if name.startswith(section + '.')]


def get_defaults():
    """Documento con todos los valores por defecto (sin los campos obligatorios)"""
    doc = {}
    for name, spec in CONFIG_SCHEMA.items():
        if spec['required']:
            continue
        if '.' in name:
            section, key = name.split('.', 1)
            doc.setdefault(section, {})[key] = spec['default']
        else:
            doc[name] = spec['default']
    return doc
