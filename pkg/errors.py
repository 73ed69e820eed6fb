"""
Excepciones del proyecto RobustBeam
Cada error lleva el contexto que el CLI necesita para elegir el código de salida
"""


class ConfigError(ValueError):
    """Configuración inválida. `field` es la ruta con puntos del campo (ej. 'paradigm.p_eve')"""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ScenarioError(ValueError):
    """Geometría o potencia fuera de rango"""


class GraphError(ValueError):
    """Uso incorrecto del grafo de diferenciación"""


class ShapeError(GraphError):
    """Dimensiones incompatibles entre nodos"""


class NumericalAbort(RuntimeError):
    """Valor no finito durante el entrenamiento (pérdida, recompensa o transición)"""

    def __init__(self, epoch, loss_name, value):
        self.epoch = epoch
        self.loss_name = loss_name
        self.value = value
        where = '' if epoch is None else f" en la época {epoch}"
        super().__init__(f"{loss_name} no finita ({value}){where}")
