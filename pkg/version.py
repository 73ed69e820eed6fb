# RobustBeam Versión
__version__ = "2.0.0"
