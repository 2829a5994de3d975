"""
Coded error types for the hybrid RL toolkit.

Every error carries a payload dict ``{'code': ..., 'message': ...}`` as its
first argument so callers can branch on ``err.code`` or log ``err.args[0]``.
"""


class HybridRLError(ValueError):
    """Base error with a machine-readable code"""

    default_code = 'ERR-500'

    def __init__(self, message, code=None):
        self.code = code or self.default_code
        self.message = message
        super().__init__({'code': self.code, 'message': message})

    def __str__(self):
        return f"[{self.code}] {self.message}"


class ConfigError(HybridRLError):
    default_code = 'CFG-400'


class BiasDomainError(HybridRLError):
    default_code = 'BIAS-400'


class ShapeError(HybridRLError):
    default_code = 'NN-400'


class StaleTraceError(HybridRLError):
    default_code = 'NN-409'


class NonFiniteError(HybridRLError):
    default_code = 'NN-500'


class EpisodeError(HybridRLError):
    default_code = 'ENV-409'


class ReplayError(HybridRLError):
    default_code = 'BUF-400'


class NormalizerError(HybridRLError):
    default_code = 'NORM-409'


class AggregationError(HybridRLError):
    default_code = 'AGG-409'


class EvaluationError(HybridRLError):
    default_code = 'EVAL-400'


class DivergenceError(HybridRLError):
    default_code = 'RUN-500'
