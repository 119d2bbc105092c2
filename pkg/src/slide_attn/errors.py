"""Exception types raised across the package."""


class SlideAttnError(Exception):
    pass


class ShapeError(SlideAttnError, ValueError):
    """Tensor ranks or dimensions do not line up."""


class ConfigError(SlideAttnError, ValueError):
    """Invalid configuration value (even window size, bad head split, ...)."""


class StateError(SlideAttnError, RuntimeError):
    """Operation called on an object in the wrong lifecycle state."""


class NumericError(SlideAttnError, ArithmeticError):
    """A function evaluation produced NaN or Inf."""
