"""Next-day hourly temperature forecasting from multi-city weather observations."""

__version__ = "0.1.0"
