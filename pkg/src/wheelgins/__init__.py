"""GNSS / wheel-mounted IMU integrated navigation with online installation calibration."""

__version__ = "0.1.0"
