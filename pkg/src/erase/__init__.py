"""EMG artifact reduction for EEG by ICA augmented with simulated-EMG reference channels."""

__version__ = "0.1.0"
