"""Real-time speech-assistant transport, DSP and evaluation toolkit."""

__version__ = "0.1.0"
