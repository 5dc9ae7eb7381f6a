"""accent-forge: accent-based TTS data expansion and cross-lingual EER
evaluation toolkit for speech anti-spoofing."""

__version__ = "0.1.0"
