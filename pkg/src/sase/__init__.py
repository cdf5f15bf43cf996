"""Case-based self-adaptation engine."""
