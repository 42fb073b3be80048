"""Prompt strategies over (label, caption) pairs."""
