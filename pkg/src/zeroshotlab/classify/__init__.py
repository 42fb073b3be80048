"""Zero-shot scoring and decoding."""
