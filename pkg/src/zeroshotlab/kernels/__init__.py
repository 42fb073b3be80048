"""Kernels, Gram matrices and spectral filters."""
