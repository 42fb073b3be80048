"""Class-conditional Gaussian simulation family."""
