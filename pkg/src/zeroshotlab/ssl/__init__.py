"""Self-supervised objectives and the toy encoder trainer."""
