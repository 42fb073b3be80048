"""Exact population quantities on finite alphabets."""
