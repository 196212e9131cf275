"""Command line, file formats, the mock solver and verification checks."""
