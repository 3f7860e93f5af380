"""Indices, degrees, spectra, braids and knot verdicts."""
