"""Sliding surfaces for periodic orbits built from a real Floquet factorization of the transverse dynamics."""
