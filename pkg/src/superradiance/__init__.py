"""Single-photon superradiance of dilute Gaussian atomic clouds.

Coupled-dipole (vector) model of a cloud holding at most one excitation,
with pulsed coherent or incoherent drive, polarization-resolved far-field
detection and an analytic single-scattering random-walk comparison.

Units: lengths in lambda / 2 pi, frequencies in gamma (measured from the
atomic resonance), times in 1 / gamma.
"""
__version__ = "0.1.0"
