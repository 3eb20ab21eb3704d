"""Narrow escape asymptotics for small elliptic windows on curved boundaries.

Modules
-------
geometry      surfaces, curvature, geodesics, window charts, measures
xray_normal   normal operator of the X-ray transform on the disk and its ellipse variants
greens_bem    Nystrom solver for the Neumann Green's function and its regular part
asymptotics   the constant C_{eps,a}, the MFPT field and its volume average
brownian_sim  Monte Carlo first passage times of reflected Brownian motion
cli           command-line entry point
"""
__version__ = "0.1.0"
