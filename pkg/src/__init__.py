"""
Robust recovery of spectrally sparse signals from sparse corruptions (ASAP).
"""
