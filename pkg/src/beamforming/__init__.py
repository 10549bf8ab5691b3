"""
Element-wise RIS beamforming.
"""
