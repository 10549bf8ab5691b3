"""
Polar-domain codebooks and beam-training protocols.
"""
