"""
Power-scaling and degrees-of-freedom analyses.
"""
