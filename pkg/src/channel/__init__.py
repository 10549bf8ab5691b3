"""
Geometry, channel links and the continuous metasurface model.
"""
