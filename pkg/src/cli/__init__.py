"""
Command-line runner: config loading, CSV output and the entry point.
"""
