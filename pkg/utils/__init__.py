"""
Utility modules for config files and report export
"""
