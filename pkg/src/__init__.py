"""
Source modules for dynamical quantum state tomography
"""
