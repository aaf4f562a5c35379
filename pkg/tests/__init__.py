"""
Tests Package
Contains unit tests and command-level tests for the geodesic mapping toolkit
"""
