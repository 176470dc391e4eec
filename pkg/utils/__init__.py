"""
Utility module for hedgekit.
Contains shared numerical helpers.
"""
