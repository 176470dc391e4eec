"""
Configuration module for hedgekit.
Manages solver tolerances, hedge defaults and system settings.
"""
