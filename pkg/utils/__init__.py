"""
Formatting, validation and error types shared by the toolkit.
"""
