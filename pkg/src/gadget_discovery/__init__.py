"""Gadget discovery: mine frequent compact action patterns from agent data and cluster them."""

__version__ = "0.1.0"
