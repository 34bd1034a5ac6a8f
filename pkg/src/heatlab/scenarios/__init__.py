"""Bundled scenario configs (*.cfg), shipped as package data."""
