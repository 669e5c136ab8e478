"""Test suite for the hotbias package."""
