"""Test suite for ucplab."""
