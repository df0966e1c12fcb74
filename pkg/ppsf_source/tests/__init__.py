"""Test suite for the PPSF source toolkit."""
