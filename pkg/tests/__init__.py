"""Test suite for fedge-energy"""
