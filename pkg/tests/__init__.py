"""Test suite for zeroshotlab."""
