"""Hybrid physics-based / learning-based classification with two wireless case studies."""

__version__ = "0.1.0"
