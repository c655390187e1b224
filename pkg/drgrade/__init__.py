"""Diabetic retinopathy severity grading from lesion detections.

Stages: fundus image preparation, detection I/O, per-image feature
engineering, a suite of classifiers and their evaluation.
"""
__version__ = "0.1.0"
