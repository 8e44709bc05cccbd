"""Regularized inversion of a kernel-weighted complex autoconvolution."""
