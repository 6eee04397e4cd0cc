"""NIR spectral calibration toolkit.

Preprocessing, correlation-ranked wavelength selection, PLS and MLP
regressors, repeated k-fold evaluation and grid tuning for predicting
storage time from short-wave near-infrared spectra.
"""

__version__ = "0.1.0"
