"""2x2 MIMO-OFDM link simulator with LS, LMMSE and DNN-aided channel estimation."""

__version__ = "0.1.0"
