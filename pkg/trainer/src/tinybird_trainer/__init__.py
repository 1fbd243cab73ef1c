"""Training side of the syllable pipeline: fits the detector perceptron and
the conv+FC classifier on a labeled synthetic corpus, quantizes both to
int8, and exports a .tbm weight file the streaming toolkit loads."""

__version__ = "0.1.0"
