"""melvox: mel-spectrogram-to-waveform GAN vocoder on a numpy autodiff core."""

__version__ = "0.1.0"
