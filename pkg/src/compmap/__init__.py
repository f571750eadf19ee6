"""Cryptanalysis workbench for a chaotic image cipher built on two composition maps."""
from . import attack, chaos, cipher, diffusion, fileio, randomness
from .attack import EquivalentKey, InProcessOracle, decrypt_with_equivalent, run_differential_attack
from .cipher import PUBLISHED_KEY, SecretKey, decrypt, encrypt, sample_key
from .errors import CompmapError

__version__ = "0.1.0"
