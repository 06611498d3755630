import numpy as np
import pytest
from hypothesis import strategies as st

from qvts import phon
from qvts.audio import AudioBuffer

SR = 44100

finite = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, allow_infinity=False)


@st.composite
def phon_states(draw):
    re = [draw(finite) for _ in range(2)]
    im = [draw(finite) for _ in range(2)]
    v = np.array(re) + 1j * np.array(im)
    if np.linalg.norm(v) < 1e-3:
        v = np.array([1.0, 0.0], dtype=complex)
    return phon.PhonState.from_amplitudes(*v)


@st.composite
def hermitians(draw):
    a0, ax, ay, az = (draw(st.floats(-3.0, 3.0, allow_nan=False)) for _ in range(4))
    return a0 * phon.I2 + ax * phon.SIGMA_X + ay * phon.SIGMA_Y + az * phon.SIGMA_Z


@st.composite
def densities(draw):
    v = np.array([draw(finite) for _ in range(3)])
    n = np.linalg.norm(v)
    r = draw(st.floats(0.0, 1.0))
    v = v / n * r if n > 1e-9 else np.zeros(3)
    return phon.density_from_bloch(phon.BlochVector(*v))


def tone(freq, dur=1.0, amp=0.5, sr=SR, harmonics=1):
    t = np.arange(int(dur * sr)) / sr
    y = sum(np.sin(2 * np.pi * freq * h * t) / h for h in range(1, harmonics + 1))
    return AudioBuffer(amp * y, sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
