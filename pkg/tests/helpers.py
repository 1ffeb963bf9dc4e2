"""Structured sensing matrices with small, exactly enumerable RICs.

Gaussian matrices at enumerable sizes (N <= 16) have delta_{R+K} >= 1, which
makes the worst-case bounds vacuous. Rotating an identity augmented by a few
flat orthogonal columns keeps the RIC (rotation invariant) but well below 1.
"""

import numpy as np


def paley_hadamard12() -> np.ndarray:
    q = 11
    residues = {(i * i) % q for i in range(1, q)}
    chi = lambda x: 0 if x % q == 0 else (1 if x % q in residues else -1)
    S = np.zeros((12, 12))
    S[0, 1:] = 1
    S[1:, 0] = -1
    S[1:, 1:] = [[chi(j - i) for j in range(q)] for i in range(q)]
    return np.eye(12) + S


def random_orthogonal(n: int, rng) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def hadamard_augmented(rng, n_extra: int = 4) -> np.ndarray:
    """12 x (12 + n_extra): rotated ``[I | H12[:, :n_extra] / sqrt(12)]``."""
    E = paley_hadamard12()[:, :n_extra] / np.sqrt(12)
    return random_orthogonal(12, rng) @ np.hstack([np.eye(12), E])


def sign_augmented(M: int, rng) -> np.ndarray:
    """M x (M + 1): rotated ``[I | s / sqrt(M)]`` with a random sign vector s.

    ``delta_s = sqrt((s - 1) / M)`` for ``s >= 2``.
    """
    s = rng.choice([-1.0, 1.0], size=(M, 1)) / np.sqrt(M)
    return random_orthogonal(M, rng) @ np.hstack([np.eye(M), s])


ACCEPTANCE_LINES: list = []


def report(tag: str, ok: bool, detail: str) -> bool:
    line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
