"""Brute-force validators: density-matrix purification, path enumeration, LP vertices.

These are deliberately slow, independent re-derivations used by the test
suite to pin expected values. They are shipped so the checks can be re-run
against any future change; size guards keep them at desk scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .quantum_math import BellDiagonalState

_SQRT2 = 1.0 / np.sqrt(2.0)
# Bell basis vectors in the (phi+, psi+, psi-, phi-) order used package-wide.
_BELL = np.array(
    [
        [_SQRT2, 0.0, 0.0, _SQRT2],
        [0.0, _SQRT2, _SQRT2, 0.0],
        [0.0, _SQRT2, -_SQRT2, 0.0],
        [_SQRT2, 0.0, 0.0, -_SQRT2],
    ],
    dtype=complex,
)


@dataclass
class TwoPairState:
    """Dense 16-dim density operator over two Bell pairs, qubit order (A1,B1,A2,B2)."""

    matrix: np.ndarray

    def validate(self, psd_tol=1e-10):
        m = self.matrix
        if m.shape != (16, 16):
            raise ValueError(f"expected 16x16 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("state is not Hermitian")
        if abs(np.trace(m).real - 1.0) > 1e-12:
            raise ValueError(f"trace is {np.trace(m).real!r}, not 1")
        if np.min(np.linalg.eigvalsh(m)) < -psd_tol:
            raise ValueError("state is not positive semidefinite")


def _bell_diag_matrix(state: BellDiagonalState) -> np.ndarray:
    rho = np.zeros((4, 4), dtype=complex)
    for coeff, vec in zip(state.coefficients, _BELL):
        rho += coeff * np.outer(vec, vec.conj())
    return rho


def _rx(theta):
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _cnot16(control, target):
    """CNOT permutation on 4 qubits, qubit 0 most significant."""
    U = np.zeros((16, 16))
    for i in range(16):
        bits = [(i >> (3 - k)) & 1 for k in range(4)]
        if bits[control]:
            bits[target] ^= 1
        j = sum(b << (3 - k) for k, b in enumerate(bits))
        U[j, i] = 1.0
    return U


def simulate_purification(state_a: BellDiagonalState, state_b: BellDiagonalState):
    """Full two-pair circuit simulation of one purification round.

    Builds the 16-dim joint state, applies Rx(pi/2) on Alice's qubits and
    Rx(-pi/2) on Bob's, a bilateral CNOT from the kept pair onto the
    sacrificial pair, measures the sacrificial pair in Z, post-selects
    coincident outcomes, and projects the kept pair to Bell-diagonal form.

    Returns (BellDiagonalState, success probability).
    """
    rho = TwoPairState(np.kron(_bell_diag_matrix(state_a), _bell_diag_matrix(state_b)))
    rho.validate()
    ua, ub = _rx(np.pi / 2.0), _rx(-np.pi / 2.0)
    U = np.kron(np.kron(ua, ub), np.kron(ua, ub))
    m = U @ rho.matrix @ U.conj().T
    if abs(np.trace(m).real - 1.0) > 1e-12:
        raise ArithmeticError("trace drifted during rotation")
    C = _cnot16(0, 2) @ _cnot16(1, 3)
    m = C @ m @ C.conj().T
    if abs(np.trace(m).real - 1.0) > 1e-12:
        raise ArithmeticError("trace drifted during CNOT")

    # keep the (A1,B1) block where qubits (A2,B2) read 00 or 11
    kept = np.zeros((4, 4), dtype=complex)
    for outcome in (0b00, 0b11):
        idx = [(i << 2) | outcome for i in range(4)]
        kept += m[np.ix_(idx, idx)]
    p = np.trace(kept).real
    if p < 1e-12:
        raise ArithmeticError(f"post-selection probability {p!r} too small")
    kept /= p
    coeffs = np.array([np.real(v.conj() @ kept @ v) for v in _BELL])
    # the circuit maps Bell-diagonal inputs to Bell-diagonal outputs; the
    # projection only strips numerical fuzz
    residual = kept - sum(c * np.outer(v, v.conj()) for c, v in zip(coeffs, _BELL))
    if np.max(np.abs(residual)) > 1e-10:
        raise ArithmeticError("output unexpectedly far from Bell-diagonal")
    coeffs = np.clip(coeffs, 0.0, None)
    coeffs /= coeffs.sum()
    return BellDiagonalState(tuple(coeffs)), float(p)


def enumerate_simple_paths(graph, src, dst, max_hops):
    """All simple src->dst paths with at most max_hops links, as node-id tuples."""
    if max_hops > 8:
        raise ValueError(f"max_hops {max_hops} exceeds the desk-scale guard of 8")
    if src not in graph.node_by_id or dst not in graph.node_by_id:
        raise ValueError("src/dst must exist in the graph")
    paths = []

    def walk(node, visited, trail):
        if len(trail) - 1 > max_hops:
            return
        if node == dst:
            paths.append(tuple(trail))
            return
        for nbr, _ in graph.adjacency[node]:
            if nbr not in visited:
                visited.add(nbr)
                trail.append(nbr)
                walk(nbr, visited, trail)
                trail.pop()
                visited.remove(nbr)

    walk(src, {src}, [src])
    return sorted(paths, key=lambda p: (len(p), p))


def brute_force_lp(objective, row_coeffs, row_bounds):
    """Vertex-enumeration optimum of: maximize c.x s.t. A x <= b, x >= 0.

    Enumerates every intersection of n constraint hyperplanes drawn from the
    rows of A plus the coordinate planes x_i = 0, keeps the feasible ones,
    and returns (best objective, argmax vertex) or (None, None) if the
    feasible set is empty. Guarded to <= 6 variables and <= 10 rows.
    """
    c = np.asarray(objective, dtype=float)
    A = np.asarray(row_coeffs, dtype=float).reshape(len(row_bounds), len(c))
    b = np.asarray(row_bounds, dtype=float)
    n = len(c)
    m = len(b)
    if n > 6:
        raise ValueError(f"{n} variables exceeds the brute-force guard of 6")
    if m > 10:
        raise ValueError(f"{m} constraints exceeds the brute-force guard of 10")

    # stack A with the nonnegativity planes -x_i <= 0
    full = np.vstack([A, -np.eye(n)])
    rhs = np.concatenate([b, np.zeros(n)])
    tol = 1e-9
    best_val, best_x = None, None
    for combo in itertools.combinations(range(m + n), n):
        M = full[list(combo)]
        r = rhs[list(combo)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, r)
        if np.any(x < -tol):
            continue
        if np.any(full @ x > rhs + tol):
            continue
        val = float(c @ x)
        if best_val is None or val > best_val:
            best_val, best_x = val, np.clip(x, 0.0, None)
    return best_val, best_x
