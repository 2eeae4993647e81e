"""Constraint operators of the key-rate semidefinite program, for external solvers.

The joint space is ``A (x) B`` where the A register carries the orthonormal
label basis ``{|psi_k>}`` (dimension M) and B is the truncated Fock space.
Kronecker ordering is ``index = k * dim + n``.

Text format written by :func:`write_operator_bundle`::

    # cvqkd-loia operator bundle v1
    %%operator <name> <rows> <cols>
    <re> <im> <re> <im> ...      (one line per row, row-major)
    ...

Floats use 17 significant digits so a round trip is exact.
"""

from dataclasses import dataclass

import numpy as np

from . import fock
from .constellation import fock_model, protocol_quantities
from .errors import InvalidInputError

BUNDLE_HEADER = "# cvqkd-loia operator bundle v1"
DEFAULT_MAX_ENTRIES = 2**24


@dataclass(frozen=True)
class SDPConstraints:
    """Constraint operators; all are Hermitian.

    ``tau_bar`` is the reduced-state target written in the Fock basis.
    ``rho_A_gram`` is the same constraint expressed in the ``{|psi_k>}``
    label basis (the Gram matrix ``sqrt(p_j p_k) <alpha_k|alpha_j>``), which
    is the representation the other operators act on.
    """

    tau_bar: np.ndarray
    rho_A_gram: np.ndarray
    pi_nb: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    M: int
    dim: int

    def as_dict(self):
        return {"tau_bar": self.tau_bar, "rho_A_gram": self.rho_A_gram,
                "pi_nb": self.pi_nb, "C1": self.C1, "C2": self.C2}


def build_sdp_constraints(constellation, dim=None, max_entries=DEFAULT_MAX_ENTRIES):
    pq = protocol_quantities(constellation, dim)
    dim = pq.dim
    M = constellation.size
    if (M * dim) ** 2 > max_entries:
        raise InvalidInputError(
            f"joint operators would have {(M * dim) ** 2} entries (M={M}, dim={dim}); "
            f"limit is {max_entries}")
    model = fock_model(constellation, dim)
    b = fock.annihilation(dim)
    projectors = np.eye(M)
    c1_weights = np.conj(pq.first_moments)
    c2_weights = np.conj(constellation.alphas)
    C1 = np.kron(np.diag(c1_weights), b)
    C2 = np.kron(np.diag(c2_weights), b)
    vecs = model.vectors
    sp = np.sqrt(constellation.probs)
    gram = (sp[:, None] * sp[None, :]) * (vecs.T @ vecs.conj())
    return SDPConstraints(
        tau_bar=model.tau.conj().copy(),
        rho_A_gram=0.5 * (gram + gram.conj().T),
        pi_nb=np.kron(projectors, b.conj().T @ b),
        C1=C1 + C1.conj().T,
        C2=C2 + C2.conj().T,
        M=M, dim=dim)


def entangled_state(constellation, dim=None):
    """``sum_k sqrt(p_k) |psi_k> |alpha_k>`` as a vector on the joint space."""
    dim = constellation.default_dim() if dim is None else dim
    vecs = fock.coherent_matrix(constellation.alphas, dim)
    M = constellation.size
    phi = np.zeros(M * dim, dtype=complex)
    for k, p in enumerate(constellation.probs):
        phi[k * dim:(k + 1) * dim] = np.sqrt(p) * vecs[:, k]
    return phi


def write_operator_bundle(bundle, path):
    """Write named complex matrices in the documented text format."""
    ops = bundle.as_dict() if hasattr(bundle, "as_dict") else dict(bundle)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(BUNDLE_HEADER + "\n")
        for name, mat in ops.items():
            mat = np.asarray(mat, dtype=complex)
            fh.write(f"%%operator {name} {mat.shape[0]} {mat.shape[1]}\n")
            for row in mat:
                pairs = np.column_stack([row.real, row.imag]).ravel()
                fh.write(" ".join(format(v, ".17g") for v in pairs) + "\n")


def read_operator_bundle(path):
    ops = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != BUNDLE_HEADER:
            raise InvalidInputError(f"not an operator bundle: {header!r}")
        line = fh.readline()
        while line:
            parts = line.split()
            if not parts or parts[0] != "%%operator":
                raise InvalidInputError(f"malformed operator header: {line!r}")
            name, rows, cols = parts[1], int(parts[2]), int(parts[3])
            data = np.empty((rows, cols), dtype=complex)
            for r in range(rows):
                vals = np.array(fh.readline().split(), dtype=float)
                if vals.size != 2 * cols:
                    raise InvalidInputError(f"row {r} of {name} has {vals.size} values, expected {2 * cols}")
                data[r] = vals[0::2] + 1j * vals[1::2]
            ops[name] = data
            line = fh.readline()
    return ops
