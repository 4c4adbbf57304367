"""Second-order cone programming: container, interior-point solver, checks."""

from .backends import solve_file, solve_with
from .certify import CertificateReport, check_certificate
from .program import ConicProgram, read_program, write_program
from .solver import SolveResult, SolverSettings, Status, solve, solve_standard

__all__ = [
    "CertificateReport", "ConicProgram", "SolveResult", "SolverSettings", "Status",
    "check_certificate", "read_program", "solve", "solve_file", "solve_standard",
    "solve_with", "write_program",
]
