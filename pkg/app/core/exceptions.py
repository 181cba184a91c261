"""
Custom exception classes
Every failure carries the process exit code the CLI reports for it
"""

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4
EXIT_IO = 5


class AppException(Exception):
    """Base application exception"""
    def __init__(self, detail: str, exit_code: int = 1, error_code: str = "APP_ERROR"):
        self.detail = detail
        self.exit_code = exit_code
        self.error_code = error_code
        super().__init__(detail)

    def __str__(self) -> str:
        return f"[{self.error_code}] {self.detail}"


class DomainError(AppException):
    """Input violates a mathematical precondition"""
    def __init__(self, detail: str = "Domain error", error_code: str = "DOMAIN_ERROR"):
        super().__init__(detail=detail, exit_code=EXIT_DOMAIN, error_code=error_code)


class NumericalError(AppException):
    """A numerical routine failed to deliver a certified result"""
    def __init__(self, detail: str = "Numerical failure", error_code: str = "NUMERICAL_ERROR"):
        super().__init__(detail=detail, exit_code=EXIT_NUMERICAL, error_code=error_code)


class ConfigParseError(AppException):
    """Job configuration could not be parsed or validated"""
    def __init__(self, detail: str = "Invalid job configuration"):
        super().__init__(detail=detail, exit_code=EXIT_CONFIG, error_code="CONFIG_PARSE")


class IoError(AppException):
    """Reading inputs or writing results failed"""
    def __init__(self, detail: str = "I/O failure"):
        super().__init__(detail=detail, exit_code=EXIT_IO, error_code="IO_ERROR")


# Domain errors

class DimensionMismatch(DomainError):
    def __init__(self, detail: str = "Matrix dimensions are inconsistent"):
        super().__init__(detail=detail, error_code="DIMENSION_MISMATCH")


class AsymmetricMatrix(DomainError):
    def __init__(self, detail: str = "Matrix is not symmetric within tolerance"):
        super().__init__(detail=detail, error_code="ASYMMETRIC_MATRIX")


class InvalidOption(DomainError):
    def __init__(self, detail: str = "Invalid option"):
        super().__init__(detail=detail, error_code="INVALID_OPTION")


class NotSchurStable(DomainError):
    def __init__(self, detail: str = "Matrix is not Schur stable"):
        super().__init__(detail=detail, error_code="NOT_SCHUR_STABLE")


class NotHurwitzStable(DomainError):
    def __init__(self, detail: str = "Matrix is not Hurwitz stable"):
        super().__init__(detail=detail, error_code="NOT_HURWITZ_STABLE")


class NotStabilizable(DomainError):
    def __init__(self, detail: str = "Pair (A, B) is not stabilizable"):
        super().__init__(detail=detail, error_code="NOT_STABILIZABLE")


class DestabilizingGain(DomainError):
    """The prescribed gain does not stabilize the plant, so no LQR cost can reproduce it"""
    def __init__(self, detail: str = "Prescribed gain is not stabilizing"):
        super().__init__(detail=detail, error_code="DESTABILIZING_GAIN")


class SPolicyInfeasible(DomainError):
    def __init__(self, detail: str = "No matching cost exists under the requested S policy"):
        super().__init__(detail=detail, error_code="S_POLICY_INFEASIBLE")


class GammaNotSPD(DomainError):
    def __init__(self, detail: str = "Tuning matrix Gamma must be symmetric positive definite"):
        super().__init__(detail=detail, error_code="GAMMA_NOT_SPD")


class RbarTooSmall(DomainError):
    def __init__(self, detail: str = "Rbar does not dominate Sbar Qbar^-1 Sbar^T"):
        super().__init__(detail=detail, error_code="RBAR_TOO_SMALL")


class ProvisoViolated(DomainError):
    def __init__(self, detail: str = "P1 + B^T P2 B + R + B^T P B is not positive definite"):
        super().__init__(detail=detail, error_code="PROVISO_VIOLATED")


class NotSiso(DomainError):
    def __init__(self, detail: str = "Operation requires a single-input single-output model"):
        super().__init__(detail=detail, error_code="NOT_SISO")


class MissingOutputMap(DomainError):
    def __init__(self, detail: str = "System has no output matrix"):
        super().__init__(detail=detail, error_code="MISSING_OUTPUT_MAP")


class SingularDcGain(DomainError):
    def __init__(self, detail: str = "Closed-loop DC gain is singular"):
        super().__init__(detail=detail, error_code="SINGULAR_DC_GAIN")


class EmptyPolyhedron(DomainError):
    def __init__(self, detail: str = "Polyhedron is empty"):
        super().__init__(detail=detail, error_code="EMPTY_POLYHEDRON")


class NotPositiveDefinite(DomainError):
    def __init__(self, detail: str = "Matrix is not positive definite"):
        super().__init__(detail=detail, error_code="NOT_POSITIVE_DEFINITE")


class EmptyTerminalSet(DomainError):
    def __init__(self, detail: str = "Terminal set is empty"):
        super().__init__(detail=detail, error_code="EMPTY_TERMINAL_SET")


class InfeasibleInitialState(DomainError):
    def __init__(self, detail: str = "MPC problem is infeasible for the given initial state"):
        super().__init__(detail=detail, error_code="INFEASIBLE_INITIAL_STATE")


class InfeasibleTrajectory(DomainError):
    def __init__(self, detail: str = "Trajectory does not satisfy the dynamics"):
        super().__init__(detail=detail, error_code="INFEASIBLE_TRAJECTORY")


class SingularWeight(DomainError):
    def __init__(self, detail: str = "Estimator weight is not positive definite"):
        super().__init__(detail=detail, error_code="SINGULAR_WEIGHT")


class InfeasibleWindow(DomainError):
    def __init__(self, detail: str = "Moving horizon problem is infeasible"):
        super().__init__(detail=detail, error_code="INFEASIBLE_WINDOW")


class NoFeasibleGamma(DomainError):
    def __init__(self, detail: str = "No attenuation level yields a feasible H-infinity filter"):
        super().__init__(detail=detail, error_code="NO_FEASIBLE_GAMMA")


class SamplingMismatch(DomainError):
    def __init__(self, detail: str = "Sampling intervals do not agree"):
        super().__init__(detail=detail, error_code="SAMPLING_MISMATCH")


class UnknownExample(DomainError):
    def __init__(self, detail: str = "Unknown example name"):
        super().__init__(detail=detail, error_code="UNKNOWN_EXAMPLE")


# Numerical errors

class NoConvergence(NumericalError):
    def __init__(self, detail: str = "Solver did not reach the residual bound"):
        super().__init__(detail=detail, error_code="NO_CONVERGENCE")


class NoStabilizingSolution(NumericalError):
    def __init__(self, detail: str = "No stabilizing Riccati solution found"):
        super().__init__(detail=detail, error_code="NO_STABILIZING_SOLUTION")


class EigenFailure(NumericalError):
    def __init__(self, detail: str = "Eigenvalue computation failed"):
        super().__init__(detail=detail, error_code="EIGEN_FAILURE")


class NumericalFailure(NumericalError):
    def __init__(self, detail: str = "Numerical failure"):
        super().__init__(detail=detail, error_code="NUMERICAL_FAILURE")


class SdpInfeasible(NumericalError):
    def __init__(self, detail: str = "SDP solver reported infeasibility"):
        super().__init__(detail=detail, error_code="SDP_INFEASIBLE")


class MatchVerificationFailed(NumericalError):
    def __init__(self, detail: str = "Matched cost does not reproduce the prescribed gain"):
        super().__init__(detail=detail, error_code="MATCH_VERIFICATION_FAILED")


class NotFinitelyDetermined(NumericalError):
    def __init__(self, detail: str = "Invariant set iteration did not terminate"):
        super().__init__(detail=detail, error_code="NOT_FINITELY_DETERMINED")


class LpInfeasible(NumericalError):
    def __init__(self, detail: str = "Linear program is infeasible"):
        super().__init__(detail=detail, error_code="LP_INFEASIBLE")


class LpUnbounded(NumericalError):
    def __init__(self, detail: str = "Linear program is unbounded"):
        super().__init__(detail=detail, error_code="LP_UNBOUNDED")


class QpInfeasible(NumericalError):
    def __init__(self, detail: str = "Quadratic program is infeasible"):
        super().__init__(detail=detail, error_code="QP_INFEASIBLE")


class QpInfeasibleAtIterate(NumericalError):
    def __init__(self, detail: str = "SQP subproblem is infeasible"):
        super().__init__(detail=detail, error_code="QP_INFEASIBLE_AT_ITERATE")


class MaxIterations(NumericalError):
    def __init__(self, detail: str = "Iteration limit reached"):
        super().__init__(detail=detail, error_code="MAX_ITERATIONS")


class SingularInnovation(NumericalError):
    def __init__(self, detail: str = "Innovation covariance is singular"):
        super().__init__(detail=detail, error_code="SINGULAR_INNOVATION")


class PlantBlowup(NumericalError):
    def __init__(self, detail: str = "Plant state norm exceeded the blow-up bound"):
        super().__init__(detail=detail, error_code="PLANT_BLOWUP")
