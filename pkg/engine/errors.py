# errors.py - 谱计算引擎的异常层次
#
# ValidationError     -> 输入错误或请求被拒绝 (命令行退出码 1)
# NumericalCheckError -> 数值自检失败         (命令行退出码 2)


class QuantumGraphError(Exception):
    """引擎抛出的所有异常的基类"""

    exit_code = 1


class ValidationError(QuantumGraphError):
    exit_code = 1


class NumericalCheckError(QuantumGraphError):
    exit_code = 2


# 图描述 / 构造

class GraphSyntaxError(ValidationError):
    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DuplicateId(ValidationError):
    pass


class UnknownVertex(ValidationError):
    pass


class UnknownEdge(ValidationError):
    pass


class DisconnectedGraph(ValidationError):
    pass


class NonpositiveLength(ValidationError):
    pass


class DirichletAtInternalVertex(ValidationError):
    pass


# 图的手术操作

class OffsetOutOfRange(ValidationError):
    pass


class PartitionNotCovering(ValidationError):
    pass


class AlphaSumMismatch(ValidationError):
    pass


class DirichletGlue(ValidationError):
    pass


class EpsilonTooLarge(ValidationError):
    pass


# 久期函数 / 环面

class NonpositiveK(ValidationError):
    pass


class RobinNotSupportedOnTorus(ValidationError):
    pass


class DimensionTooLarge(ValidationError):
    pass


class DimensionNot3(ValidationError):
    pass


class ResolutionTooLow(ValidationError):
    pass


# 特征函数 / 一般性

class CoordinateOutOfRange(ValidationError):
    pass


class CircleExcluded(ValidationError):
    pass


class InvalidThetaPath(ValidationError):
    pass


class IoError(ValidationError):
    pass


class UsageError(ValidationError):
    pass


# 数值自检

class WeylCountMismatch(NumericalCheckError):
    def __init__(self, found: int, expected: float, tolerance: float):
        super().__init__(
            f"found {found} eigenvalues, Weyl estimate {expected:.3f} +/- {tolerance:.0f}"
        )
        self.found = found
        self.expected = expected
        self.tolerance = tolerance


class NoConvergence(NumericalCheckError):
    pass


class NullSpaceDimensionMismatch(NumericalCheckError):
    pass


class NoPointFound(NumericalCheckError):
    pass


class PathThroughDegeneracy(NumericalCheckError):
    pass


class MixedSignAtSmoothCell(NumericalCheckError):
    pass


class CheckFailed(NumericalCheckError):
    """计算结果违反了必然成立的界，例如负特征值个数超过负系数顶点数"""
