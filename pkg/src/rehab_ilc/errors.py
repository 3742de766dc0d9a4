"""Exception types raised across the simulator."""


class InvalidSpecError(ValueError):
    pass


class IncompatibleTrajectoryError(ValueError):
    pass


class UnsupportedRegimeError(ValueError):
    pass


class InvalidTopologyError(ValueError):
    pass


class InvalidLesionError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Raised when a time-stepping loop produces a non-finite value.

    ``step`` is the sample index at which the first non-finite value
    appeared; ``context`` carries optional tags (seed, trial) added by callers.
    """

    def __init__(self, what, step, **context):
        self.what = what
        self.step = int(step)
        self.context = dict(context)
        tags = "".join(f", {k}={v}" for k, v in sorted(context.items()))
        super().__init__(f"{what} diverged at step {self.step}{tags}")

    def tagged(self, **context):
        merged = {**self.context, **context}
        return DivergenceError(self.what, self.step, **merged)


class TrainingStalledError(RuntimeError):
    """Levenberg-Marquardt could not accept a step even at maximum damping."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report
