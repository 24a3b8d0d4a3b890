"""Exception types shared across the package."""


class SimulationDiverged(RuntimeError):
    """Integrator produced a non-finite state.

    ``time_index`` is the index of the first bad sample in the run.
    """

    def __init__(self, time_index: int):
        super().__init__(f"simulation diverged at sample {time_index}")
        self.time_index = time_index


class SingularPosture(ValueError):
    """Endpoint Jacobian is (numerically) singular at the queried posture."""


class CalibrationFailed(RuntimeError):
    """Threshold calibration produced no usable rewards."""
