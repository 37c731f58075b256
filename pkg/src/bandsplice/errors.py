"""Exception types shared by the estimation pipeline."""


class PipelineError(RuntimeError):
    """A stage could not produce an estimate for this realization.

    The benchmark harness records these as failed trials instead of aborting.
    """

    tag = "pipeline"
