from colossalai.logging import get_dist_logger

LOGGER_NAME = "polymer_lab"


def get_logger():
    """
    Return the package logger.

    Every module logs through the same colossalai ``DistributedLogger`` so that a
    single ``log_to_file`` call in the run harness captures the whole run.
    """
    return get_dist_logger(LOGGER_NAME)
