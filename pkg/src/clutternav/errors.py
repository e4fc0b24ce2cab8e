"""Exception types shared across the toolkit."""


class ClutterNavError(Exception):
    """Base class for all toolkit errors."""


class UnknownIdError(ClutterNavError, KeyError):
    """Requested object id is not present in the scene."""


class IdMismatchError(ClutterNavError, ValueError):
    """Pre/post centroid maps do not describe the same object set."""


class EmptySceneError(ClutterNavError, ValueError):
    """Scene has no renderable extent."""


class TooFewPointsError(ClutterNavError, ValueError):
    """Not enough points to fit a box."""


class EmptyListError(ClutterNavError, ValueError):
    """Feature extraction requires at least one object."""


class StateOverflowError(ClutterNavError, ValueError):
    """More objects than the padded state can hold."""


class MaskedActionError(ClutterNavError, ValueError):
    """Action refers to a masked (absent) state row."""


class MaskedRowError(ClutterNavError, ValueError):
    """Attribution requested for a masked state row."""


class MaskedTargetError(ClutterNavError, ValueError):
    """Target row is masked; scores cannot be computed."""


class NoValidRowsError(ClutterNavError, ValueError):
    """State has no valid rows left to act on."""


class InsufficientDataError(ClutterNavError, ValueError):
    """Replay buffer holds fewer transitions than one batch."""


class LengthMismatchError(ClutterNavError, ValueError):
    """Score vectors have different lengths."""
