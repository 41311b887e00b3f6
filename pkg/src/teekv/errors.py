"""Error types and the numeric return-code space shared by both worlds."""

import enum


class ReturnCode(enum.IntEnum):
    SUCCESS = 0x00000000
    ACCESS_DENIED = 0xFFFF0001
    ACCESS_CONFLICT = 0xFFFF0003
    BAD_PARAMETERS = 0xFFFF0006
    ITEM_NOT_FOUND = 0xFFFF0008
    OUT_OF_MEMORY = 0xFFFF000C
    SHORT_BUFFER = 0xFFFF0010
    TARGET_DEAD = 0xFFFF3024
    STORAGE_NO_SPACE = 0xFFFF3041
    CORRUPT_OBJECT = 0xF0100001
    GENERIC = 0xFFFF0000


class TeeError(Exception):
    """Base class; ``code`` is what a TA returns when it raises this."""

    code = ReturnCode.GENERIC

    def __init__(self, message="", code=None):
        super().__init__(message or self.__class__.__name__)
        if code is not None:
            self.code = code


class BadParameters(TeeError):
    code = ReturnCode.BAD_PARAMETERS


class ItemNotFound(TeeError):
    code = ReturnCode.ITEM_NOT_FOUND


class OutOfMemory(TeeError):
    code = ReturnCode.OUT_OF_MEMORY


class ShortBuffer(TeeError):
    code = ReturnCode.SHORT_BUFFER

    def __init__(self, message="", required=0):
        super().__init__(message)
        self.required = required


class AccessDenied(TeeError):
    code = ReturnCode.ACCESS_DENIED


class AccessConflict(TeeError):
    code = ReturnCode.ACCESS_CONFLICT


class CorruptObject(TeeError):
    code = ReturnCode.CORRUPT_OBJECT


class QuotaExceeded(TeeError):
    code = ReturnCode.STORAGE_NO_SPACE


class TargetDead(TeeError):
    code = ReturnCode.TARGET_DEAD


class TaPanicked(TargetDead):
    """The TA raised something that is not a TeeError; its instance is gone."""


class TaNotFound(ItemNotFound):
    pass


class StaleHandle(TeeError):
    """A context, session or shared-memory handle was used after release."""

    code = ReturnCode.BAD_PARAMETERS


class UnknownDevice(ItemNotFound):
    pass


class DuplicateUuid(TeeError):
    code = ReturnCode.ACCESS_CONFLICT


class PathViolation(AccessDenied):
    pass


class StorageIoError(TeeError):
    pass


class ConfigError(ValueError):
    pass
