# coding: utf-8


class GradingException(Exception):
    def __init__(self, message):
        super(GradingException, self).__init__(message)
        self.message = message


class ProcessException(GradingException):
    '''A pipeline stage failed for a reason other than bad input.'''


class InputError(GradingException):
    '''Bad user input: unreadable files, invalid values.'''


class MaskFormatError(InputError):
    MALFORMED_HEADER = 'malformed header'
    TRUNCATED_PAYLOAD = 'truncated payload'
    MAXVAL = 'maxval exceeds 255'
    ZERO_DIMENSION = 'zero dimension'
    BAD_SAMPLE = 'bad sample'

    def __init__(self, path, offset, kind, detail=None):
        message = '{}: {} at byte offset {}'.format(path, kind, offset)
        if detail:
            message = '{} ({})'.format(message, detail)
        super(MaskFormatError, self).__init__(message)
        self.path = path
        self.offset = offset
        self.kind = kind


class ManifestError(InputError):
    pass


class FeatureFileError(InputError):
    pass


class ThresholdError(InputError):
    pass


class ModeMismatchError(InputError):
    pass


class ModelFormatError(InputError):
    pass


class ShapeError(ModelFormatError):
    pass


class ParseError(InputError):
    pass


class EvaluationError(InputError):
    pass


class PackingError(InputError):
    pass
