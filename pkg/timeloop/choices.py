from enum import Enum


class Scheme(str, Enum):
    BE = "be"
    BDF2 = "bdf2"
    STATIC = "static"
