import pytest

from powertrace.gcode import parse_gcode


TINY_GCODE = """\
; preamble comment
M107
G0 X2 Y2 F1200
G1 Z0.2 F37.5
G1 X10 Y2 E0.4 F960
G1 X10 Y10 E0.8
G0 X4 Y4
G1 Z0.4 F37.5
G1 X4 Y10 E1.1 F960
M106 S255
G1 X10 Y10 E1.4
"""


@pytest.fixture
def tiny_program():
    """Two-layer program touching every axis, fast enough for unit tests."""
    return parse_gcode(TINY_GCODE)
