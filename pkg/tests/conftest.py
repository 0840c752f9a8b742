"""Shared test configuration.

Every test runs with socket connections disabled so the suite can never
reach the network by accident; the scripted backend and httpx.MockTransport
cover everything. Tests marked `live` opt out and are skipped unless the
caller provides real endpoint credentials.
"""

import socket

import pytest

_REAL_CONNECT = socket.socket.connect
_REAL_CONNECT_EX = socket.socket.connect_ex


def _refuse(self, address):
    raise RuntimeError(f"test attempted a network connection to {address!r}")


@pytest.fixture(autouse=True)
def no_network(request):
    if "live" in request.keywords:
        yield
        return
    socket.socket.connect = _refuse
    socket.socket.connect_ex = _refuse
    try:
        yield
    finally:
        socket.socket.connect = _REAL_CONNECT
        socket.socket.connect_ex = _REAL_CONNECT_EX
