"""Byte transports for frames: an in-memory duplex pipe and loopback TCP."""

from __future__ import annotations

import queue
import socket
import threading

import numpy as np

from ..cipher import CipherConfig
from ..errors import ProtocolError
from .session import DELIVERED, FAILED, PROTOCOL_CONFIG, DeviceNode, Provider
from .wire import FrameDecoder, encode_frame


class Endpoint:
    """Send raw frame bytes, receive one whole frame at a time."""

    timeout = 30.0

    def __init__(self):
        self._decoder = FrameDecoder()
        self._ready = []

    def _send_bytes(self, data: bytes):
        raise NotImplementedError

    def _recv_bytes(self) -> bytes:
        raise NotImplementedError

    def send(self, frame: bytes):
        self._send_bytes(frame)

    def recv(self) -> bytes:
        while not self._ready:
            chunk = self._recv_bytes()
            if not chunk:
                raise ProtocolError("connection-closed")
            self._ready.extend(self._decoder.feed(chunk))
        t, fields = self._ready.pop(0)
        return encode_frame(t, fields)

    def close(self):
        pass


class MemoryEndpoint(Endpoint):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, rng: np.random.Generator | None = None):
        super().__init__()
        self._in, self._out, self._rng = inbox, outbox, rng

    def _send_bytes(self, data: bytes):
        # optional random fragmentation exercises the reassembly path
        if self._rng is None:
            self._out.put(data)
            return
        pos = 0
        while pos < len(data):
            step = int(self._rng.integers(1, 64))
            self._out.put(data[pos:pos + step])
            pos += step

    def _recv_bytes(self) -> bytes:
        try:
            return self._in.get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolError("timeout") from None

    def close(self):
        self._out.put(b"")


def memory_pair(fragment_rng: np.random.Generator | None = None):
    a, b = queue.Queue(), queue.Queue()
    return MemoryEndpoint(a, b, fragment_rng), MemoryEndpoint(b, a, fragment_rng)


class SocketEndpoint(Endpoint):
    def __init__(self, sock: socket.socket):
        super().__init__()
        self.sock = sock
        sock.settimeout(self.timeout)

    def _send_bytes(self, data: bytes):
        self.sock.sendall(data)

    def _recv_bytes(self) -> bytes:
        return self.sock.recv(65536)

    def close(self):
        self.sock.close()


def serve_deployment(provider: Provider, ep: Endpoint, model, cfg: CipherConfig = PROTOCOL_CONFIG):
    """Provider side of one session; returns the finished session."""
    s = provider.session()
    ep.send(s.handle_request(ep.recv()))
    if s.phase == FAILED:
        return s
    reply = s.handle_reply(ep.recv(), model, cfg)
    if reply is not None:
        ep.send(reply)
    return s


def request_deployment(device: DeviceNode, ep: Endpoint):
    """Device side of one session; returns ``(model or None, session)``."""
    s = device.session()
    ep.send(s.request())
    try:
        m3 = s.verify_and_reply(ep.recv())
    except ProtocolError:
        return None, s
    ep.send(m3)
    if s.phase == FAILED:
        return None, s
    try:
        return s.receive_model(ep.recv()), s
    except ProtocolError:
        return None, s


def deploy(provider: Provider, device: DeviceNode, model, cfg: CipherConfig = PROTOCOL_CONFIG,
           transport: str = "memory", fragment_rng: np.random.Generator | None = None):
    """Run provider and device in two threads over ``transport`` (``memory`` or ``tcp``).

    Returns ``(model or None, outcome)`` where outcome is ``"delivered"`` or
    the failure reason.
    """
    result = {}

    def provider_side(ep):
        try:
            result["provider"] = serve_deployment(provider, ep, model, cfg)
        except Exception as exc:  # surfaced to the caller below
            result["error"] = exc
        finally:
            ep.close()

    if transport == "memory":
        dev_ep, prov_ep = memory_pair(fragment_rng)
        th = threading.Thread(target=provider_side, args=(prov_ep,), daemon=True)
        th.start()
        got, ds = request_deployment(device, dev_ep)
    elif transport == "tcp":
        server = socket.create_server(("127.0.0.1", 0))
        port = server.getsockname()[1]

        def accept():
            conn, _ = server.accept()
            provider_side(SocketEndpoint(conn))

        th = threading.Thread(target=accept, daemon=True)
        th.start()
        dev_ep = SocketEndpoint(socket.create_connection(("127.0.0.1", port)))
        try:
            got, ds = request_deployment(device, dev_ep)
        finally:
            dev_ep.close()
            th.join(Endpoint.timeout)
            server.close()
    else:
        raise ValueError(f"unknown transport {transport!r}")
    th.join(Endpoint.timeout)
    if "error" in result:
        raise result["error"]
    if ds.phase == DELIVERED:
        return got, DELIVERED
    ps = result.get("provider")
    reason = ds.reason or (ps.reason if ps is not None else None) or "failed"
    return None, reason
