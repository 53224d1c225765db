"""TCP transport: the same node logic over real sockets.

Each node runs a threaded server; inbound frames are handled one at a
time per connection and the node's own lock serializes state changes.
Addresses are ``host:port`` strings.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from typing import Optional

from imads.registry.messages import MessageError, encode_message, read_message
from imads.registry.node import KademliaNode

DEFAULT_TIMEOUT_S = 3.0


class TcpTransport:
    def __init__(self, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.timeout_s = timeout_s

    def request(self, sender: KademliaNode, to_address: str, message: dict) -> Optional[dict]:
        host, _, port = to_address.rpartition(":")
        try:
            with socket.create_connection((host, int(port)), timeout=self.timeout_s) as sock:
                sock.sendall(encode_message(message))
                sock.settimeout(self.timeout_s)
                return read_message(sock.recv)
        except (OSError, MessageError, ValueError):
            return None


class NodeServer:
    """Serves one node's inbound RPCs over TCP until stopped."""

    def __init__(self, node: KademliaNode, host: str = "127.0.0.1", port: int = 0):
        self.node = node

        class Handler(socketserver.BaseRequestHandler):
            def handle(handler_self):
                try:
                    message = read_message(handler_self.request.recv)
                    response = node.handle_message(message)
                    handler_self.request.sendall(encode_message(response))
                except (MessageError, OSError):
                    pass

        self._server = socketserver.ThreadingTCPServer((host, port), Handler)
        self._server.daemon_threads = True
        self.address = f"{host}:{self._server.server_address[1]}"
        node.address = self.address
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def start(self) -> "NodeServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
