"""HTTP transport for the OAI-PMH provider (stdlib, thread-per-request)."""

from __future__ import annotations

import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .oai_provider import OaiProvider

__all__ = ["make_oai_server", "serve_oai"]

log = logging.getLogger(__name__)


def make_oai_server(provider: OaiProvider, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bind an HTTP server for the provider; port 0 picks a free port.

    Start with `server.serve_forever()` (e.g. in a thread) and stop with
    `server.shutdown()`.
    """

    class Handler(BaseHTTPRequestHandler):
        def _respond(self, params: dict[str, list[str]]) -> None:
            verb_values = params.get("verb", [])
            verb = verb_values[0] if len(verb_values) == 1 else (None if not verb_values else "")
            body, status = provider.handle_oai_request(verb, params)
            payload = body.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "text/xml; charset=utf-8")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            query = urlsplit(self.path).query
            self._respond(parse_qs(query, keep_blank_values=True))

        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length).decode("utf-8")
            self._respond(parse_qs(body, keep_blank_values=True))

        def log_message(self, fmt, *args):
            log.debug("oai-http %s - %s", self.client_address[0], fmt % args)

    return ThreadingHTTPServer((host, port), Handler)


def serve_oai(provider: OaiProvider, host: str, port: int) -> None:
    """Run the provider endpoint until interrupted."""
    server = make_oai_server(provider, host, port)
    log.info("OAI-PMH endpoint listening on http://%s:%d/", *server.server_address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
