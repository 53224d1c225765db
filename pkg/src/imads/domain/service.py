"""HTTP API for the domain registry.

UserIDs and instance URLs are URI schemes themselves, so both path
segments arrive percent-encoded; routing happens on the raw request path
because ASGI servers decode %2F before standard route matching.
"""

from __future__ import annotations

import threading
from urllib.parse import unquote

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from imads.domain.registry import DomainRegistry, RegistrationError
from imads.errors import NotFoundError

DEFAULT_WATCH_TIMEOUT_S = 30.0


def _raw_segments(request: Request) -> list[str]:
    raw = request.scope.get("raw_path") or request.url.path.encode()
    path = raw.decode("latin-1").split("?", 1)[0]
    prefix = "/hyperty/user/"
    assert path.startswith(prefix)
    return [unquote(seg) for seg in path[len(prefix) :].split("/") if seg]


def create_domain_registry_app(registry: DomainRegistry) -> FastAPI:
    app = FastAPI(title=f"domain-registry {registry.provider}".strip())

    def _instances_payload(user_id: str, cap: str | None, include_disconnected: bool):
        caps = [c for c in (cap or "").split(",") if c]
        instances = registry.query_user(
            user_id, capability_filter=caps or None, include_disconnected=include_disconnected
        )
        now = registry.clock()
        return [inst.to_obj(now, registry.retention_s) for inst in instances]

    @app.api_route("/hyperty/user/{rest:path}", methods=["GET", "PUT", "POST"])
    async def dispatch(rest: str, request: Request):
        segments = _raw_segments(request)
        method = request.method
        try:
            if method == "GET" and len(segments) == 1:
                payload = _instances_payload(
                    segments[0],
                    request.query_params.get("cap"),
                    request.query_params.get("includeDisconnected") in ("1", "true"),
                )
                return JSONResponse(payload)
            if method == "PUT" and len(segments) == 2:
                body = await request.json()
                expiry = registry.register_instance(
                    segments[0],
                    segments[1],
                    capabilities=body.get("capabilities", []),
                    provider=body.get("provider"),
                    ttl=body.get("ttl"),
                )
                return JSONResponse({"leaseExpiry": expiry}, status_code=200)
            if method == "POST" and len(segments) == 3 and segments[2] == "refresh":
                expiry = registry.refresh_instance(segments[0], segments[1])
                return JSONResponse({"leaseExpiry": expiry})
            if method == "GET" and len(segments) == 3 and segments[2] == "status":
                status = registry.instance_status(segments[0], segments[1])
                return JSONResponse({"status": status})
            if method == "GET" and len(segments) == 3 and segments[2] == "watch":
                return await _watch(request, segments[0], segments[1])
        except RegistrationError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        except NotFoundError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        return JSONResponse({"error": "no such endpoint"}, status_code=404)

    async def _watch(request: Request, user_id: str, instance_url: str):
        import anyio

        timeout = float(request.query_params.get("timeout", DEFAULT_WATCH_TIMEOUT_S))
        event = threading.Event()
        handle = registry.watch_instance(user_id, instance_url, lambda uid, url: event.set())
        fired = await anyio.to_thread.run_sync(event.wait, timeout)
        if fired:
            return JSONResponse({"event": "online", "url": instance_url})
        handle.cancel()
        return Response(status_code=204)

    return app
