"""HTTP API for the discovery service.

Lookup follows the service's published path and query-parameter names;
profile management requires a bearer token mapped to a local account.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from imads.discovery.engine import DiscoveryEngine, DiscoveryError, ForbiddenError, Profile, QueryContext
from imads.errors import NotFoundError


def create_discovery_app(engine: DiscoveryEngine, tokens: Optional[dict[str, str]] = None) -> FastAPI:
    """tokens maps bearer token -> account id; accounts are provisioned
    on the engine. Anonymous lookup is allowed; management is not."""
    app = FastAPI(title=f"discovery {engine.instance_id}")
    tokens = tokens or {}

    class BadToken(Exception):
        pass

    def requester_of(request: Request) -> Optional[str]:
        header = request.headers.get("authorization", "")
        if not header:
            return None
        if not header.lower().startswith("bearer "):
            raise BadToken()
        account = tokens.get(header[7:].strip())
        if account is None:
            raise BadToken()
        return account

    @app.get("/discovery/rest/discover/lookup")
    def lookup(request: Request):
        searchquery = request.query_params.get("searchquery", "")
        try:
            requester = requester_of(request)
            response = engine.search(
                QueryContext(
                    requester=requester,
                    raw_query=searchquery.replace("+", " "),
                    resolve_live=request.query_params.get("resolveLive") in ("1", "true"),
                )
            )
        except BadToken:
            return JSONResponse({"error": "invalid bearer token"}, status_code=401)
        except DiscoveryError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return JSONResponse(response)

    @app.post("/discovery/rest/profiles")
    async def publish(request: Request):
        try:
            requester = requester_of(request)
        except BadToken:
            return JSONResponse({"error": "invalid bearer token"}, status_code=401)
        if requester is None:
            return JSONResponse({"error": "authentication required"}, status_code=401)
        body = await request.json()
        profile = Profile(
            owner_account=requester,
            headline=body.get("headline", ""),
            description=body.get("description", ""),
            hashtags=body.get("hashtags", []),
            contacts=body.get("contacts", []),
            guid=body.get("guid"),
            visibility=body.get("visibility", "public"),
            favorites=set(body.get("favorites", [])),
        )
        try:
            profile_id = engine.publish_profile(requester, profile)
        except DiscoveryError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return JSONResponse({"profileID": profile_id}, status_code=201)

    @app.delete("/discovery/rest/profiles/{profile_id}")
    def unpublish(profile_id: str, request: Request):
        try:
            requester = requester_of(request)
            if requester is None:
                return JSONResponse({"error": "authentication required"}, status_code=401)
            engine.unpublish_profile(requester, profile_id)
        except BadToken:
            return JSONResponse({"error": "invalid bearer token"}, status_code=401)
        except ForbiddenError as exc:
            return JSONResponse({"error": str(exc)}, status_code=403)
        except NotFoundError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        return JSONResponse({"deleted": profile_id})

    @app.put("/discovery/rest/profiles/{profile_id}/visibility")
    async def visibility(profile_id: str, request: Request):
        body = await request.json()
        try:
            requester = requester_of(request)
            if requester is None:
                return JSONResponse({"error": "authentication required"}, status_code=401)
            favorites = set(body["favorites"]) if "favorites" in body else None
            engine.set_visibility(requester, profile_id, body.get("visibility", ""), favorites)
        except BadToken:
            return JSONResponse({"error": "invalid bearer token"}, status_code=401)
        except ForbiddenError as exc:
            return JSONResponse({"error": str(exc)}, status_code=403)
        except NotFoundError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except DiscoveryError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return JSONResponse({"profileID": profile_id})

    return app
