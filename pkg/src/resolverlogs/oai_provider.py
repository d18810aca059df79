"""OAI-PMH 2.0 data provider over the event store.

The repository exposes usage events as ContextObject records under the
single metadata prefix `resolver_logs`: the OAI identifier is the event
UUID URN, the OAI datestamp is the upload datestamp, there is no set
structure, and harvested records are not re-exposed unless explicitly
configured. Flow control uses stateless, HMAC-signed resumption tokens so
harvesting survives provider restarts.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import json
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable

from .model import format_timestamp, parse_timestamp, utc_now
from .store import LOCAL, EventStore

__all__ = [
    "OAI_NS",
    "METADATA_PREFIX",
    "FORMAT_URI",
    "RepositoryConfig",
    "TokenState",
    "encode_resumption_token",
    "decode_resumption_token",
    "TokenError",
    "OaiProvider",
]

OAI_NS = "http://www.openarchives.org/OAI/2.0/"
OAI_SCHEMA = "http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd"
METADATA_PREFIX = "resolver_logs"
FORMAT_URI = "info:ofi/fmt:xml:xsd:ctx"
FORMAT_SCHEMA = "http://www.openurl.info/registry/docs/xsd/info:ofi/fmt:xml:xsd:ctx"

DAY = "day"
SECONDS = "seconds"

_ARG_NAMES = {"identifier", "metadataPrefix", "from", "until", "set", "resumptionToken"}
_LEGAL_ARGS = {
    "Identify": frozenset(),
    "ListMetadataFormats": frozenset({"identifier"}),
    "ListSets": frozenset({"resumptionToken"}),
    "GetRecord": frozenset({"identifier", "metadataPrefix"}),
    "ListIdentifiers": frozenset({"from", "until", "metadataPrefix", "set", "resumptionToken"}),
    "ListRecords": frozenset({"from", "until", "metadataPrefix", "set", "resumptionToken"}),
}


@dataclass
class RepositoryConfig:
    repository_name: str = "Usage log repository"
    base_url: str = "http://localhost:8080/oai"
    admin_email: str = "admin@example.org"
    granularity: str = SECONDS  # "day" or "seconds"
    page_size: int = 500
    expose_harvested: bool = False
    token_secret: bytes = b""
    token_ttl_hours: float = 24.0

    def __post_init__(self):
        if self.page_size < 1:
            raise ValueError("page_size must be >= 1")
        if self.granularity not in (DAY, SECONDS):
            raise ValueError("granularity must be 'day' or 'seconds'")
        if not self.base_url.startswith(("http://", "https://")):
            raise ValueError("base_url must be an absolute HTTP(S) URL")
        if not self.token_secret:
            self.token_secret = secrets.token_bytes(32)


@dataclass(frozen=True)
class TokenState:
    """Decoded resumption token: a store cursor plus the frozen request
    window and list size."""

    verb: str
    cursor: str
    from_: str | None
    until: str | None
    issued_at: str
    expiry: str
    complete_list_size: int
    position: int


class TokenError(ValueError):
    """Expired, tampered or unparsable resumption token."""


def _sign(secret: bytes, payload: bytes) -> str:
    return hmac.new(secret, payload, hashlib.sha256).hexdigest()[:24]


def encode_resumption_token(state: TokenState, secret: bytes) -> str:
    payload = json.dumps(
        {
            "v": state.verb,
            "c": state.cursor,
            "f": state.from_,
            "u": state.until,
            "i": state.issued_at,
            "x": state.expiry,
            "s": state.complete_list_size,
            "p": state.position,
        },
        separators=(",", ":"),
    ).encode("ascii")
    body = base64.urlsafe_b64encode(payload).decode("ascii").rstrip("=")
    return f"{body}.{_sign(secret, payload)}"


def decode_resumption_token(token: str, secret: bytes, now: datetime) -> TokenState:
    """Inverse of encode; fails closed on tampering or expiry."""
    try:
        body, signature = token.rsplit(".", 1)
        payload = base64.urlsafe_b64decode(body + "=" * (-len(body) % 4))
    except (ValueError, binascii.Error) as exc:
        raise TokenError(f"unparsable token: {exc}") from exc
    if not hmac.compare_digest(_sign(secret, payload), signature):
        raise TokenError("token signature mismatch")
    try:
        data = json.loads(payload)
        state = TokenState(
            verb=data["v"],
            cursor=data["c"],
            from_=data["f"],
            until=data["u"],
            issued_at=data["i"],
            expiry=data["x"],
            complete_list_size=int(data["s"]),
            position=int(data["p"]),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise TokenError(f"malformed token payload: {exc}") from exc
    if parse_timestamp(state.expiry) < now:
        raise TokenError("token expired")
    return state


def _xml_escape(text: str, attr: bool = False) -> str:
    text = text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    if attr:
        text = text.replace('"', "&quot;")
    return text


class OaiProvider:
    """Stateless request handler implementing all six OAI-PMH verbs."""

    def __init__(
        self,
        store: EventStore,
        config: RepositoryConfig,
        clock: Callable[[], datetime] = utc_now,
    ):
        self.store = store
        self.config = config
        self.clock = clock

    # -- public entry --------------------------------------------------------

    def handle_oai_request(
        self, verb: str | None, params: dict[str, str] | dict[str, list[str]]
    ) -> tuple[str, int]:
        """Serve one protocol request; returns (XML response, HTTP status).

        Protocol errors are returned as OAI error elements with status 200;
        the response is never malformed.
        """
        args, repeated = _normalize_params(params)
        args.pop("verb", None)
        try:
            if verb not in _LEGAL_ARGS:
                return self._error_response(None, {}, "badVerb", f"unknown verb: {verb!r}"), 200
            if repeated:
                return (
                    self._error_response(None, {}, "badArgument", f"repeated argument: {sorted(repeated)[0]}"),
                    200,
                )
            illegal = set(args) - _LEGAL_ARGS[verb]
            if illegal:
                return (
                    self._error_response(None, {}, "badArgument", f"illegal argument for {verb}: {sorted(illegal)[0]}"),
                    200,
                )
            handler = getattr(self, f"_handle_{verb.lower()}")
            return handler(args), 200
        except _ProtocolError as err:
            bare = err.code in ("badVerb", "badArgument")
            return (
                self._error_response(
                    None if bare else verb, {} if bare else args, err.code, str(err)
                ),
                200,
            )

    # -- verb handlers -------------------------------------------------------

    def _handle_identify(self, args: dict[str, str]) -> str:
        earliest = self.store.min_datestamp()
        granularity = "YYYY-MM-DD" if self.config.granularity == DAY else "YYYY-MM-DDThh:mm:ssZ"
        body = (
            f"<repositoryName>{_xml_escape(self.config.repository_name)}</repositoryName>"
            f"<baseURL>{_xml_escape(self.config.base_url)}</baseURL>"
            f"<protocolVersion>2.0</protocolVersion>"
            f"<adminEmail>{_xml_escape(self.config.admin_email)}</adminEmail>"
            f"<earliestDatestamp>{self._datestamp(earliest) if earliest else self._datestamp(datetime(1970, 1, 1, tzinfo=timezone.utc))}</earliestDatestamp>"
            f"<deletedRecord>no</deletedRecord>"
            f"<granularity>{granularity}</granularity>"
        )
        return self._response("Identify", args, f"<Identify>{body}</Identify>")

    def _handle_listmetadataformats(self, args: dict[str, str]) -> str:
        identifier = args.get("identifier")
        if identifier is not None and not self._visible(identifier):
            raise _ProtocolError("idDoesNotExist", f"unknown identifier: {identifier}")
        body = (
            "<ListMetadataFormats><metadataFormat>"
            f"<metadataPrefix>{METADATA_PREFIX}</metadataPrefix>"
            f"<schema>{_xml_escape(FORMAT_SCHEMA)}</schema>"
            f"<metadataNamespace>{_xml_escape(FORMAT_URI)}</metadataNamespace>"
            "</metadataFormat></ListMetadataFormats>"
        )
        return self._response("ListMetadataFormats", args, body)

    def _handle_listsets(self, args: dict[str, str]) -> str:
        raise _ProtocolError("noSetHierarchy", "this repository does not provide sets")

    def _handle_getrecord(self, args: dict[str, str]) -> str:
        identifier = args.get("identifier")
        prefix = args.get("metadataPrefix")
        if identifier is None or prefix is None:
            raise _ProtocolError("badArgument", "GetRecord requires identifier and metadataPrefix")
        if prefix != METADATA_PREFIX:
            raise _ProtocolError("cannotDisseminateFormat", f"unsupported metadataPrefix: {prefix}")
        record = self._visible(identifier)
        if record is None:
            raise _ProtocolError("idDoesNotExist", f"unknown identifier: {identifier}")
        return self._response("GetRecord", args, f"<GetRecord>{self._record_xml(record)}</GetRecord>")

    def _handle_listidentifiers(self, args: dict[str, str]) -> str:
        return self._list(args, "ListIdentifiers", headers_only=True)

    def _handle_listrecords(self, args: dict[str, str]) -> str:
        return self._list(args, "ListRecords", headers_only=False)

    # -- list machinery ------------------------------------------------------

    def _list(self, args: dict[str, str], verb: str, headers_only: bool) -> str:
        if args.get("set") is not None:
            raise _ProtocolError("noSetHierarchy", "this repository does not provide sets")
        token_text = args.get("resumptionToken")
        size_hint = None
        position = 0
        if token_text is not None:
            if len(args) > 1:
                raise _ProtocolError("badArgument", "resumptionToken is an exclusive argument")
            try:
                state = decode_resumption_token(token_text, self.config.token_secret, self.clock())
            except TokenError as exc:
                raise _ProtocolError("badResumptionToken", str(exc)) from exc
            if state.verb != verb:
                raise _ProtocolError("badResumptionToken", f"token was issued for {state.verb}")
            from_ = parse_timestamp(state.from_) if state.from_ else None
            until = parse_timestamp(state.until) if state.until else None
            cursor = state.cursor
            size_hint = state.complete_list_size
            position = state.position
        else:
            prefix = args.get("metadataPrefix")
            if prefix is None:
                raise _ProtocolError("badArgument", f"{verb} requires metadataPrefix")
            if prefix != METADATA_PREFIX:
                raise _ProtocolError("cannotDisseminateFormat", f"unsupported metadataPrefix: {prefix}")
            from_, until = self._parse_window(args.get("from"), args.get("until"))
            cursor = None

        provenance = None if self.config.expose_harvested else LOCAL
        page = self.store.range_by_datestamp(
            from_=from_,
            until=until,
            provenance_filter=provenance,
            cursor=cursor,
            limit=self.config.page_size,
        )
        if not page.records and token_text is None:
            raise _ProtocolError("noRecordsMatch", "no records in the requested window")
        complete = size_hint if size_hint is not None else page.complete_size

        parts = [f"<{verb}>"]
        for record in page.records:
            parts.append(self._header_xml(record) if headers_only else self._record_xml(record))
        if page.next_cursor is not None:
            state = TokenState(
                verb=verb,
                cursor=page.next_cursor,
                from_=format_timestamp(from_) if from_ else None,
                until=format_timestamp(until) if until else None,
                issued_at=format_timestamp(self.clock()),
                expiry=format_timestamp(
                    self.clock() + timedelta(hours=self.config.token_ttl_hours)
                ),
                complete_list_size=complete,
                position=position + len(page.records),
            )
            token = encode_resumption_token(state, self.config.token_secret)
            parts.append(
                f'<resumptionToken completeListSize="{complete}" cursor="{position}">'
                f"{_xml_escape(token)}</resumptionToken>"
            )
        elif token_text is not None:
            # closing an incomplete-list sequence: empty resumptionToken
            parts.append(f'<resumptionToken completeListSize="{complete}" cursor="{position}"/>')
        parts.append(f"</{verb}>")
        return self._response(verb, args, "".join(parts))

    def _parse_window(
        self, from_text: str | None, until_text: str | None
    ) -> tuple[datetime | None, datetime | None]:
        def parse(text: str, is_until: bool) -> tuple[datetime, str]:
            if len(text) == 10:
                try:
                    day = datetime.strptime(text, "%Y-%m-%d").replace(tzinfo=timezone.utc)
                except ValueError as exc:
                    raise _ProtocolError("badArgument", f"bad datestamp: {text!r}") from exc
                return (day.replace(hour=23, minute=59, second=59) if is_until else day), DAY
            if self.config.granularity == DAY:
                raise _ProtocolError(
                    "badArgument", "this repository only supports day granularity"
                )
            try:
                return parse_timestamp(text), SECONDS
            except ValueError as exc:
                raise _ProtocolError("badArgument", f"bad datestamp: {text!r}") from exc

        from_ = until = None
        granularities = set()
        if from_text is not None:
            from_, g = parse(from_text, is_until=False)
            granularities.add(g)
        if until_text is not None:
            until, g = parse(until_text, is_until=True)
            granularities.add(g)
        if len(granularities) > 1:
            raise _ProtocolError("badArgument", "from and until granularities differ")
        if from_ is not None and until is not None and from_ > until:
            raise _ProtocolError("badArgument", "from is later than until")
        return from_, until

    # -- record rendering ----------------------------------------------------

    def _visible(self, identifier: str):
        record = self.store.get_by_uuid(identifier)
        if record is None:
            return None
        if not record.is_local and not self.config.expose_harvested:
            return None
        return record

    def _datestamp(self, dt: datetime) -> str:
        if self.config.granularity == DAY:
            return dt.strftime("%Y-%m-%d")
        return format_timestamp(dt)

    def _header_xml(self, record) -> str:
        return (
            "<header>"
            f"<identifier>{_xml_escape(record.event.event_id)}</identifier>"
            f"<datestamp>{self._datestamp(record.upload_datestamp)}</datestamp>"
            "</header>"
        )

    def _record_xml(self, record) -> str:
        # The stored XML is canonical and single-line; strip the declaration
        # and embed the context-object element as the metadata payload.
        payload = record.xml.split("?>", 1)[1]
        return f"<record>{self._header_xml(record)}<metadata>{payload}</metadata></record>"

    # -- response envelope ---------------------------------------------------

    def _response(self, verb: str, args: dict[str, str], body: str) -> str:
        return self._envelope(self._request_element(verb, args) + body)

    def _error_response(
        self, verb: str | None, args: dict[str, str], code: str, message: str
    ) -> str:
        request = self._request_element(verb, args if verb else {})
        return self._envelope(
            request + f'<error code="{code}">{_xml_escape(message)}</error>'
        )

    def _request_element(self, verb: str | None, args: dict[str, str]) -> str:
        attrs = ""
        if verb is not None:
            attrs = f' verb="{_xml_escape(verb, attr=True)}"'
            for name in ("identifier", "metadataPrefix", "from", "until", "set", "resumptionToken"):
                value = args.get(name)
                if value is not None:
                    attrs += f' {name}="{_xml_escape(value, attr=True)}"'
        return f"<request{attrs}>{_xml_escape(self.config.base_url)}</request>"

    def _envelope(self, content: str) -> str:
        return (
            '<?xml version="1.0" encoding="UTF-8"?>'
            f'<OAI-PMH xmlns="{OAI_NS}"'
            ' xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"'
            f' xsi:schemaLocation="{OAI_NS} {OAI_SCHEMA}">'
            f"<responseDate>{format_timestamp(self.clock())}</responseDate>"
            f"{content}"
            "</OAI-PMH>"
        )


class _ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _normalize_params(
    params: dict[str, str] | dict[str, list[str]]
) -> tuple[dict[str, str], set[str]]:
    args: dict[str, str] = {}
    repeated: set[str] = set()
    for key, value in params.items():
        if isinstance(value, list):
            if len(value) > 1:
                repeated.add(key)
            args[key] = value[0] if value else ""
        else:
            args[key] = value
    return args, repeated
